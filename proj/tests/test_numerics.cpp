#include <catch_amalgamated.hpp>

#include <cmath>

#include "evforecast/gradcheck.hpp"
#include "evforecast/optim.hpp"
#include "evforecast/tape.hpp"

using namespace evf;

namespace {

DenseArray random_array(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
    DenseArray a = DenseArray::zeros(std::move(s));
    for (double& v : a.data) v = rng.uniform(lo, hi);
    return a;
}

}  // namespace

TEST_CASE("elementwise primitives match their definitions") {
    Tape t;
    Var r = t.relu(t.leaf(DenseArray({3}, {-1.0, 0.0, 2.0})));
    CHECK(t.value(r).data == std::vector<double>{0.0, 0.0, 2.0});

    Var s = t.sigmoid(t.leaf(DenseArray::scalar(0.0)));
    CHECK(t.value(s).data[0] == Catch::Approx(0.5));

    Var a = t.abs(t.leaf(DenseArray({3}, {-1.5, 0.0, 2.5})));
    CHECK(t.value(a).data == std::vector<double>{1.5, 0.0, 2.5});
}

TEST_CASE("matmul identity returns the operand") {
    Tape t;
    DenseArray m({2, 2}, {3.0, -1.0, 2.0, 7.0});
    Var out = t.matmul(t.leaf(DenseArray::identity(2)), t.leaf(m));
    CHECK(t.value(out).data == m.data);
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
    Tape t;
    Var a = t.leaf(DenseArray::zeros({2, 3}));
    Var b = t.leaf(DenseArray::zeros({4, 5}));
    try {
        t.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
}

TEST_CASE("backward on sum gives unit gradients") {
    ParameterStore store;
    store.create("W", DenseArray({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    Tape t;
    Var loss = t.sum(t.param(store, "W"));
    store.zero_grad();
    t.backward(loss);
    CHECK(store.grad("W").data == std::vector<double>{1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("backward on sum of squares gives 2W") {
    ParameterStore store;
    store.create("W", DenseArray({3}, {1.0, -2.0, 0.5}));
    Tape t;
    Var w = t.param(store, "W");
    Var loss = t.sum(t.hadamard(w, w));
    store.zero_grad();
    t.backward(loss);
    CHECK(store.grad("W").data == std::vector<double>{2.0, -4.0, 1.0});
}

TEST_CASE("gradients accumulate across multiple uses of a parameter") {
    ParameterStore store;
    store.create("w", DenseArray::scalar(3.0));
    Tape t;
    Var w1 = t.param(store, "w");
    Var w2 = t.param(store, "w");
    Var loss = t.sum(t.hadamard(w1, w2));  // w^2 via two bindings
    store.zero_grad();
    t.backward(loss);
    CHECK(store.grad("w").data[0] == Catch::Approx(6.0));
}

TEST_CASE("backward twice on one tape is an error") {
    ParameterStore store;
    store.create("w", DenseArray::scalar(1.0));
    Tape t;
    Var loss = t.sum(t.param(store, "w"));
    store.zero_grad();
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), std::logic_error);
}

TEST_CASE("random composite graph matches finite differences") {
    ParameterStore store;
    Rng rng(17);
    store.create("A", random_array({3, 4}, rng));
    store.create("B", random_array({4, 3}, rng));
    store.create("bias", random_array({3}, rng));
    store.create("K", random_array({2, 1, 3, 3}, rng, -0.7, 0.7));
    store.create("cb", random_array({2}, rng));
    DenseArray img = random_array({1, 1, 4, 4}, rng);

    ScalarFn f = [img](Tape& t, ParameterStore& s) {
        Var a = t.param(s, "A");
        Var b = t.param(s, "B");
        Var m = t.matmul(a, b);                          // 3x3
        Var biased = t.add_rowvec(m, t.param(s, "bias"));
        Var act = t.tanh(t.sigmoid(biased));
        Var sl = t.slice(act, 1, 0, 2);                  // 3x2
        Var sw = t.swap01(sl, 3, 2);                     // 2x3x1
        Var flat = t.reshape(sw, {6});
        Var conv = t.conv2d_same(t.leaf(img), t.param(s, "K"));
        Var cb = t.add_channel_bias(conv, t.param(s, "cb"));
        Var cflat = t.relu(t.flatten(cb));
        Var part1 = t.mean(t.abs(flat));
        Var part2 = t.mean(cflat);
        Var part3 = t.sum(t.hadamard(flat, flat));
        return t.add(t.add(part1, part2), t.scale(part3, 0.25));
    };
    double err = grad_check(f, store, 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("grad_check on sum of squares of a 3-vector") {
    ParameterStore store;
    store.create("v", DenseArray({3}, {0.3, -1.2, 2.0}));
    ScalarFn f = [](Tape& t, ParameterStore& s) {
        Var v = t.param(s, "v");
        return t.sum(t.hadamard(v, v));
    };
    CHECK(grad_check(f, store) <= 1e-7);
}

TEST_CASE("grad_check on a constant function is zero") {
    ParameterStore store;
    store.create("v", DenseArray({2}, {1.0, 2.0}));
    ScalarFn f = [](Tape& t, ParameterStore& s) {
        Var v = t.param(s, "v");
        return t.sum(t.scale(v, 0.0));
    };
    CHECK(grad_check(f, store) == 0.0);
}

TEST_CASE("conv2d_same matches a hand-rolled correlation") {
    // 1 batch, 1 channel, 3x3 input, single 3x3 kernel: center output is the
    // full dot product, corners see only the overlapping window.
    Tape t;
    DenseArray img({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    DenseArray k({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});  // identity kernel
    Var out = t.conv2d_same(t.leaf(img), t.leaf(k));
    CHECK(t.value(out).data == img.data);

    DenseArray k2({1, 1, 3, 3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});  // box sum
    Var out2 = t.conv2d_same(t.leaf(img), t.leaf(k2));
    CHECK(t.value(out2).data[4] == Catch::Approx(45.0));  // center: sum of all
    CHECK(t.value(out2).data[0] == Catch::Approx(1 + 2 + 4 + 5));  // top-left
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    ParameterStore store;
    store.create("w", DenseArray({2}, {1.5, -0.5}));
    store.zero_grad();
    AdamState adam(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    adam.step(store);
    CHECK(store.value("w").data[0] == Catch::Approx(1.5));
    CHECK(store.value("w").data[1] == Catch::Approx(-0.5));
}

TEST_CASE("adam: one hand-evaluated step") {
    // m-hat = 1, v-hat = 1 after the first step with grad 1, so the update is
    // alpha * 1 / (1 + eps) with alpha = 0.1 -> parameter 1.0 -> ~0.9.
    ParameterStore store;
    store.create("w", DenseArray::scalar(1.0));
    store.grad("w").data[0] = 1.0;
    AdamState adam(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    adam.step(store);
    CHECK(store.value("w").data[0] == Catch::Approx(0.9).margin(1e-8));
}

TEST_CASE("adam: constant gradient keeps descending") {
    ParameterStore store;
    store.create("w", DenseArray::scalar(5.0));
    AdamState adam;
    double prev = 5.0;
    for (int i = 0; i < 3; ++i) {
        store.grad("w").data[0] = 1.0;
        adam.step(store);
        CHECK(store.value("w").data[0] < prev);
        prev = store.value("w").data[0];
    }
}

TEST_CASE("sgd arithmetic") {
    ParameterStore store;
    store.create("w", DenseArray::scalar(2.0));
    store.zero_grad();
    sgd_step(store, 0.5);
    CHECK(store.value("w").data[0] == 2.0);
    store.grad("w").data[0] = 1.0;
    sgd_step(store, 0.5);
    CHECK(store.value("w").data[0] == Catch::Approx(1.5));
}

TEST_CASE("sgd and adam move in the same direction") {
    ParameterStore s1, s2;
    s1.create("w", DenseArray::scalar(1.0));
    s2.create("w", DenseArray::scalar(1.0));
    s1.grad("w").data[0] = 2.0;
    s2.grad("w").data[0] = 2.0;
    sgd_step(s1, 0.01);
    AdamState adam;
    adam.step(s2);
    CHECK(s1.value("w").data[0] < 1.0);
    CHECK(s2.value("w").data[0] < 1.0);
}

TEST_CASE("primitives are deterministic") {
    Rng rng(5);
    DenseArray a = random_array({4, 4}, rng);
    DenseArray b = random_array({4, 4}, rng);
    auto run = [&]() {
        Tape t;
        Var out = t.mean(t.tanh(t.matmul(t.leaf(a), t.leaf(b))));
        return t.value(out).data[0];
    };
    CHECK(run() == run());
}

TEST_CASE("parameter store checkpoint round-trips bit-exactly") {
    ParameterStore store;
    Rng rng(99);
    store.create("layer.W", random_array({3, 5}, rng, -7.3, 11.9));
    store.create("layer.b", random_array({5}, rng, -1e-12, 1e12));
    std::stringstream ss;
    store.save_csv(ss);
    ParameterStore loaded = ParameterStore::load_csv(ss);
    REQUIRE(loaded.size() == store.size());
    for (std::size_t i = 0; i < store.entries().size(); ++i) {
        const auto& a = store.entries()[i];
        const auto& b = loaded.entries()[i];
        CHECK(a.name == b.name);
        CHECK(a.value.shape == b.value.shape);
        CHECK(a.value.data == b.value.data);  // bit-exact
    }
}
