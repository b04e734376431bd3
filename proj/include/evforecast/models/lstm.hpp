#pragma once

#include <string>
#include <utility>

#include "evforecast/params.hpp"
#include "evforecast/tape.hpp"

namespace evf {

/// Creates the twelve LSTM parameters under `prefix`: input projections W*
/// stored [input_dim, hidden], recurrent U* stored [hidden, hidden], biases
/// length hidden. The forget-gate bias starts at 1.0, all others at 0.
inline void init_lstm_params(ParameterStore& store, const std::string& prefix,
                             std::size_t input_dim, std::size_t hidden, Rng& rng) {
    const char* gates = "ifoc";
    for (int g = 0; g < 4; ++g) {
        std::string suffix(1, gates[g]);
        store.assign(prefix + ".W" + suffix, glorot_matrix(input_dim, hidden, rng));
        store.assign(prefix + ".U" + suffix, glorot_matrix(hidden, hidden, rng));
        store.assign(prefix + ".b" + suffix,
                     gates[g] == 'f' ? DenseArray::full({hidden}, 1.0) : DenseArray::zeros({hidden}));
    }
}

struct LstmVars {
    Var Wi, Ui, bi;
    Var Wf, Uf, bf;
    Var Wo, Uo, bo;
    Var Wc, Uc, bc;
};

inline LstmVars bind_lstm(Tape& t, ParameterStore& store, const std::string& prefix) {
    return LstmVars{
        t.param(store, prefix + ".Wi"), t.param(store, prefix + ".Ui"), t.param(store, prefix + ".bi"),
        t.param(store, prefix + ".Wf"), t.param(store, prefix + ".Uf"), t.param(store, prefix + ".bf"),
        t.param(store, prefix + ".Wo"), t.param(store, prefix + ".Uo"), t.param(store, prefix + ".bo"),
        t.param(store, prefix + ".Wc"), t.param(store, prefix + ".Uc"), t.param(store, prefix + ".bc"),
    };
}

struct LstmState {
    Var h;  // [B, H]
    Var c;  // [B, H]
};

inline LstmState lstm_zero_state(Tape& t, std::size_t batch, std::size_t hidden) {
    return LstmState{t.leaf(DenseArray::zeros({batch, hidden})),
                     t.leaf(DenseArray::zeros({batch, hidden}))};
}

/// One recurrence step over a batch of sequences. x is [B, input_dim].
///   i = sigm(x Wi + h Ui + bi)    f = sigm(x Wf + h Uf + bf)
///   o = sigm(x Wo + h Uo + bo)    c~ = tanh(x Wc + h Uc + bc)
///   c' = f (.) c + i (.) c~       h' = o (.) tanh(c')
inline LstmState lstm_step(Tape& t, const LstmVars& p, Var x, const LstmState& s) {
    auto gate = [&](Var W, Var U, Var b) {
        return t.add_rowvec(t.add(t.matmul(x, W), t.matmul(s.h, U)), b);
    };
    Var i = t.sigmoid(gate(p.Wi, p.Ui, p.bi));
    Var f = t.sigmoid(gate(p.Wf, p.Uf, p.bf));
    Var o = t.sigmoid(gate(p.Wo, p.Uo, p.bo));
    Var c_tilde = t.tanh(gate(p.Wc, p.Uc, p.bc));
    Var c_next = t.add(t.hadamard(f, s.c), t.hadamard(i, c_tilde));
    Var h_next = t.hadamard(o, t.tanh(c_next));
    return LstmState{h_next, c_next};
}

}  // namespace evf
