#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <random>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "evforecast/array.hpp"
#include "evforecast/csv.hpp"

namespace evf {

/// Deterministic RNG used for all weight initialization and synthetic data.
/// Distributions are hand-rolled over mt19937_64 so streams are identical
/// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller, one value per draw pair
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t next_u64() { return gen_(); }

    /// Integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * double(n)) % n; }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Ordered collection of named trainable arrays, each with a same-shape
/// gradient slot. Iteration order is insertion order, which fixes both the
/// optimizer update order and the checkpoint layout.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        DenseArray value;
        DenseArray grad;
    };

    DenseArray& create(const std::string& name, DenseArray init) {
        if (index_.count(name))
            throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
        index_[name] = entries_.size();
        Shape s = init.shape;
        entries_.push_back(Entry{name, std::move(init), DenseArray::zeros(s)});
        return entries_.back().value;
    }

    /// Creates the entry if absent, otherwise replaces its value (re-init).
    DenseArray& assign(const std::string& name, DenseArray v) {
        auto it = index_.find(name);
        if (it == index_.end()) return create(name, std::move(v));
        Entry& e = entries_[it->second];
        e.value = std::move(v);
        e.grad = DenseArray::zeros(e.value.shape);
        return e.value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    DenseArray& value(const std::string& name) { return entry(name).value; }
    const DenseArray& value(const std::string& name) const { return entry(name).value; }
    DenseArray& grad(const std::string& name) { return entry(name).grad; }
    const DenseArray& grad(const std::string& name) const { return entry(name).grad; }

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(0.0);
    }

    /// Total number of scalar coordinates across all parameters.
    std::size_t coord_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    double sum_squares() const {
        double s = 0.0;
        for (const auto& e : entries_)
            for (double v : e.value.data) s += v * v;
        return s;
    }

    /// Checkpoint format: one record per parameter,
    ///   name,d0xd1x...,v0,v1,...
    /// with values printed to 17 significant digits so a load reproduces the
    /// stored doubles bit-exactly.
    void save_csv(std::ostream& out) const {
        for (const auto& e : entries_) {
            out << e.name << ',';
            for (std::size_t i = 0; i < e.value.shape.size(); ++i) {
                if (i) out << 'x';
                out << e.value.shape[i];
            }
            for (double v : e.value.data) out << ',' << fmt_g17(v);
            out << '\n';
        }
    }

    static ParameterStore load_csv(std::istream& in) {
        ParameterStore store;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string name, shape_field, tok;
            if (!std::getline(ss, name, ',') || !std::getline(ss, shape_field, ','))
                throw std::runtime_error("checkpoint: malformed record '" + line + "'");
            Shape shape;
            std::stringstream sh(shape_field);
            while (std::getline(sh, tok, 'x')) shape.push_back(std::stoul(tok));
            std::vector<double> values;
            values.reserve(shape_size(shape));
            while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
            store.create(name, DenseArray(shape, std::move(values)));
        }
        return store;
    }

private:
    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::invalid_argument("ParameterStore: unknown parameter '" + name + "'");
        return entries_[it->second];
    }
    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::invalid_argument("ParameterStore: unknown parameter '" + name + "'");
        return entries_[it->second];
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform Glorot initialization over [-sqrt(6/(fan_in+fan_out)), +...].
inline DenseArray glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    DenseArray a = DenseArray::zeros(std::move(shape));
    for (double& v : a.data) v = rng.uniform(-bound, bound);
    return a;
}

/// Glorot for a 2-D weight [in, out].
inline DenseArray glorot_matrix(std::size_t in, std::size_t out, Rng& rng) {
    return glorot_uniform({in, out}, in, out, rng);
}

}  // namespace evf
