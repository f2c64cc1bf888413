#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cenet/tensor.hpp"

namespace cenet {

/// Ordered name -> Tensor map. Iteration follows insertion order.
class ParamSet {
public:
    using Entry = std::pair<std::string, Tensor>;

    // Registers `t` as a learnable leaf. Rejects duplicate names.
    Tensor add(std::string name, Tensor t);

    bool contains(const std::string& name) const { return index_.contains(name); }
    const Tensor& at(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad();
    void clear_grad();

    // Copies values from `other` into the existing tensors; names and shapes must match exactly.
    void assign_from(const ParamSet& other);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

std::size_t param_count(const ParamSet& params);

/// splitmix64: state += 0x9E3779B97F4A7C15, then the standard xor-shift-multiply
/// finalizer (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    // Top 53 bits scaled into [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t bound) { return static_cast<std::size_t>(next() % bound); }

private:
    std::uint64_t state_;
};

/// Deterministic parameter factory. Values depend only on the seed and the
/// order of calls.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    // Uniform in +-sqrt(6 / (fan_in + fan_out)).
    Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out);
    Tensor constant(Shape shape, double value) { return Tensor(std::move(shape), value); }

    SplitMix64& rng() { return rng_; }

private:
    SplitMix64 rng_;
};

}  // namespace cenet
