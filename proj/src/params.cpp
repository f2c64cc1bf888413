#include "cenet/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cenet {

Tensor ParamSet::add(std::string name, Tensor t) {
    if (index_.contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), t);
    return t;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter '" + name + "'");
    return entries_[it->second].second;
}

void ParamSet::zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamSet::clear_grad() {
    for (auto& [name, t] : entries_) t.clear_grad();
}

void ParamSet::assign_from(const ParamSet& other) {
    if (other.size() != size()) {
        throw std::invalid_argument("ParamSet: expected " + std::to_string(size()) + " tensors, got " +
                                    std::to_string(other.size()));
    }
    for (auto& [name, t] : entries_) {
        if (!other.contains(name)) throw std::invalid_argument("ParamSet: missing parameter '" + name + "'");
        const Tensor& src = other.at(name);
        if (src.shape() != t.shape()) {
            throw std::invalid_argument("ParamSet: parameter '" + name + "' has shape " + shape_str(src.shape()) +
                                        ", expected " + shape_str(t.shape()));
        }
        auto dst = t.mutable_data();
        std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
}

std::size_t param_count(const ParamSet& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

Tensor Initializer::glorot(Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(numel(shape));
    for (double& v : values) v = rng_.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(values));
}

}  // namespace cenet
