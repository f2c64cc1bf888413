#pragma once

#include <vector>

#include "cenet/tensor.hpp"

namespace cenet {

// Integer class map, row-major H x W.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<int> labels;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}

    int at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    int& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    bool same_shape(const LabelMap& o) const { return height == o.height && width == o.width; }
    bool operator==(const LabelMap&) const = default;
};

struct SegSample {
    Tensor image;  // 1 x Cin x H x W, values in [0, 1]
    LabelMap mask;
};

}  // namespace cenet
