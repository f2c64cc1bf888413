#pragma once

#include <string>

#include "cenet/ops.hpp"
#include "cenet/params.hpp"

namespace cenet {

// Learnable convolution registered under `<prefix>.weight` / `<prefix>.bias`.
struct Conv2dLayer {
    Tensor weight;
    Tensor bias;
    ConvOptions opts;

    static Conv2dLayer create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t in_ch,
                              std::size_t out_ch, std::size_t kernel, ConvOptions opts = {}, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, opts); }
};

// Same-padded depthwise k x k convolution at the given dilation.
Conv2dLayer depthwise_conv(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                           std::size_t kernel, std::size_t dilation);

struct LinearLayer {
    Tensor weight;  // out x in
    Tensor bias;

    static LinearLayer create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t in_f,
                              std::size_t out_f, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNormParams {
    Tensor gain;
    Tensor shift;

    static LayerNormParams create(ParamSet& ps, const std::string& prefix, std::size_t features);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, shift); }
};

}  // namespace cenet
