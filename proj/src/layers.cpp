#include "cenet/layers.hpp"

namespace cenet {

Conv2dLayer Conv2dLayer::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t in_ch,
                                std::size_t out_ch, std::size_t kernel, ConvOptions opts, bool with_bias) {
    Conv2dLayer layer;
    layer.opts = opts;
    const std::size_t in_g = in_ch / opts.groups;
    const std::size_t taps = kernel * kernel;
    layer.weight = ps.add(prefix + ".weight", init.glorot({out_ch, in_g, kernel, kernel}, in_g * taps,
                                                          out_ch / opts.groups * taps));
    if (with_bias) layer.bias = ps.add(prefix + ".bias", init.constant({out_ch}, 0.0));
    return layer;
}

Conv2dLayer depthwise_conv(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                           std::size_t kernel, std::size_t dilation) {
    ConvOptions opts;
    opts.groups = channels;
    opts.dilation = dilation;
    opts.padding = dilation * (kernel - 1) / 2;
    return Conv2dLayer::create(ps, init, prefix, channels, channels, kernel, opts);
}

LinearLayer LinearLayer::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t in_f,
                                std::size_t out_f, bool with_bias) {
    LinearLayer layer;
    layer.weight = ps.add(prefix + ".weight", init.glorot({out_f, in_f}, in_f, out_f));
    if (with_bias) layer.bias = ps.add(prefix + ".bias", init.constant({out_f}, 0.0));
    return layer;
}

LayerNormParams LayerNormParams::create(ParamSet& ps, const std::string& prefix, std::size_t features) {
    LayerNormParams p;
    p.gain = ps.add(prefix + ".gain", Tensor({features}, 1.0));
    p.shift = ps.add(prefix + ".shift", Tensor({features}, 0.0));
    return p;
}

}  // namespace cenet
