#include "cenet/cfam.hpp"

#include <cmath>
#include <stdexcept>

namespace cenet {

namespace {

void require_channels(const char* op, const Tensor& f, std::size_t channels) {
    if (f.ndim() != 4 || f.dim(1) != channels) {
        throw std::invalid_argument(std::string(op) + ": input " + shape_str(f.shape()) + " does not carry " +
                                    std::to_string(channels) + " channels");
    }
}

}  // namespace

CcuParams CcuParams::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels) {
    const std::size_t hidden = std::max<std::size_t>(1, channels / kReduction);
    CcuParams p;
    p.w1 = Conv2dLayer::create(ps, init, prefix + ".w1", 3 * channels, hidden, 1);
    p.w2 = Conv2dLayer::create(ps, init, prefix + ".w2", hidden, channels, 1);
    return p;
}

Tensor ccu_gate(const Tensor& f, const CcuParams& p) {
    require_channels("ccu_forward", f, p.w2.weight.dim(0));
    const std::size_t n = f.dim(0), c = f.dim(1);
    const Tensor g = reshape(spatial_masp(f), {n, 3 * c, 1, 1});
    return reshape(sigmoid(p.w2(gelu(p.w1(g)))), {n, c});
}

Tensor ccu_forward(const Tensor& f, const CcuParams& p) { return mul_channelwise(f, ccu_gate(f, p)); }

McaSplit mca_split(std::size_t channels) {
    if (channels < 13) {
        throw std::invalid_argument("mca_split: " + std::to_string(channels) +
                                    " channels is below the minimum of 13");
    }
    for (std::size_t c4 = channels / 10; c4 >= 1; --c4) {
        if ((channels - c4) % 3 == 0) {
            const std::size_t c = (channels - c4) / 3;
            return {c, c, c, c4};
        }
    }
    throw std::invalid_argument("mca_split: no split of " + std::to_string(channels) +
                                " channels into three equal parts plus a remainder of at most floor(C/10); "
                                "use e.g. 13, 16, 19, 20, 22 or any count >= 30");
}

McaParams McaParams::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                            std::array<std::size_t, 3> dilations) {
    McaParams p;
    p.split = mca_split(channels);
    p.dilations = dilations;
    const std::size_t branch = p.split.c1;
    for (std::size_t i = 0; i < 3; ++i) {
        p.dw[i] = depthwise_conv(ps, init, prefix + ".dw" + std::to_string(i), branch, 3, dilations[i]);
    }
    p.gate_a = Conv2dLayer::create(ps, init, prefix + ".gate_a", 3 * branch + 1, channels, 1);
    p.gate_b = Conv2dLayer::create(ps, init, prefix + ".gate_b", channels, channels, 1);
    return p;
}

Tensor mca_forward(const Tensor& fp, const Tensor& f_pre_ccu, const McaParams& p) {
    if (fp.shape() != f_pre_ccu.shape()) {
        throw std::invalid_argument("mca_forward: calibrated map " + shape_str(fp.shape()) +
                                    " and residual " + shape_str(f_pre_ccu.shape()) + " differ");
    }
    const McaSplit& s = p.split;
    require_channels("mca_forward", fp, s.c1 + s.c2 + s.c3 + s.c4);
    const Tensor parts[] = {
        p.dw[0](slice_channels(fp, 0, s.c1)),
        p.dw[1](slice_channels(fp, s.c1, s.c2)),
        p.dw[2](slice_channels(fp, s.c1 + s.c2, s.c3)),
        channel_mean(slice_channels(fp, s.c1 + s.c2 + s.c3, s.c4)),
    };
    const Tensor cat = concat_channels(parts);
    return add(mul(silu(p.gate_a(cat)), silu(p.gate_b(fp))), f_pre_ccu);
}

WnlbParams WnlbParams::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels) {
    if (channels % 2 != 0) {
        throw std::invalid_argument("wnlb: channel count " + std::to_string(channels) + " must be even");
    }
    const std::size_t half = channels / 2;
    WnlbParams p;
    p.theta = Conv2dLayer::create(ps, init, prefix + ".theta", channels, half, 1);
    // A key-side bias shifts every softmax row by a constant, so phi has none.
    p.phi = Conv2dLayer::create(ps, init, prefix + ".phi", channels, half, 1, {}, false);
    p.gproj = Conv2dLayer::create(ps, init, prefix + ".g", channels, half, 1);
    p.zproj = Conv2dLayer::create(ps, init, prefix + ".z", half, channels, 1);
    p.gamma = ps.add(prefix + ".gamma", Tensor::scalar(0.0));
    return p;
}

Tensor wnlb_forward(const Tensor& f, const WnlbParams& p, Tensor* attention) {
    require_channels("wnlb_forward", f, p.zproj.weight.dim(0));
    const std::size_t h = f.dim(2), w = f.dim(3);
    const std::size_t half = p.theta.weight.dim(0);
    const Tensor th = to_tokens(p.theta(f));
    const Tensor ph = to_tokens(p.phi(f));
    const Tensor g = to_tokens(p.gproj(f));
    const Tensor attn = softmax_lastdim(
        scale(matmul_batched(th, transpose_last2(ph)), 1.0 / std::sqrt(static_cast<double>(half))));
    if (attention) *attention = attn;
    const Tensor y = p.zproj(from_tokens(matmul_batched(attn, g), h, w));
    return add(f, mul_scalar(y, p.gamma));
}

SrmParams SrmParams::create(ParamSet& ps, Initializer& init, const std::string& prefix) {
    SrmParams p;
    p.pw = Conv2dLayer::create(ps, init, prefix + ".pw", 3, 1, 1);
    ConvOptions opts;
    opts.padding = kKernel / 2;
    p.kw = Conv2dLayer::create(ps, init, prefix + ".kw", 3, 1, kKernel, opts);
    return p;
}

Tensor srm_gate(const Tensor& f, const SrmParams& p) {
    const Tensor desc = channel_masp(f);
    return sigmoid(add(p.pw(desc), p.kw(desc)));
}

Tensor srm_forward(const Tensor& f, const SrmParams& p) { return mul_spatial(f, srm_gate(f, p)); }

CfamParams CfamParams::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                              const CfamOptions& opts) {
    CfamParams p;
    p.channels = channels;
    const std::size_t hidden = opts.mlp_ratio * channels;
    if (opts.enable_ccu) p.ccu = CcuParams::create(ps, init, prefix + ".ccu", channels);
    p.mca = McaParams::create(ps, init, prefix + ".mca", channels, opts.dilations);
    if (opts.enable_wnlb) p.wnlb = WnlbParams::create(ps, init, prefix + ".wnlb", channels);
    p.norm_in = LayerNormParams::create(ps, prefix + ".norm_in", channels);
    p.mlp_in = LinearLayer::create(ps, init, prefix + ".mlp_in", channels, hidden);
    p.srm = SrmParams::create(ps, init, prefix + ".srm");
    p.norm_mid = LayerNormParams::create(ps, prefix + ".norm_mid", hidden);
    p.mlp_out = LinearLayer::create(ps, init, prefix + ".mlp_out", hidden, channels);
    return p;
}

Tensor cfam_forward(const Tensor& f, const CfamParams& p) {
    require_channels("cfam_forward", f, p.channels);
    const std::size_t h = f.dim(2), w = f.dim(3);
    const Tensor fp = p.ccu ? ccu_forward(f, *p.ccu) : f;
    const Tensor m = mca_forward(fp, f, p.mca);
    const Tensor x = p.wnlb ? wnlb_forward(m, *p.wnlb) : m;

    const Tensor hidden = gelu(p.mlp_in(p.norm_in(to_tokens(x))));
    const Tensor recal = srm_forward(from_tokens(hidden, h, w), p.srm);
    const Tensor out = p.mlp_out(p.norm_mid(to_tokens(recal)));
    return add(x, from_tokens(out, h, w));
}

}  // namespace cenet
