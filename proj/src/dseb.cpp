#include "cenet/dseb.hpp"

#include <cmath>
#include <stdexcept>

namespace cenet {

FeaParams FeaParams::create(ParamSet& ps, const std::string& prefix, std::size_t channels) {
    return FeaParams{ps.add(prefix + ".lambda", Tensor({channels}, 0.0))};
}

Tensor fea_forward(const Tensor& f, const FeaParams& p) {
    if (f.ndim() != 4) throw std::invalid_argument("fea_forward: expected N x C x H x W, got " + shape_str(f.shape()));
    const std::size_t h = f.dim(2), w = f.dim(3);
    if (h < 2 || w < 2) {
        throw std::invalid_argument("fea_forward: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is below the 2x2 minimum");
    }
    if (p.lambda.shape() != Shape{f.dim(1)}) {
        throw std::invalid_argument("fea_forward: lambda " + shape_str(p.lambda.shape()) + " does not match " +
                                    shape_str(f.shape()));
    }
    const Tensor up1 = resize_to(bilinear_resize(f, FeaParams::kScale1), h, w);
    const Tensor up2 = resize_to(bilinear_resize(f, FeaParams::kScale2), h, w);
    const Tensor edge = abs(sub(up1, up2));
    return add(f, mul_channelwise(edge, p.lambda));
}

DiffAttParams DiffAttParams::create(ParamSet& ps, Initializer& init, const std::string& prefix,
                                    std::size_t channels, std::size_t heads) {
    if (heads == 0 || channels % (2 * heads) != 0) {
        throw std::invalid_argument("diff_attention: channels " + std::to_string(channels) +
                                    " not divisible by 2*heads = " + std::to_string(2 * heads));
    }
    DiffAttParams p;
    p.heads = heads;
    p.channels = channels;
    p.wq = LinearLayer::create(ps, init, prefix + ".wq", channels, channels, false);
    p.wk = LinearLayer::create(ps, init, prefix + ".wk", channels, channels, false);
    p.wv = LinearLayer::create(ps, init, prefix + ".wv", channels, channels, false);
    p.wo = LinearLayer::create(ps, init, prefix + ".wo", channels, channels, false);
    p.lambda_diff = ps.add(prefix + ".lambda_diff", Tensor::scalar(0.8));
    return p;
}

Tensor diff_attention(const Tensor& x, const DiffAttParams& p, DiffAttMaps* maps) {
    if (x.ndim() != 4 || x.dim(1) != p.channels) {
        throw std::invalid_argument("diff_attention: input " + shape_str(x.shape()) + " does not carry " +
                                    std::to_string(p.channels) + " channels");
    }
    const std::size_t h = x.dim(2), w = x.dim(3);
    const std::size_t dh = p.group_width();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const Tensor tokens = to_tokens(x);
    const Tensor q = p.wq(tokens);
    const Tensor k = p.wk(tokens);
    const Tensor v = p.wv(tokens);

    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t hd = 0; hd < p.heads; ++hd) {
        const std::size_t base = hd * 2 * dh;
        const Tensor q1 = slice_lastdim(q, base, dh);
        const Tensor q2 = slice_lastdim(q, base + dh, dh);
        const Tensor k1 = slice_lastdim(k, base, dh);
        const Tensor k2 = slice_lastdim(k, base + dh, dh);
        const Tensor vh = slice_lastdim(v, base, 2 * dh);
        const Tensor a1 = softmax_lastdim(scale(matmul_batched(q1, transpose_last2(k1)), inv_sqrt));
        const Tensor a2 = softmax_lastdim(scale(matmul_batched(q2, transpose_last2(k2)), inv_sqrt));
        const Tensor attn = sub(a1, mul_scalar(a2, p.lambda_diff));
        if (maps) {
            maps->first.push_back(a1);
            maps->second.push_back(a2);
            maps->combined.push_back(attn);
        }
        heads.push_back(matmul_batched(attn, vh));
    }
    const Tensor merged = heads.size() == 1 ? heads.front() : concat_lastdim(heads);
    return from_tokens(p.wo(merged), h, w);
}

DsebParams DsebParams::create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                              const DsebOptions& opts) {
    DsebParams p;
    p.channels = channels;
    p.sequential = opts.sequential;
    p.fuse_in = Conv2dLayer::create(ps, init, prefix + ".fuse_in", 2 * channels, channels, 1);
    if (opts.enable_fea) p.fea = FeaParams::create(ps, prefix + ".fea", channels);
    if (opts.enable_diffatt) p.datt = DiffAttParams::create(ps, init, prefix + ".datt", channels, opts.heads);
    p.fuse_out = Conv2dLayer::create(ps, init, prefix + ".fuse_out", channels, channels, 1);
    return p;
}

Tensor dseb_forward(const Tensor& enc, const Tensor& dec_up, const DsebParams& p) {
    if (enc.shape() != dec_up.shape()) {
        throw std::invalid_argument("dseb_forward: encoder " + shape_str(enc.shape()) + " and decoder " +
                                    shape_str(dec_up.shape()) + " differ");
    }
    const Tensor parts[] = {enc, dec_up};
    const Tensor x = p.fuse_in(concat_channels(parts));
    if (p.sequential) {
        Tensor y = x;
        if (p.fea) y = fea_forward(y, *p.fea);
        if (p.datt) y = diff_attention(y, *p.datt);
        return p.fuse_out(y);
    }
    const Tensor b1 = p.fea ? fea_forward(x, *p.fea) : x;
    const Tensor b2 = p.datt ? diff_attention(x, *p.datt) : x;
    return p.fuse_out(add(b1, b2));
}

}  // namespace cenet
