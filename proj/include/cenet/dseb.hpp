#pragma once

// Dual Selective Enhancement Block: edge amplification and differential
// attention over the fused encoder / decoder skip signal.

#include <optional>
#include <string>
#include <vector>

#include "cenet/layers.hpp"

namespace cenet {

struct FeaParams {
    static constexpr double kScale1 = 0.75;
    static constexpr double kScale2 = 0.5;
    static constexpr double kScale0 = 1.0;  // reconstruction back to the input extent

    Tensor lambda;  // [C], one edge weight per channel

    static FeaParams create(ParamSet& ps, const std::string& prefix, std::size_t channels);
};

/// f + lambda * |U(D(f, 0.75)) - U(D(f, 0.5))|, both reconstructions resized
/// back to exactly H x W. Rejects maps smaller than 2 x 2.
Tensor fea_forward(const Tensor& f, const FeaParams& p);

struct DiffAttParams {
    LinearLayer wq, wk, wv, wo;  // C x C, no bias
    Tensor lambda_diff;          // scalar, starts at 0.8
    std::size_t heads = 1;
    std::size_t channels = 0;

    static DiffAttParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                                std::size_t heads);
    std::size_t group_width() const { return channels / (2 * heads); }
};

// Per-head attention maps, each N x L x L.
struct DiffAttMaps {
    std::vector<Tensor> first;
    std::vector<Tensor> second;
    std::vector<Tensor> combined;  // first - lambda_diff * second
};

/// Differential attention over the H*W tokens of x. Each head splits its query
/// and key slices into two groups of width C / (2 * heads), builds one softmax
/// map per group and attends to the value slice with their difference.
Tensor diff_attention(const Tensor& x, const DiffAttParams& p, DiffAttMaps* maps = nullptr);

struct DsebOptions {
    bool enable_fea = true;
    bool enable_diffatt = true;
    bool sequential = false;  // FEA then DiffAtt in series instead of in parallel
    std::size_t heads = 2;
};

struct DsebParams {
    Conv2dLayer fuse_in;   // 1x1, 2C -> C
    Conv2dLayer fuse_out;  // 1x1, C -> C
    std::optional<FeaParams> fea;
    std::optional<DiffAttParams> datt;
    bool sequential = false;
    std::size_t channels = 0;

    static DsebParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                             const DsebOptions& opts);
};

Tensor dseb_forward(const Tensor& enc, const Tensor& dec_up, const DsebParams& p);

}  // namespace cenet
