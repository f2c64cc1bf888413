#pragma once

// Contextual Feature Attention Module: CCU -> MCA -> wNLB -> SRM-enhanced MLP.

#include <array>
#include <optional>
#include <string>

#include "cenet/layers.hpp"

namespace cenet {

// Channel calibration: gate from concatenated avg/max/std global pooling.
struct CcuParams {
    static constexpr std::size_t kReduction = 4;
    Conv2dLayer w1;  // 3C -> C/r
    Conv2dLayer w2;  // C/r -> C

    static CcuParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels);
};

// Per-channel gate s in (0,1), shape N x C.
Tensor ccu_gate(const Tensor& f, const CcuParams& p);
Tensor ccu_forward(const Tensor& f, const CcuParams& p);

struct McaSplit {
    std::size_t c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    bool operator==(const McaSplit&) const = default;
};

/// Channel split for the multi-scale aggregator: c4 is the largest value in
/// [1, floor(C/10)] with (C - c4) divisible by 3, the rest shared equally.
/// Rejects C < 13 and channel counts that admit no such c4.
McaSplit mca_split(std::size_t channels);

struct McaParams {
    McaSplit split;
    std::array<std::size_t, 3> dilations{3, 5, 8};
    std::array<Conv2dLayer, 3> dw;  // depthwise 3x3, padding = dilation
    Conv2dLayer gate_a;             // 1x1, c1+c2+c3+1 -> C
    Conv2dLayer gate_b;             // 1x1, C -> C

    static McaParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                            std::array<std::size_t, 3> dilations);
};

/// silu(gate_a([dw3(f'1), dw5(f'2), dw8(f'3), mean_c(f'4)])) * silu(gate_b(f')) + f,
/// where `fp` is the calibrated map and `f_pre_ccu` the stage input.
Tensor mca_forward(const Tensor& fp, const Tensor& f_pre_ccu, const McaParams& p);

// Weighted non-local block, embedded-Gaussian form.
struct WnlbParams {
    Conv2dLayer theta, phi, gproj;  // 1x1, C -> C/2; phi without bias
    Conv2dLayer zproj;              // 1x1, C/2 -> C
    Tensor gamma;                   // scalar, starts at 0

    static WnlbParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels);
};

// `attention`, when given, receives the N x L x L softmax map.
Tensor wnlb_forward(const Tensor& f, const WnlbParams& p, Tensor* attention = nullptr);

// Spatial recalibration from cross-channel avg/max/std planes.
struct SrmParams {
    static constexpr std::size_t kKernel = 7;
    Conv2dLayer pw;  // 1x1, 3 -> 1
    Conv2dLayer kw;  // 7x7, 3 -> 1, padding 3

    static SrmParams create(ParamSet& ps, Initializer& init, const std::string& prefix);
};

// Spatial gate S in (0,1), shape N x 1 x H x W.
Tensor srm_gate(const Tensor& f, const SrmParams& p);
Tensor srm_forward(const Tensor& f, const SrmParams& p);

struct CfamOptions {
    bool enable_ccu = true;
    bool enable_wnlb = true;
    std::array<std::size_t, 3> dilations{3, 5, 8};
    std::size_t mlp_ratio = 4;
};

struct CfamParams {
    std::optional<CcuParams> ccu;
    McaParams mca;
    std::optional<WnlbParams> wnlb;
    LayerNormParams norm_in;   // over C, before the MLP expansion
    LinearLayer mlp_in;        // C -> 4C
    SrmParams srm;             // recalibrates the 4C hidden map
    LayerNormParams norm_mid;  // over 4C, after recalibration
    LinearLayer mlp_out;       // 4C -> C
    std::size_t channels = 0;

    static CfamParams create(ParamSet& ps, Initializer& init, const std::string& prefix, std::size_t channels,
                             const CfamOptions& opts);
};

Tensor cfam_forward(const Tensor& f, const CfamParams& p);

}  // namespace cenet
