#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cenet/cfam.hpp"
#include "cenet/dseb.hpp"

namespace cenet {

struct ModelConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t in_channels = 1;
    std::size_t num_classes = 2;
    std::array<std::size_t, 4> stage_channels{16, 32, 64, 128};
    bool enable_fea = true;
    bool enable_diffatt = true;
    bool enable_wnlb = true;
    bool enable_ccu = true;
    std::array<std::size_t, 3> dilations{3, 5, 8};
    std::size_t heads = 2;
    std::uint64_t seed = 1;
    bool dseb_sequential = false;

    // Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Flat `key=value` text, one pair per line, `#` starts a comment. Keys mirror
/// the ModelConfig fields; `input_hw=H,W`, lists are comma separated, booleans
/// are true/false. Unknown keys are rejected. Missing keys keep defaults.
ModelConfig parse_config(std::string_view text);
ModelConfig load_config(const std::string& path);
std::string format_config(const ModelConfig& cfg);

using FeatureTaps = std::vector<std::pair<std::string, Tensor>>;

class CenetModel {
public:
    static CenetModel create(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    /// Four pyramid maps at H/4, H/8, H/16, H/32.
    std::array<Tensor, 4> encode(const Tensor& image) const;

    /// N x K x H x W logits. Intermediate maps are appended to `taps` when
    /// given, named enc1..enc4, dec4, up3/skip3/dec3, ..., head.
    Tensor forward(const Tensor& image, FeatureTaps* taps = nullptr) const;

private:
    ModelConfig cfg_;
    ParamSet params_;
    std::array<Conv2dLayer, 5> encoder_;  // stem1, stem2, down2, down3, down4
    std::array<CfamParams, 4> cfam_;      // per stage, index 0 = shallowest
    std::array<Conv2dLayer, 3> align_;    // decoder map -> stage channels, stages 1..3
    std::array<DsebParams, 3> dseb_;      // skip connections, stages 1..3
    Conv2dLayer head_;
};

ParamSet init_params(const ModelConfig& cfg);
std::array<Tensor, 4> encoder_forward(const Tensor& image, const CenetModel& model);
Tensor cenet_forward(const Tensor& image, const CenetModel& model);

}  // namespace cenet
