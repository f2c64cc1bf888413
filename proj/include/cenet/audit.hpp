#pragma once

// Ready-made gradient audits for each block and the assembled model.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cenet/gradcheck.hpp"
#include "cenet/model.hpp"

namespace cenet {

enum class AuditTarget { fea, diffatt, dseb, ccu, mca, wnlb, srm, cfam, cfam13, model };

std::string_view audit_name(AuditTarget t);
std::optional<AuditTarget> parse_audit_target(std::string_view name);
const std::vector<AuditTarget>& all_audit_targets();

// Checked tensors (block parameters plus the input, named "input") and the scalar under test.
struct AuditCase {
    std::string name;
    ParamSet params;
    std::function<Tensor()> loss;
};

/// Builds a small random instance of `t`. Parameters are moved off their
/// initial values (edge / non-local weights drawn from [0.3, 0.9], everything
/// else jittered by up to 0.25, or 0.02 in the model) so no branch is switched off. Block losses are
/// a fixed random projection of the output; the model loss is the logit sum.
/// `cfam13` runs the module at 13 channels with the non-local block disabled.
AuditCase make_audit(AuditTarget t, std::uint64_t seed);

// Model audit on a caller-supplied config (its own seed, params and input size).
AuditCase make_model_audit(const ModelConfig& cfg);

// Config used by the model audit: 32 x 32 input, 16 channels at every stage.
ModelConfig audit_model_config(std::uint64_t seed);

std::vector<GradReport> run_audit(const AuditCase& c, const GradCheckOptions& opts = {});

}  // namespace cenet
