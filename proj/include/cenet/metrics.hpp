#pragma once

#include <optional>
#include <vector>

#include "cenet/sample.hpp"

namespace cenet {

/// 2|P & G| / (|P| + |G|) for class `cls`; 1 when both sets are empty.
double dice_score(const LabelMap& pred, const LabelMap& gt, int cls);

/// 95th percentile of the pooled directed nearest-neighbour distances
/// (pred -> gt and gt -> pred) between the full pixel sets of class `cls`.
/// Percentile uses linear interpolation between order statistics at rank
/// 0.95 * (n - 1). Empty if either set is empty.
std::optional<double> hd95(const LabelMap& pred, const LabelMap& gt, int cls);

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt);

// Per-pixel argmax over the class axis of N x K x H x W logits; ties go to the lower class.
std::vector<LabelMap> argmax_labels(const Tensor& logits);

}  // namespace cenet
