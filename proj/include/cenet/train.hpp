#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cenet/metrics.hpp"
#include "cenet/model.hpp"
#include "cenet/sample.hpp"

namespace cenet {

/// 0.5 * (1 - mean_k soft-Dice_k) + 0.5 * mean pixel cross-entropy, with
/// soft-Dice_k = (2 sum p g + 1) / (sum p + sum g + 1) over all pixels of the
/// batch. `masks` holds one map per batch entry.
Tensor dice_ce_loss(const Tensor& logits, std::span<const LabelMap> masks);

enum class OptimKind { sgd, adam };

struct OptimConfig {
    OptimKind kind = OptimKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;  // SGD; 0 disables the velocity buffer
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
    double clip_norm = 5.0;     // rescale gradients whose global L2 norm exceeds this; 0 disables
};

/// SGD with heavy-ball momentum (v = mu*v + g; p -= lr*v) or bias-corrected
/// Adam. Moment buffers are created on the first step in ParamSet order.
/// Clipping, when enabled, scales the raw gradients before weight decay.
class Optimizer {
public:
    explicit Optimizer(OptimConfig cfg) : cfg_(cfg) {}

    // Applies one update and zeroes all gradients. Every parameter must carry a gradient.
    void step(ParamSet& params);

    const OptimConfig& config() const { return cfg_; }
    std::size_t steps_taken() const { return t_; }

private:
    OptimConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

/// Noisy-background images with one ellipse (class 1, K = 2) or an ellipse
/// plus a rectangle (class 2, drawn on top, K = 3). Ellipse semi-axes are
/// uniform in [0.15, 0.30] * min(H, W) and the ellipse lies fully inside the
/// image, so every mask has foreground and background.
std::vector<SegSample> synth_dataset(std::size_t n, std::size_t height, std::size_t width, std::size_t num_classes,
                                     std::uint64_t seed);

// Seed for evaluation data drawn apart from the training stream of `data_seed`.
inline std::uint64_t heldout_seed(std::uint64_t data_seed) { return data_seed ^ 0xD1B54A32D192ED03ULL; }

struct TrainOptions {
    std::size_t steps = 200;
    OptimConfig optim;
    // Fresh synthetic sample per step, drawn with this seed.
    std::uint64_t data_seed = 1;
};

struct TrainResult {
    CenetModel model;
    std::vector<double> losses;
};

/// forward -> dice_ce_loss -> backward -> optimizer step, batch size 1.
/// Throws std::runtime_error if the loss stops being finite.
TrainResult train_loop(const ModelConfig& cfg, const TrainOptions& opts);

struct ClassMetrics {
    int cls = 0;
    double dice = 0.0;          // mean over samples
    double hd95 = 0.0;          // mean over samples where defined
    std::size_t hd95_defined = 0;
};

struct EvalReport {
    std::vector<ClassMetrics> classes;  // foreground classes 1..K-1
    double accuracy = 0.0;              // mean pixel accuracy
    std::size_t samples = 0;
};

EvalReport evaluate(const CenetModel& model, std::span<const SegSample> samples);

}  // namespace cenet
