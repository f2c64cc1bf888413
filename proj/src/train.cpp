#include "cenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cenet {

Tensor dice_ce_loss(const Tensor& logits, std::span<const LabelMap> masks) {
    if (logits.ndim() != 4) throw std::invalid_argument("dice_ce_loss: expected N x K x H x W logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    const std::size_t hw = h * w;
    if (masks.size() != n) {
        throw std::invalid_argument("dice_ce_loss: " + std::to_string(masks.size()) + " masks for batch of " +
                                    std::to_string(n));
    }
    for (const LabelMap& m : masks) {
        if (m.height != h || m.width != w) {
            throw std::invalid_argument("dice_ce_loss: mask " + std::to_string(m.height) + "x" +
                                        std::to_string(m.width) + " does not match logits " +
                                        shape_str(logits.shape()));
        }
        for (int v : m.labels) {
            if (v < 0 || static_cast<std::size_t>(v) >= k) {
                throw std::invalid_argument("dice_ce_loss: mask value " + std::to_string(v) +
                                            " outside [0, " + std::to_string(k) + ")");
            }
        }
    }

    const auto z = logits.data();
    const double pixels = static_cast<double>(n * hw);
    std::vector<double> probs(z.size());
    std::vector<int> labels(n * hw);
    double ce = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            const int y = masks[b].labels[p];
            labels[b * hw + p] = y;
            double mx = z[(b * k) * hw + p];
            for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[(b * k + c) * hw + p]);
            double total = 0.0;
            for (std::size_t c = 0; c < k; ++c) total += std::exp(z[(b * k + c) * hw + p] - mx);
            for (std::size_t c = 0; c < k; ++c) {
                probs[(b * k + c) * hw + p] = std::exp(z[(b * k + c) * hw + p] - mx) / total;
            }
            ce -= z[(b * k + static_cast<std::size_t>(y)) * hw + p] - mx - std::log(total);
        }
    }
    ce /= pixels;

    std::vector<double> inter(k, 0.0), psum(k, 0.0), gsum(k, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t p = 0; p < hw; ++p) {
                const double pr = probs[(b * k + c) * hw + p];
                const bool is = labels[b * hw + p] == static_cast<int>(c);
                psum[c] += pr;
                if (is) {
                    inter[c] += pr;
                    gsum[c] += 1.0;
                }
            }
    double dice_mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) dice_mean += (2.0 * inter[c] + 1.0) / (psum[c] + gsum[c] + 1.0);
    dice_mean /= static_cast<double>(k);
    const double loss = 0.5 * (1.0 - dice_mean) + 0.5 * ce;

    return make_result({1}, {loss}, {logits},
                       [n, k, hw, pixels, probs = std::move(probs), labels = std::move(labels),
                        inter = std::move(inter), psum = std::move(psum), gsum = std::move(gsum)](Node& self) {
                           if (!self.parents[0]->requires_grad) return;
                           double* gz = self.parents[0]->grad_buffer().data();
                           const double up = self.grad[0];
                           std::vector<double> dp(k);
                           for (std::size_t b = 0; b < n; ++b) {
                               for (std::size_t p = 0; p < hw; ++p) {
                                   const int y = labels[b * hw + p];
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < k; ++c) {
                                       const double den = psum[c] + gsum[c] + 1.0;
                                       const double g = y == static_cast<int>(c) ? 1.0 : 0.0;
                                       dp[c] = -0.5 / static_cast<double>(k) *
                                               (2.0 * g * den - (2.0 * inter[c] + 1.0)) / (den * den);
                                       dot += probs[(b * k + c) * hw + p] * dp[c];
                                   }
                                   for (std::size_t c = 0; c < k; ++c) {
                                       const double pr = probs[(b * k + c) * hw + p];
                                       const double onehot = y == static_cast<int>(c) ? 1.0 : 0.0;
                                       const double d = pr * (dp[c] - dot) + 0.5 * (pr - onehot) / pixels;
                                       gz[(b * k + c) * hw + p] += up * d;
                                   }
                               }
                           }
                       });
}

void Optimizer::step(ParamSet& params) {
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) throw std::invalid_argument("optim_step: parameter '" + name + "' has no gradient");
    }
    if (m_.empty()) {
        for (const auto& [name, t] : params) {
            m_.emplace_back(t.numel(), 0.0);
            if (cfg_.kind == OptimKind::adam) v_.emplace_back(t.numel(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw std::logic_error("optim_step: parameter set changed between steps");
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [name, t] : params)
            for (double g : t.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t idx = 0;
    for (const auto& [name, tensor] : params) {
        Tensor p = tensor;
        auto data = p.mutable_data();
        auto grad = p.mutable_grad();
        auto& m = m_[idx];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = scale * grad[i] + cfg_.weight_decay * data[i];
            if (cfg_.kind == OptimKind::sgd) {
                if (cfg_.momentum != 0.0) {
                    m[i] = cfg_.momentum * m[i] + g;
                    data[i] -= cfg_.lr * m[i];
                } else {
                    data[i] -= cfg_.lr * g;
                }
            } else {
                auto& v = v_[idx];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
        p.zero_grad();
        ++idx;
    }
}

std::vector<SegSample> synth_dataset(std::size_t n, std::size_t height, std::size_t width, std::size_t num_classes,
                                     std::uint64_t seed) {
    if (num_classes != 2 && num_classes != 3) {
        throw std::invalid_argument("synth_dataset: num_classes must be 2 or 3, got " + std::to_string(num_classes));
    }
    if (height < 8 || width < 8) throw std::invalid_argument("synth_dataset: images must be at least 8x8");
    SplitMix64 rng(seed);
    const double span = static_cast<double>(std::min(height, width));
    std::vector<SegSample> out;
    out.reserve(n);
    while (out.size() < n) {
        LabelMap mask(height, width, 0);
        std::vector<double> img(height * width);
        const double bg = rng.uniform(0.1, 0.3);
        const double fg1 = rng.uniform(0.65, 0.9);
        const double fg2 = rng.uniform(0.45, 0.55);

        const double a = rng.uniform(0.15, 0.30) * span;  // x semi-axis
        const double b = rng.uniform(0.15, 0.30) * span;  // y semi-axis
        const double cx = rng.uniform(a, static_cast<double>(width) - a);
        const double cy = rng.uniform(b, static_cast<double>(height) - b);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = (static_cast<double>(x) + 0.5 - cx) / a;
                const double dy = (static_cast<double>(y) + 0.5 - cy) / b;
                if (dx * dx + dy * dy <= 1.0) mask.at(y, x) = 1;
            }
        if (num_classes == 3) {
            const double hw_ = rng.uniform(0.10, 0.20) * span;
            const double hh = rng.uniform(0.10, 0.20) * span;
            const double rx = rng.uniform(hw_, static_cast<double>(width) - hw_);
            const double ry = rng.uniform(hh, static_cast<double>(height) - hh);
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                    if (std::fabs(px - rx) <= hw_ && std::fabs(py - ry) <= hh) mask.at(y, x) = 2;
                }
        }
        for (std::size_t i = 0; i < img.size(); ++i) {
            const int cls = mask.labels[i];
            const double level = cls == 0 ? bg : (cls == 1 ? fg1 : fg2);
            img[i] = std::clamp(level + rng.uniform(-0.08, 0.08), 0.0, 1.0);
        }
        const bool has_bg = std::count(mask.labels.begin(), mask.labels.end(), 0) > 0;
        const bool has_fg = std::count(mask.labels.begin(), mask.labels.end(), 0) < static_cast<long>(img.size());
        if (!has_bg || !has_fg) continue;
        out.push_back({Tensor({1, 1, height, width}, std::move(img)), std::move(mask)});
    }
    return out;
}

TrainResult train_loop(const ModelConfig& cfg, const TrainOptions& opts) {
    if (opts.steps == 0) throw std::invalid_argument("train_loop: steps must be at least 1");
    if (cfg.in_channels != 1) throw std::invalid_argument("train_loop: synthetic data is single-channel");
    TrainResult res{CenetModel::create(cfg), {}};
    const auto data = synth_dataset(opts.steps, cfg.height, cfg.width, cfg.num_classes, opts.data_seed);
    Optimizer optim(opts.optim);
    res.losses.reserve(opts.steps);
    for (std::size_t step = 0; step < opts.steps; ++step) {
        const SegSample& s = data[step];
        const Tensor loss = dice_ce_loss(res.model.forward(s.image), std::span(&s.mask, 1));
        const double v = loss.item();
        if (!std::isfinite(v)) {
            throw std::runtime_error("train_loop: loss became non-finite at step " + std::to_string(step));
        }
        backward(loss);
        optim.step(res.model.params());
        res.losses.push_back(v);
    }
    return res;
}

EvalReport evaluate(const CenetModel& model, std::span<const SegSample> samples) {
    const std::size_t k = model.config().num_classes;
    EvalReport rep;
    rep.samples = samples.size();
    rep.classes.resize(k - 1);
    for (std::size_t c = 1; c < k; ++c) rep.classes[c - 1].cls = static_cast<int>(c);
    NoGradGuard guard;
    for (const SegSample& s : samples) {
        const LabelMap pred = argmax_labels(model.forward(s.image)).front();
        rep.accuracy += pixel_accuracy(pred, s.mask);
        for (auto& cm : rep.classes) {
            cm.dice += dice_score(pred, s.mask, cm.cls);
            if (auto d = hd95(pred, s.mask, cm.cls)) {
                cm.hd95 += *d;
                ++cm.hd95_defined;
            }
        }
    }
    if (!samples.empty()) {
        const double n = static_cast<double>(samples.size());
        rep.accuracy /= n;
        for (auto& cm : rep.classes) {
            cm.dice /= n;
            cm.hd95 = cm.hd95_defined ? cm.hd95 / static_cast<double>(cm.hd95_defined) : 0.0;
        }
    }
    return rep;
}

}  // namespace cenet
