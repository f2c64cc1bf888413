#include "cenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cenet {

namespace {

void require_same(const char* op, const LabelMap& a, const LabelMap& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": mask shapes " + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + " and " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width) + " differ");
    }
}

struct Point {
    double y, x;
};

std::vector<Point> points_of(const LabelMap& m, int cls) {
    std::vector<Point> pts;
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x)
            if (m.at(y, x) == cls) pts.push_back({static_cast<double>(y), static_cast<double>(x)});
    return pts;
}

void directed(const std::vector<Point>& from, const std::vector<Point>& to, std::vector<double>& out) {
    for (const Point& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Point& q : to) {
            const double dy = p.y - q.y, dx = p.x - q.x;
            best = std::min(best, dy * dy + dx * dx);
        }
        out.push_back(std::sqrt(best));
    }
}

}  // namespace

double dice_score(const LabelMap& pred, const LabelMap& gt, int cls) {
    require_same("dice_score", pred, gt);
    std::size_t inter = 0, np = 0, ng = 0;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const bool p = pred.labels[i] == cls, g = gt.labels[i] == cls;
        np += p;
        ng += g;
        inter += p && g;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::optional<double> hd95(const LabelMap& pred, const LabelMap& gt, int cls) {
    require_same("hd95", pred, gt);
    const auto p = points_of(pred, cls);
    const auto g = points_of(gt, cls);
    if (p.empty() || g.empty()) return std::nullopt;
    std::vector<double> d;
    d.reserve(p.size() + g.size());
    directed(p, g, d);
    directed(g, p, d);
    std::sort(d.begin(), d.end());
    const double rank = 0.95 * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (rank - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
    require_same("pixel_accuracy", pred, gt);
    if (pred.labels.empty()) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) same += pred.labels[i] == gt.labels[i];
    return static_cast<double>(same) / static_cast<double>(pred.labels.size());
}

std::vector<LabelMap> argmax_labels(const Tensor& logits) {
    if (logits.ndim() != 4) throw std::invalid_argument("argmax_labels: expected N x K x H x W logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    const auto d = logits.data();
    std::vector<LabelMap> out;
    for (std::size_t b = 0; b < n; ++b) {
        LabelMap m(h, w);
        for (std::size_t p = 0; p < h * w; ++p) {
            int best = 0;
            double best_v = d[(b * k) * h * w + p];
            for (std::size_t c = 1; c < k; ++c) {
                const double v = d[(b * k + c) * h * w + p];
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<int>(c);
                }
            }
            m.labels[p] = best;
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace cenet
