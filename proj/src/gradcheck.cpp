#include "cenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace cenet {

namespace {

constexpr double kMinStep = 1e-6;
constexpr double kMaxStep = 1e-3;

double eval_scalar(const std::function<Tensor()>& fn) {
    NoGradGuard guard;
    const Tensor y = fn();
    if (y.numel() != 1) throw std::invalid_argument("finite_diff_check: fn must return a scalar, got " + shape_str(y.shape()));
    return y.item();
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t want, SplitMix64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= want) return idx;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::vector<GradReport> finite_diff_check(const std::function<Tensor()>& fn, const ParamSet& params,
                                          const GradCheckOptions& opts) {
    if (!(opts.h >= kMinStep && opts.h <= kMaxStep)) {
        throw std::invalid_argument("finite_diff_check: step h must lie in [1e-6, 1e-3]");
    }
    for (const auto& [name, t] : params) {
        Tensor p = t;
        p.zero_grad();
    }
    const Tensor loss = fn();
    if (loss.numel() != 1) {
        throw std::invalid_argument("finite_diff_check: fn must return a scalar, got " + shape_str(loss.shape()));
    }
    backward(loss);

    SplitMix64 rng(opts.seed);
    std::vector<GradReport> reports;
    for (const auto& [name, tensor] : params) {
        Tensor p = tensor;
        std::vector<double> analytic(p.numel(), 0.0);
        if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());

        GradReport r;
        r.param_name = name;
        auto data = p.mutable_data();
        for (std::size_t i : sample_indices(p.numel(), std::max<std::size_t>(opts.samples, 1), rng)) {
            const double saved = data[i];
            data[i] = saved + opts.h;
            const double up = eval_scalar(fn);
            data[i] = saved - opts.h;
            const double down = eval_scalar(fn);
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * opts.h);
            const double abs_err = std::fabs(analytic[i] - numeric);
            const double mag = std::max(std::fabs(analytic[i]), std::fabs(numeric));
            r.max_abs_err = std::max(r.max_abs_err, abs_err);
            if (abs_err > opts.abs_floor && mag > 0.0) r.max_rel_err = std::max(r.max_rel_err, abs_err / mag);
            ++r.num_checked;
        }
        r.pass = r.max_rel_err <= opts.tol_rel || r.max_abs_err <= opts.abs_floor;
        reports.push_back(std::move(r));
    }
    for (const auto& [name, t] : params) {
        Tensor p = t;
        p.zero_grad();
    }
    return reports;
}

bool all_pass(const std::vector<GradReport>& reports) {
    return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.pass; });
}

void print_reports(std::ostream& os, const std::vector<GradReport>& reports) {
    std::size_t width = 5;
    for (const auto& r : reports) width = std::max(width, r.param_name.size());
    os << std::left << std::setw(static_cast<int>(width)) << "param" << "  " << std::setw(12) << "max_rel" << "  "
       << std::setw(12) << "max_abs" << "  " << std::setw(7) << "checked" << "  status\n";
    const auto old = os.flags();
    for (const auto& r : reports) {
        os << std::left << std::setw(static_cast<int>(width)) << r.param_name << "  " << std::scientific
           << std::setprecision(3) << std::setw(12) << r.max_rel_err << "  " << std::setw(12) << r.max_abs_err
           << "  " << std::setw(7) << r.num_checked << "  " << (r.pass ? "PASS" : "FAIL") << "\n";
        os.flags(old);
    }
}

}  // namespace cenet
