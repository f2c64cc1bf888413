#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cenet/params.hpp"

namespace cenet {

struct GradReport {
    std::string param_name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t num_checked = 0;
    bool pass = false;
};

struct GradCheckOptions {
    double h = 1e-5;           // must lie in [1e-6, 1e-3]
    double tol_rel = 1e-4;
    double abs_floor = 1e-8;
    std::size_t samples = 16;  // entries per parameter (all, if fewer)
    std::uint64_t seed = 0x5eed;
};

/// Compares analytic gradients of the scalar `fn` against central differences
/// (f(x+h) - f(x-h)) / 2h, one report per entry of `params`.
///
/// Relative error of an entry is |a - n| / max(|a|, |n|); entries whose absolute
/// error is within `abs_floor` count as agreeing and do not raise max_rel_err.
std::vector<GradReport> finite_diff_check(const std::function<Tensor()>& fn, const ParamSet& params,
                                          const GradCheckOptions& opts = {});

bool all_pass(const std::vector<GradReport>& reports);
void print_reports(std::ostream& os, const std::vector<GradReport>& reports);

}  // namespace cenet
