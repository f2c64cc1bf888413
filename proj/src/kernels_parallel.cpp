#include <algorithm>
#include <vector>

#include "cenet/kernels.hpp"

namespace cenet::kernels::parallel {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kMinParallelWork = 1 << 14;

struct TapRange {
    std::size_t first = 0;  // first valid kernel tap
    std::size_t last = 0;   // one past the last valid tap
};

// Kernel taps whose input coordinate lands inside [0, extent) for output index `o`.
TapRange valid_taps(std::size_t o, std::size_t stride, std::size_t dilation, std::size_t padding,
                    std::size_t kernel, std::size_t extent) {
    TapRange r{kernel, kernel};
    for (std::size_t t = 0; t < kernel; ++t) {
        const long long pos = static_cast<long long>(o * stride + t * dilation) - static_cast<long long>(padding);
        if (pos >= 0 && pos < static_cast<long long>(extent)) {
            if (r.first == kernel) r.first = t;
            r.last = t + 1;
        }
    }
    if (r.first == kernel) r.first = r.last = 0;
    return r;
}

std::vector<TapRange> tap_table(std::size_t out, std::size_t stride, std::size_t dilation,
                                std::size_t padding, std::size_t kernel, std::size_t extent) {
    std::vector<TapRange> t(out);
    for (std::size_t o = 0; o < out; ++o) t[o] = valid_taps(o, stride, dilation, padding, kernel, extent);
    return t;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    const std::size_t cin_g = g.in_per_group();
    const std::size_t cout_g = g.out_per_group();
    const std::size_t k = g.kernel;
    const auto ytaps = tap_table(g.out_height, g.stride, g.dilation, g.padding, k, g.height);
    const auto xtaps = tap_table(g.out_width, g.stride, g.dilation, g.padding, k, g.width);
    const long long jobs = static_cast<long long>(g.batch * g.out_channels);
    const std::size_t work = g.batch * g.out_channels * g.out_height * g.out_width * cin_g * k * k;
    const double* in = input.data();
    const double* w = weight.data();

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / g.out_channels;
        const std::size_t co = static_cast<std::size_t>(job) % g.out_channels;
        const std::size_t group = co / cout_g;
        double* dst = out.data() + (n * g.out_channels + co) * g.out_height * g.out_width;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const TapRange ty = ytaps[oy];
            const std::size_t iy0 = oy * g.stride - g.padding;  // offset, wraps safely with ky*dilation
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const TapRange tx = xtaps[ox];
                const std::size_t ix0 = ox * g.stride - g.padding;
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin_g; ++ci) {
                    const double* plane = in + (n * g.in_channels + group * cin_g + ci) * g.height * g.width;
                    const double* wk = w + (co * cin_g + ci) * k * k;
                    for (std::size_t ky = ty.first; ky < ty.last; ++ky) {
                        const double* row = plane + (iy0 + ky * g.dilation) * g.width;
                        for (std::size_t kx = tx.first; kx < tx.last; ++kx) {
                            acc += row[ix0 + kx * g.dilation] * wk[ky * k + kx];
                        }
                    }
                }
                if (!bias.empty()) acc += bias[co];
                dst[oy * g.out_width + ox] = acc;
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const std::size_t cin_g = g.in_per_group();
    const std::size_t cout_g = g.out_per_group();
    const std::size_t k = g.kernel;
    const auto ytaps = tap_table(g.out_height, g.stride, g.dilation, g.padding, k, g.height);
    const auto xtaps = tap_table(g.out_width, g.stride, g.dilation, g.padding, k, g.width);
    const long long jobs = static_cast<long long>(g.batch * g.in_channels);
    const std::size_t work = g.batch * g.out_channels * g.out_height * g.out_width * cin_g * k * k;

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / g.in_channels;
        const std::size_t c = static_cast<std::size_t>(job) % g.in_channels;
        const std::size_t group = c / cin_g;
        const std::size_t ci = c - group * cin_g;
        double* plane = grad_in.data() + (n * g.in_channels + c) * g.height * g.width;
        for (std::size_t co = group * cout_g; co < (group + 1) * cout_g; ++co) {
            const double* go = grad_out.data() + (n * g.out_channels + co) * g.out_height * g.out_width;
            const double* wk = weight.data() + (co * cin_g + ci) * k * k;
            for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                const TapRange ty = ytaps[oy];
                const std::size_t iy0 = oy * g.stride - g.padding;
                for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                    const TapRange tx = xtaps[ox];
                    const std::size_t ix0 = ox * g.stride - g.padding;
                    const double v = go[oy * g.out_width + ox];
                    for (std::size_t ky = ty.first; ky < ty.last; ++ky) {
                        double* row = plane + (iy0 + ky * g.dilation) * g.width;
                        for (std::size_t kx = tx.first; kx < tx.last; ++kx) {
                            row[ix0 + kx * g.dilation] += v * wk[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_w,
                            std::span<double> grad_bias) {
    const std::size_t cin_g = g.in_per_group();
    const std::size_t cout_g = g.out_per_group();
    const std::size_t k = g.kernel;
    const std::size_t hw_out = g.out_height * g.out_width;
    const long long jobs = static_cast<long long>(g.out_channels);
    const std::size_t work = g.batch * g.out_channels * hw_out * cin_g * k * k;

    // Output rows/cols for which tap (ky or kx) stays in bounds.
    std::vector<TapRange> yrows(k), xcols(k);
    for (std::size_t t = 0; t < k; ++t) {
        yrows[t] = {g.out_height, g.out_height};
        xcols[t] = {g.out_width, g.out_width};
        bool found = false;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const long long iy = static_cast<long long>(oy * g.stride + t * g.dilation) - static_cast<long long>(g.padding);
            if (iy >= 0 && iy < static_cast<long long>(g.height)) {
                if (!found) yrows[t].first = oy;
                found = true;
                yrows[t].last = oy + 1;
            }
        }
        if (!found) yrows[t] = {0, 0};
        found = false;
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const long long ix = static_cast<long long>(ox * g.stride + t * g.dilation) - static_cast<long long>(g.padding);
            if (ix >= 0 && ix < static_cast<long long>(g.width)) {
                if (!found) xcols[t].first = ox;
                found = true;
                xcols[t].last = ox + 1;
            }
        }
        if (!found) xcols[t] = {0, 0};
    }

#pragma omp parallel for schedule(static) if (work > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t co = static_cast<std::size_t>(job);
        const std::size_t group = co / cout_g;
        for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const std::size_t c = group * cin_g + ci;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < g.batch; ++n) {
                        const double* go = grad_out.data() + (n * g.out_channels + co) * hw_out;
                        const double* plane = input.data() + (n * g.in_channels + c) * g.height * g.width;
                        for (std::size_t oy = yrows[ky].first; oy < yrows[ky].last; ++oy) {
                            const double* row = plane + (oy * g.stride + ky * g.dilation - g.padding) * g.width;
                            const std::size_t xoff = kx * g.dilation - g.padding;
                            for (std::size_t ox = xcols[kx].first; ox < xcols[kx].last; ++ox) {
                                acc += go[oy * g.out_width + ox] * row[ox * g.stride + xoff];
                            }
                        }
                    }
                    grad_w[((co * cin_g + ci) * k + ky) * k + kx] += acc;
                }
            }
        }
        if (!grad_bias.empty()) {
            double acc = 0.0;
            for (std::size_t n = 0; n < g.batch; ++n) {
                const double* go = grad_out.data() + (n * g.out_channels + co) * hw_out;
                for (std::size_t i = 0; i < hw_out; ++i) acc += go[i];
            }
            grad_bias[co] += acc;
        }
    }
}

void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
    const long long jobs = static_cast<long long>(g.batch * g.m);
#pragma omp parallel for schedule(static) if (g.batch * g.m * g.k * g.p > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t bt = static_cast<std::size_t>(job) / g.m;
        const double* rhs = b.data() + (g.rhs_batched ? bt * g.k * g.p : 0);
        const double* lhs = a.data() + static_cast<std::size_t>(job) * g.k;
        double* dst = out.data() + static_cast<std::size_t>(job) * g.p;
        // Row-accumulate: each dst[j] still sums over t in ascending order.
        std::fill(dst, dst + g.p, 0.0);
        for (std::size_t t = 0; t < g.k; ++t) {
            const double av = lhs[t];
            const double* brow = rhs + t * g.p;
            for (std::size_t j = 0; j < g.p; ++j) dst[j] += av * brow[j];
        }
    }
}

void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> b, std::span<double> grad_a) {
    const long long jobs = static_cast<long long>(g.batch * g.m);
#pragma omp parallel for schedule(static) if (g.batch * g.m * g.k * g.p > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t bt = static_cast<std::size_t>(job) / g.m;
        const double* rhs = b.data() + (g.rhs_batched ? bt * g.k * g.p : 0);
        const double* go = grad_out.data() + static_cast<std::size_t>(job) * g.p;
        double* ga = grad_a.data() + static_cast<std::size_t>(job) * g.k;
        for (std::size_t t = 0; t < g.k; ++t) {
            const double* brow = rhs + t * g.p;
            double acc = 0.0;
            for (std::size_t j = 0; j < g.p; ++j) acc += go[j] * brow[j];
            ga[t] += acc;
        }
    }
}

void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> a, std::span<double> grad_b) {
    const std::size_t rhs_batches = g.rhs_batched ? g.batch : 1;
    const long long jobs = static_cast<long long>(rhs_batches * g.k);
#pragma omp parallel for schedule(static) if (g.batch * g.m * g.k * g.p > kMinParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t rb = static_cast<std::size_t>(job) / g.k;
        const std::size_t t = static_cast<std::size_t>(job) % g.k;
        const std::size_t first = g.rhs_batched ? rb : 0;
        const std::size_t last = g.rhs_batched ? rb + 1 : g.batch;
        std::vector<double> acc(g.p, 0.0);
        for (std::size_t bt = first; bt < last; ++bt) {
            for (std::size_t i = 0; i < g.m; ++i) {
                const double av = a[(bt * g.m + i) * g.k + t];
                const double* go = grad_out.data() + (bt * g.m + i) * g.p;
                for (std::size_t j = 0; j < g.p; ++j) acc[j] += av * go[j];
            }
        }
        double* gb = grad_b.data() + (rb * g.k + t) * g.p;
        for (std::size_t j = 0; j < g.p; ++j) gb[j] += acc[j];
    }
}

void resize_forward(const ResizeGeometry& g, std::span<const double> input,
                    std::span<double> out) {
    std::vector<ResizeTap> ys(g.out_height), xs(g.out_width);
    for (std::size_t i = 0; i < g.out_height; ++i) ys[i] = resize_tap(i, g.height, g.out_height);
    for (std::size_t i = 0; i < g.out_width; ++i) xs[i] = resize_tap(i, g.width, g.out_width);
    const long long planes = static_cast<long long>(g.planes);
#pragma omp parallel for schedule(static) if (g.planes * g.out_height * g.out_width > kMinParallelWork)
    for (long long pl = 0; pl < planes; ++pl) {
        const double* src = input.data() + static_cast<std::size_t>(pl) * g.height * g.width;
        double* dst = out.data() + static_cast<std::size_t>(pl) * g.out_height * g.out_width;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const ResizeTap& ty = ys[oy];
            const double* r0 = src + ty.lo * g.width;
            const double* r1 = src + ty.hi * g.width;
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const ResizeTap& tx = xs[ox];
                const double top = r0[tx.lo] + tx.frac * (r0[tx.hi] - r0[tx.lo]);
                const double bottom = r1[tx.lo] + tx.frac * (r1[tx.hi] - r1[tx.lo]);
                dst[oy * g.out_width + ox] = top + ty.frac * (bottom - top);
            }
        }
    }
}

void resize_backward(const ResizeGeometry& g, std::span<const double> grad_out,
                     std::span<double> grad_in) {
    std::vector<ResizeTap> ys(g.out_height), xs(g.out_width);
    for (std::size_t i = 0; i < g.out_height; ++i) ys[i] = resize_tap(i, g.height, g.out_height);
    for (std::size_t i = 0; i < g.out_width; ++i) xs[i] = resize_tap(i, g.width, g.out_width);
    const long long planes = static_cast<long long>(g.planes);
#pragma omp parallel for schedule(static) if (g.planes * g.out_height * g.out_width > kMinParallelWork)
    for (long long pl = 0; pl < planes; ++pl) {
        const double* go = grad_out.data() + static_cast<std::size_t>(pl) * g.out_height * g.out_width;
        double* gi = grad_in.data() + static_cast<std::size_t>(pl) * g.height * g.width;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const ResizeTap& ty = ys[oy];
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const ResizeTap& tx = xs[ox];
                const double v = go[oy * g.out_width + ox];
                gi[ty.lo * g.width + tx.lo] += v * (1.0 - ty.frac) * (1.0 - tx.frac);
                gi[ty.lo * g.width + tx.hi] += v * (1.0 - ty.frac) * tx.frac;
                gi[ty.hi * g.width + tx.lo] += v * ty.frac * (1.0 - tx.frac);
                gi[ty.hi * g.width + tx.hi] += v * ty.frac * tx.frac;
            }
        }
    }
}

}  // namespace cenet::kernels::parallel
