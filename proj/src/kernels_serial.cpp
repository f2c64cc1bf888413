#include <algorithm>
#include <cmath>

#include "cenet/kernels.hpp"

namespace cenet::kernels {

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t dilation, std::size_t padding) {
    const long long span = static_cast<long long>(in) + 2LL * static_cast<long long>(padding) -
                           static_cast<long long>(dilation) * (static_cast<long long>(kernel) - 1) - 1;
    if (span < 0 || stride == 0) return 0;
    return static_cast<std::size_t>(span) / stride + 1;
}

ResizeTap resize_tap(std::size_t dst, std::size_t in_extent, std::size_t out_extent) {
    const double ratio = static_cast<double>(in_extent) / static_cast<double>(out_extent);
    double src = (static_cast<double>(dst) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_extent - 1));
    ResizeTap tap;
    tap.lo = static_cast<std::size_t>(std::floor(src));
    tap.hi = std::min(tap.lo + 1, in_extent - 1);
    tap.frac = src - static_cast<double>(tap.lo);
    return tap;
}

namespace {
Backend g_backend = Backend::parallel;
}

void set_backend(Backend b) { g_backend = b; }
Backend backend() { return g_backend; }

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    const std::size_t cin_g = g.in_per_group();
    const std::size_t cout_g = g.out_per_group();
    const std::size_t k = g.kernel;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const std::size_t group = co / cout_g;
            for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < cin_g; ++ci) {
                        const std::size_t c = group * cin_g + ci;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const long long iy = static_cast<long long>(oy * g.stride + ky * g.dilation) -
                                                 static_cast<long long>(g.padding);
                            if (iy < 0 || iy >= static_cast<long long>(g.height)) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long long ix =
                                    static_cast<long long>(ox * g.stride + kx * g.dilation) -
                                    static_cast<long long>(g.padding);
                                if (ix < 0 || ix >= static_cast<long long>(g.width)) continue;
                                acc += input[((n * g.in_channels + c) * g.height + iy) * g.width + ix] *
                                       weight[((co * cin_g + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    if (!bias.empty()) acc += bias[co];
                    out[((n * g.out_channels + co) * g.out_height + oy) * g.out_width + ox] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const std::size_t cin_g = g.in_per_group();
    const std::size_t cout_g = g.out_per_group();
    const std::size_t k = g.kernel;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t c = 0; c < g.in_channels; ++c) {
            const std::size_t group = c / cin_g;
            const std::size_t ci = c - group * cin_g;
            double* plane = grad_in.data() + (n * g.in_channels + c) * g.height * g.width;
            for (std::size_t co = group * cout_g; co < (group + 1) * cout_g; ++co) {
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const double go =
                            grad_out[((n * g.out_channels + co) * g.out_height + oy) * g.out_width + ox];
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const long long iy = static_cast<long long>(oy * g.stride + ky * g.dilation) -
                                                 static_cast<long long>(g.padding);
                            if (iy < 0 || iy >= static_cast<long long>(g.height)) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long long ix =
                                    static_cast<long long>(ox * g.stride + kx * g.dilation) -
                                    static_cast<long long>(g.padding);
                                if (ix < 0 || ix >= static_cast<long long>(g.width)) continue;
                                plane[iy * g.width + ix] += go * weight[((co * cin_g + ci) * k + ky) * k + kx];
                            }
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
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        const std::size_t group = co / cout_g;
        for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const std::size_t c = group * cin_g + ci;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < g.batch; ++n) {
                        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                            const long long iy = static_cast<long long>(oy * g.stride + ky * g.dilation) -
                                                 static_cast<long long>(g.padding);
                            if (iy < 0 || iy >= static_cast<long long>(g.height)) continue;
                            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                                const long long ix =
                                    static_cast<long long>(ox * g.stride + kx * g.dilation) -
                                    static_cast<long long>(g.padding);
                                if (ix < 0 || ix >= static_cast<long long>(g.width)) continue;
                                acc += grad_out[((n * g.out_channels + co) * g.out_height + oy) * g.out_width + ox] *
                                       input[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
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
                const double* go = grad_out.data() + (n * g.out_channels + co) * g.out_height * g.out_width;
                for (std::size_t i = 0; i < g.out_height * g.out_width; ++i) acc += go[i];
            }
            grad_bias[co] += acc;
        }
    }
}

void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
    for (std::size_t bt = 0; bt < g.batch; ++bt) {
        const double* rhs = b.data() + (g.rhs_batched ? bt * g.k * g.p : 0);
        for (std::size_t i = 0; i < g.m; ++i) {
            for (std::size_t j = 0; j < g.p; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < g.k; ++t) {
                    acc += a[(bt * g.m + i) * g.k + t] * rhs[t * g.p + j];
                }
                out[(bt * g.m + i) * g.p + j] = acc;
            }
        }
    }
}

void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> b, std::span<double> grad_a) {
    for (std::size_t bt = 0; bt < g.batch; ++bt) {
        const double* rhs = b.data() + (g.rhs_batched ? bt * g.k * g.p : 0);
        for (std::size_t i = 0; i < g.m; ++i) {
            for (std::size_t t = 0; t < g.k; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < g.p; ++j) {
                    acc += grad_out[(bt * g.m + i) * g.p + j] * rhs[t * g.p + j];
                }
                grad_a[(bt * g.m + i) * g.k + t] += acc;
            }
        }
    }
}

void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> a, std::span<double> grad_b) {
    const std::size_t rhs_batches = g.rhs_batched ? g.batch : 1;
    for (std::size_t rb = 0; rb < rhs_batches; ++rb) {
        for (std::size_t t = 0; t < g.k; ++t) {
            for (std::size_t j = 0; j < g.p; ++j) {
                double acc = 0.0;
                const std::size_t first = g.rhs_batched ? rb : 0;
                const std::size_t last = g.rhs_batched ? rb + 1 : g.batch;
                for (std::size_t bt = first; bt < last; ++bt) {
                    for (std::size_t i = 0; i < g.m; ++i) {
                        acc += a[(bt * g.m + i) * g.k + t] * grad_out[(bt * g.m + i) * g.p + j];
                    }
                }
                grad_b[(rb * g.k + t) * g.p + j] += acc;
            }
        }
    }
}

void resize_forward(const ResizeGeometry& g, std::span<const double> input,
                    std::span<double> out) {
    for (std::size_t pl = 0; pl < g.planes; ++pl) {
        const double* src = input.data() + pl * g.height * g.width;
        double* dst = out.data() + pl * g.out_height * g.out_width;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const ResizeTap ty = resize_tap(oy, g.height, g.out_height);
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const ResizeTap tx = resize_tap(ox, g.width, g.out_width);
                const double a = src[ty.lo * g.width + tx.lo];
                const double b = src[ty.lo * g.width + tx.hi];
                const double c = src[ty.hi * g.width + tx.lo];
                const double d = src[ty.hi * g.width + tx.hi];
                // Lerp form keeps constant planes exact.
                const double top = a + tx.frac * (b - a);
                const double bottom = c + tx.frac * (d - c);
                dst[oy * g.out_width + ox] = top + ty.frac * (bottom - top);
            }
        }
    }
}

void resize_backward(const ResizeGeometry& g, std::span<const double> grad_out,
                     std::span<double> grad_in) {
    for (std::size_t pl = 0; pl < g.planes; ++pl) {
        const double* go = grad_out.data() + pl * g.out_height * g.out_width;
        double* gi = grad_in.data() + pl * g.height * g.width;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const ResizeTap ty = resize_tap(oy, g.height, g.out_height);
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const ResizeTap tx = resize_tap(ox, g.width, g.out_width);
                const double v = go[oy * g.out_width + ox];
                gi[ty.lo * g.width + tx.lo] += v * (1.0 - ty.frac) * (1.0 - tx.frac);
                gi[ty.lo * g.width + tx.hi] += v * (1.0 - ty.frac) * tx.frac;
                gi[ty.hi * g.width + tx.lo] += v * ty.frac * (1.0 - tx.frac);
                gi[ty.hi * g.width + tx.hi] += v * ty.frac * tx.frac;
            }
        }
    }
}

}  // namespace serial

#define CENET_DISPATCH(name, ...)                                                 \
    (g_backend == Backend::serial ? serial::name(__VA_ARGS__) : parallel::name(__VA_ARGS__))

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    CENET_DISPATCH(conv2d_forward, g, input, weight, bias, out);
}
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    CENET_DISPATCH(conv2d_backward_input, g, grad_out, weight, grad_in);
}
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_w,
                            std::span<double> grad_bias) {
    CENET_DISPATCH(conv2d_backward_weight, g, grad_out, input, grad_w, grad_bias);
}
void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
    CENET_DISPATCH(matmul, g, a, b, out);
}
void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> b, std::span<double> grad_a) {
    CENET_DISPATCH(matmul_backward_lhs, g, grad_out, b, grad_a);
}
void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> grad_out,
                         std::span<const double> a, std::span<double> grad_b) {
    CENET_DISPATCH(matmul_backward_rhs, g, grad_out, a, grad_b);
}
void resize_forward(const ResizeGeometry& g, std::span<const double> input,
                    std::span<double> out) {
    CENET_DISPATCH(resize_forward, g, input, out);
}
void resize_backward(const ResizeGeometry& g, std::span<const double> grad_out,
                     std::span<double> grad_in) {
    CENET_DISPATCH(resize_backward, g, grad_out, grad_in);
}

#undef CENET_DISPATCH

}  // namespace cenet::kernels
