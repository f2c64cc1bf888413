#include "cenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "cenet/kernels.hpp"

namespace cenet {

namespace {

// Gradient slot of parent `i`, or nullptr when that parent takes no gradient.
double* parent_grad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) { return self.parents[i]->data; }

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_4d(const std::string& op, const Tensor& x) {
    if (x.ndim() != 4) {
        throw std::invalid_argument(op + ": expected N x C x H x W, got " + shape_str(x.shape()));
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* name) {
    if (a.shape() != b.shape()) shape_error(name, a.shape(), b.shape());
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (op) {
            case Binary::add: out[i] = x[i] + y[i]; break;
            case Binary::sub: out[i] = x[i] - y[i]; break;
            case Binary::mul: out[i] = x[i] * y[i]; break;
        }
    }
    return make_result(a.shape(), std::move(out), {a, b}, [op](Node& self) {
        const auto& g = self.grad;
        double* ga = parent_grad(self, 0);
        double* gb = parent_grad(self, 1);
        const auto& x = parent_data(self, 0);
        const auto& y = parent_data(self, 1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (op) {
                case Binary::add:
                    if (ga) ga[i] += g[i];
                    if (gb) gb[i] += g[i];
                    break;
                case Binary::sub:
                    if (ga) ga[i] += g[i];
                    if (gb) gb[i] -= g[i];
                    break;
                case Binary::mul:
                    if (ga) ga[i] += g[i] * y[i];
                    if (gb) gb[i] += g[i] * x[i];
                    break;
            }
        }
    });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvOptions opts) {
    require_4d("conv2d", input);
    if (weight.ndim() != 4) shape_error("conv2d", input.shape(), weight.shape());
    kernels::ConvGeometry g;
    g.batch = input.dim(0);
    g.in_channels = input.dim(1);
    g.height = input.dim(2);
    g.width = input.dim(3);
    g.out_channels = weight.dim(0);
    g.kernel = weight.dim(2);
    g.stride = opts.stride;
    g.dilation = opts.dilation;
    g.padding = opts.padding;
    g.groups = opts.groups;
    if (g.groups == 0 || g.stride == 0 || g.dilation == 0 || g.in_channels % g.groups != 0 ||
        g.out_channels % g.groups != 0 || weight.dim(1) != g.in_channels / g.groups ||
        weight.dim(3) != g.kernel || g.kernel % 2 == 0) {
        throw std::invalid_argument("conv2d: input " + shape_str(input.shape()) + " incompatible with weight " +
                                    shape_str(weight.shape()) + " (groups=" + std::to_string(opts.groups) + ")");
    }
    if (bias.defined() && bias.shape() != Shape{g.out_channels}) {
        throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                                    shape_str(weight.shape()));
    }
    g.out_height = kernels::conv_out_extent(g.height, g.kernel, g.stride, g.dilation, g.padding);
    g.out_width = kernels::conv_out_extent(g.width, g.kernel, g.stride, g.dilation, g.padding);
    if (g.out_height == 0 || g.out_width == 0) {
        throw std::invalid_argument("conv2d: non-positive output extent for input " + shape_str(input.shape()) +
                                    " and weight " + shape_str(weight.shape()));
    }

    std::vector<double> out(g.batch * g.out_channels * g.out_height * g.out_width);
    std::span<const double> b = bias.defined() ? bias.data() : std::span<const double>{};
    kernels::conv2d_forward(g, input.data(), weight.data(), b, out);

    std::vector<Tensor> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    const bool has_bias = bias.defined();
    return make_result({g.batch, g.out_channels, g.out_height, g.out_width}, std::move(out), parents,
                       [g, has_bias](Node& self) {
                           Node& in = *self.parents[0];
                           Node& w = *self.parents[1];
                           if (in.requires_grad) kernels::conv2d_backward_input(g, self.grad, w.data, in.grad_buffer());
                           const bool want_b = has_bias && self.parents[2]->requires_grad;
                           if (w.requires_grad || want_b) {
                               std::vector<double> scratch_w;
                               std::span<double> gw;
                               if (w.requires_grad) {
                                   gw = w.grad_buffer();
                               } else {
                                   scratch_w.assign(w.data.size(), 0.0);
                                   gw = scratch_w;
                               }
                               std::span<double> gb = want_b ? self.parents[2]->grad_buffer() : std::span<double>{};
                               kernels::conv2d_backward_weight(g, self.grad, in.data, gw, gb);
                           }
                       });
}

Tensor resize_to(const Tensor& input, std::size_t height, std::size_t width) {
    require_4d("bilinear_resize", input);
    if (height == 0 || width == 0) {
        throw std::invalid_argument("bilinear_resize: zero target extent for input " + shape_str(input.shape()));
    }
    kernels::ResizeGeometry g;
    g.planes = input.dim(0) * input.dim(1);
    g.height = input.dim(2);
    g.width = input.dim(3);
    g.out_height = height;
    g.out_width = width;
    std::vector<double> out(g.planes * height * width);
    kernels::resize_forward(g, input.data(), out);
    return make_result({input.dim(0), input.dim(1), height, width}, std::move(out), {input},
                       [g](Node& self) {
                           if (double* gi = parent_grad(self, 0)) {
                               kernels::resize_backward(g, self.grad,
                                                        std::span<double>(gi, self.parents[0]->data.size()));
                           }
                       });
}

Tensor bilinear_resize(const Tensor& input, double scale) {
    require_4d("bilinear_resize", input);
    if (!(scale > 0.0)) throw std::invalid_argument("bilinear_resize: scale must be positive");
    const double h = std::round(static_cast<double>(input.dim(2)) * scale);
    const double w = std::round(static_cast<double>(input.dim(3)) * scale);
    if (h < 1.0 || w < 1.0) {
        throw std::invalid_argument("bilinear_resize: zero target extent for input " + shape_str(input.shape()) +
                                    " at scale " + std::to_string(scale));
    }
    return resize_to(input, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
}

Tensor softmax_lastdim(const Tensor& input) {
    const std::size_t len = input.shape().back();
    const std::size_t rows = input.numel() / len;
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * len;
        double* yr = out.data() + r * len;
        double mx = xr[0];
        for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xr[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < len; ++j) yr[j] /= total;
    }
    return make_result(input.shape(), std::move(out), {input}, [rows, len](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * len;
            const double* g = self.grad.data() + r * len;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < len; ++j) gi[r * len + j] += y[j] * (g[j] - dot);
        }
    });
}

namespace {

// avg/max/std over `count` values read with `stride`; writes argmax offset.
struct Stats {
    double avg = 0.0;
    double max = 0.0;
    double std = 0.0;
    std::size_t argmax = 0;
};

Stats strided_stats(const double* x, std::size_t count, std::size_t stride) {
    Stats s;
    double total = 0.0;
    s.max = x[0];
    for (std::size_t i = 0; i < count; ++i) {
        const double v = x[i * stride];
        total += v;
        if (v > s.max) {
            s.max = v;
            s.argmax = i;
        }
    }
    s.avg = total / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = x[i * stride] - s.avg;
        sq += d * d;
    }
    s.std = std::sqrt(sq / static_cast<double>(count));
    return s;
}

// Accumulates grads of (avg, max, std) back onto the strided inputs.
void strided_stats_backward(const double* x, std::size_t count, std::size_t stride, const Stats& s,
                            double g_avg, double g_max, double g_std, double* gx) {
    const double n = static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        double g = g_avg / n;
        // Zero spread: subgradient 0.
        if (s.std > 0.0) g += g_std * (x[i * stride] - s.avg) / (n * s.std);
        if (i == s.argmax) g += g_max;
        gx[i * stride] += g;
    }
}

}  // namespace

Tensor spatial_masp(const Tensor& input) {
    require_4d("spatial_masp", input);
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const auto x = input.data();
    std::vector<double> out(n * 3 * c);
    std::vector<Stats> stats(n * c);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const Stats s = strided_stats(x.data() + (b * c + ch) * hw, hw, 1);
            stats[b * c + ch] = s;
            out[b * 3 * c + ch] = s.avg;
            out[b * 3 * c + c + ch] = s.max;
            out[b * 3 * c + 2 * c + ch] = s.std;
        }
    }
    return make_result({n, 3 * c}, std::move(out), {input}, [n, c, hw, stats](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        const auto& x = parent_data(self, 0);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* g = self.grad.data() + b * 3 * c;
                strided_stats_backward(x.data() + (b * c + ch) * hw, hw, 1, stats[b * c + ch], g[ch], g[c + ch],
                                       g[2 * c + ch], gi + (b * c + ch) * hw);
            }
        }
    });
}

Tensor channel_masp(const Tensor& input) {
    require_4d("channel_masp", input);
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const auto x = input.data();
    std::vector<double> out(n * 3 * hw);
    std::vector<Stats> stats(n * hw);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            const Stats s = strided_stats(x.data() + b * c * hw + p, c, hw);
            stats[b * hw + p] = s;
            out[(b * 3 + 0) * hw + p] = s.avg;
            out[(b * 3 + 1) * hw + p] = s.max;
            out[(b * 3 + 2) * hw + p] = s.std;
        }
    }
    return make_result({n, 3, input.dim(2), input.dim(3)}, std::move(out), {input},
                       [n, c, hw, stats](Node& self) {
                           double* gi = parent_grad(self, 0);
                           if (!gi) return;
                           const auto& x = parent_data(self, 0);
                           const double* g = self.grad.data();
                           for (std::size_t b = 0; b < n; ++b) {
                               for (std::size_t p = 0; p < hw; ++p) {
                                   strided_stats_backward(x.data() + b * c * hw + p, c, hw, stats[b * hw + p],
                                                          g[(b * 3 + 0) * hw + p], g[(b * 3 + 1) * hw + p],
                                                          g[(b * 3 + 2) * hw + p], gi + b * c * hw + p);
                               }
                           }
                       });
}

Tensor channel_mean(const Tensor& input) {
    require_4d("channel_mean", input);
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const auto x = input.data();
    std::vector<double> out(n * hw, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
            double total = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) total += x[(b * c + ch) * hw + p];
            out[b * hw + p] = total / static_cast<double>(c);
        }
    }
    return make_result({n, 1, input.dim(2), input.dim(3)}, std::move(out), {input}, [n, c, hw](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t p = 0; p < hw; ++p) {
                    gi[(b * c + ch) * hw + p] += self.grad[b * hw + p] / static_cast<double>(c);
                }
            }
        }
    });
}

Tensor activation(const Tensor& input, Activation kind) {
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        switch (kind) {
            case Activation::sigmoid: out[i] = sigmoid_scalar(v); break;
            case Activation::gelu: out[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); break;
            case Activation::silu: out[i] = v * sigmoid_scalar(v); break;
            case Activation::relu: out[i] = v > 0.0 ? v : 0.0; break;
        }
    }
    return make_result(input.shape(), std::move(out), {input}, [kind](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        const auto& x = parent_data(self, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = x[i];
            double d = 0.0;
            switch (kind) {
                case Activation::sigmoid: d = self.data[i] * (1.0 - self.data[i]); break;
                case Activation::gelu: {
                    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
                    const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
                    d = cdf + v * pdf;
                    break;
                }
                case Activation::silu: {
                    const double s = sigmoid_scalar(v);
                    d = s * (1.0 + v * (1.0 - s));
                    break;
                }
                case Activation::relu: d = v > 0.0 ? 1.0 : 0.0; break;
            }
            gi[i] += self.grad[i] * d;
        }
    });
}

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift, double eps) {
    const std::size_t len = input.shape().back();
    if (gain.shape() != Shape{len} || shift.shape() != Shape{len}) {
        shape_error("layer_norm", input.shape(), gain.shape());
    }
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t rows = input.numel() / len;
    const auto x = input.data();
    const auto gw = gain.data();
    const auto sh = shift.data();
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * len;
        double m = 0.0;
        for (std::size_t j = 0; j < len; ++j) m += xr[j];
        m /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t j = 0; j < len; ++j) var += (xr[j] - m) * (xr[j] - m);
        var /= static_cast<double>(len);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < len; ++j) {
            xhat[r * len + j] = (xr[j] - m) * rstd[r];
            out[r * len + j] = xhat[r * len + j] * gw[j] + sh[j];
        }
    }
    return make_result(input.shape(), std::move(out), {input, gain, shift},
                       [rows, len, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                           double* gx = parent_grad(self, 0);
                           double* gg = parent_grad(self, 1);
                           double* gs = parent_grad(self, 2);
                           const auto& gw = parent_data(self, 1);
                           const double n = static_cast<double>(len);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* g = self.grad.data() + r * len;
                               const double* xh = xhat.data() + r * len;
                               if (gg || gs) {
                                   for (std::size_t j = 0; j < len; ++j) {
                                       if (gg) gg[j] += g[j] * xh[j];
                                       if (gs) gs[j] += g[j];
                                   }
                               }
                               if (!gx) continue;
                               double mean_d = 0.0, mean_dx = 0.0;
                               for (std::size_t j = 0; j < len; ++j) {
                                   const double d = g[j] * gw[j];
                                   mean_d += d;
                                   mean_dx += d * xh[j];
                               }
                               mean_d /= n;
                               mean_dx /= n;
                               for (std::size_t j = 0; j < len; ++j) {
                                   gx[r * len + j] += rstd[r] * (g[j] * gw[j] - mean_d - xh[j] * mean_dx);
                               }
                           }
                       });
}

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) shape_error("matmul_batched", a.shape(), b.shape());
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    kernels::MatmulGeometry g;
    g.m = sa[sa.size() - 2];
    g.k = sa.back();
    g.p = sb.back();
    if (sb[sb.size() - 2] != g.k) shape_error("matmul_batched", sa, sb);
    g.batch = a.numel() / (g.m * g.k);
    if (sb.size() == 2) {
        g.rhs_batched = g.batch == 1;
    } else {
        if (!std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) shape_error("matmul_batched", sa, sb);
        g.rhs_batched = true;
    }
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(g.p);
    std::vector<double> out(g.batch * g.m * g.p);
    kernels::matmul(g, a.data(), b.data(), out);
    return make_result(std::move(out_shape), std::move(out), {a, b}, [g](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        if (na.requires_grad) kernels::matmul_backward_lhs(g, self.grad, nb.data, na.grad_buffer());
        if (nb.requires_grad) kernels::matmul_backward_rhs(g, self.grad, na.data, nb.grad_buffer());
    });
}

Tensor transpose_last2(const Tensor& x) {
    if (x.ndim() < 2) throw std::invalid_argument("transpose_last2: need at least 2 axes, got " + shape_str(x.shape()));
    Shape s = x.shape();
    const std::size_t r = s[s.size() - 2], c = s.back();
    const std::size_t batch = x.numel() / (r * c);
    std::swap(s[s.size() - 2], s.back());
    const auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[(b * c + j) * r + i] = d[(b * r + i) * c + j];
    return make_result(std::move(s), std::move(out), {x}, [batch, r, c](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gi[(b * r + i) * c + j] += self.grad[(b * c + j) * r + i];
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.ndim() != 2 || x.shape().back() != weight.dim(1)) shape_error("linear", x.shape(), weight.shape());
    if (bias.defined() && bias.shape() != Shape{weight.dim(0)}) shape_error("linear", weight.shape(), bias.shape());
    Tensor y = matmul_batched(x.ndim() == 1 ? reshape(x, {1, x.dim(0)}) : x, transpose_last2(weight));
    if (x.ndim() == 1) y = reshape(y, {weight.dim(0)});
    if (!bias.defined()) return y;
    const std::size_t out_f = weight.dim(0);
    std::vector<double> out(y.data().begin(), y.data().end());
    const auto bd = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % out_f];
    return make_result(y.shape(), std::move(out), {y, bias}, [out_f](Node& self) {
        double* gy = parent_grad(self, 0);
        double* gb = parent_grad(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (gy) gy[i] += self.grad[i];
            if (gb) gb[i % out_f] += self.grad[i];
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor abs(const Tensor& x) {
    const auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::fabs(d[i]);
    return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        const auto& d = parent_data(self, 0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double sgn = d[i] > 0.0 ? 1.0 : (d[i] < 0.0 ? -1.0 : 0.0);
            gi[i] += self.grad[i] * sgn;
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    const auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * factor;
    return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
        if (double* gi = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i] * factor;
    });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) shape_error("mul_scalar", x.shape(), s.shape());
    const double f = s.item();
    const auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * f;
    return make_result(x.shape(), std::move(out), {x, s}, [](Node& self) {
        double* gx = parent_grad(self, 0);
        double* gs = parent_grad(self, 1);
        const double f = parent_data(self, 1)[0];
        const auto& d = parent_data(self, 0);
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (gx) gx[i] += self.grad[i] * f;
            acc += self.grad[i] * d[i];
        }
        if (gs) gs[0] += acc;
    });
}

Tensor mul_channelwise(const Tensor& x, const Tensor& s) {
    require_4d("mul_channelwise", x);
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const bool per_sample = s.shape() == Shape{n, c};
    if (!per_sample && s.shape() != Shape{c}) shape_error("mul_channelwise", x.shape(), s.shape());
    const auto d = x.data();
    const auto f = s.data();
    std::vector<double> out(d.size());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = f[per_sample ? b * c + ch : ch];
            for (std::size_t p = 0; p < hw; ++p) out[(b * c + ch) * hw + p] = d[(b * c + ch) * hw + p] * v;
        }
    return make_result(x.shape(), std::move(out), {x, s}, [n, c, hw, per_sample](Node& self) {
        double* gx = parent_grad(self, 0);
        double* gs = parent_grad(self, 1);
        const auto& d = parent_data(self, 0);
        const auto& f = parent_data(self, 1);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t si = per_sample ? b * c + ch : ch;
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) {
                    const std::size_t i = (b * c + ch) * hw + p;
                    if (gx) gx[i] += self.grad[i] * f[si];
                    acc += self.grad[i] * d[i];
                }
                if (gs) gs[si] += acc;
            }
    });
}

Tensor mul_spatial(const Tensor& x, const Tensor& s) {
    require_4d("mul_spatial", x);
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (s.shape() != Shape{n, 1, x.dim(2), x.dim(3)}) shape_error("mul_spatial", x.shape(), s.shape());
    const auto d = x.data();
    const auto f = s.data();
    std::vector<double> out(d.size());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) out[(b * c + ch) * hw + p] = d[(b * c + ch) * hw + p] * f[b * hw + p];
    return make_result(x.shape(), std::move(out), {x, s}, [n, c, hw](Node& self) {
        double* gx = parent_grad(self, 0);
        double* gs = parent_grad(self, 1);
        const auto& d = parent_data(self, 0);
        const auto& f = parent_data(self, 1);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t p = 0; p < hw; ++p) {
                    const std::size_t i = (b * c + ch) * hw + p;
                    if (gx) gx[i] += self.grad[i] * f[b * hw + p];
                    if (gs) gs[b * hw + p] += self.grad[i] * d[i];
                }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
        if (double* gi = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
    });
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    require_4d("concat_channels", parts[0]);
    const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    std::vector<std::size_t> chans;
    std::size_t total = 0;
    for (const Tensor& t : parts) {
        require_4d("concat_channels", t);
        if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) shape_error("concat_channels", parts[0].shape(), t.shape());
        chans.push_back(t.dim(1));
        total += t.dim(1);
    }
    const std::size_t hw = h * w;
    std::vector<double> out(n * total * hw);
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto d = parts[k].data();
            std::copy_n(d.data() + b * chans[k] * hw, chans[k] * hw, out.data() + (b * total + off) * hw);
            off += chans[k];
        }
    }
    return make_result({n, total, h, w}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                       [n, total, hw, chans](Node& self) {
                           for (std::size_t b = 0; b < n; ++b) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < chans.size(); ++k) {
                                   if (double* gi = parent_grad(self, k)) {
                                       const double* g = self.grad.data() + (b * total + off) * hw;
                                       for (std::size_t i = 0; i < chans[k] * hw; ++i) gi[b * chans[k] * hw + i] += g[i];
                                   }
                                   off += chans[k];
                               }
                           }
                       });
}

Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t count) {
    require_4d("slice_channels", x);
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (count == 0 || start + count > c) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    const auto d = x.data();
    std::vector<double> out(n * count * hw);
    for (std::size_t b = 0; b < n; ++b)
        std::copy_n(d.data() + (b * c + start) * hw, count * hw, out.data() + b * count * hw);
    return make_result({n, count, x.dim(2), x.dim(3)}, std::move(out), {x}, [n, c, hw, start, count](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < count * hw; ++i) gi[(b * c + start) * hw + i] += self.grad[b * count * hw + i];
    });
}

Tensor concat_lastdim(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_lastdim: no inputs");
    const Shape& s0 = parts[0].shape();
    const std::size_t rows = parts[0].numel() / s0.back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) shape_error("concat_lastdim", s0, s);
        widths.push_back(s.back());
        total += s.back();
    }
    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto d = parts[k].data();
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(d.data() + r * widths[k], widths[k], out.data() + r * total + off);
        off += widths[k];
    }
    Shape os = s0;
    os.back() = total;
    return make_result(std::move(os), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                       [rows, total, widths](Node& self) {
                           std::size_t off = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                               if (double* gi = parent_grad(self, k))
                                   for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t j = 0; j < widths[k]; ++j)
                                           gi[r * widths[k] + j] += self.grad[r * total + off + j];
                               off += widths[k];
                           }
                       });
}

Tensor slice_lastdim(const Tensor& x, std::size_t start, std::size_t count) {
    const std::size_t width = x.shape().back();
    if (count == 0 || start + count > width) {
        throw std::invalid_argument("slice_lastdim: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / width;
    const auto d = x.data();
    std::vector<double> out(rows * count);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(d.data() + r * width + start, count, out.data() + r * count);
    Shape s = x.shape();
    s.back() = count;
    return make_result(std::move(s), std::move(out), {x}, [rows, width, start, count](Node& self) {
        double* gi = parent_grad(self, 0);
        if (!gi) return;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < count; ++j) gi[r * width + start + j] += self.grad[r * count + j];
    });
}

Tensor to_tokens(const Tensor& x) {
    require_4d("to_tokens", x);
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    return transpose_last2(reshape(x, {n, c, hw}));
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
    if (tokens.ndim() != 3 || tokens.dim(1) != height * width) {
        throw std::invalid_argument("from_tokens: " + shape_str(tokens.shape()) + " is not N x " +
                                    std::to_string(height * width) + " x C");
    }
    const std::size_t n = tokens.dim(0), c = tokens.dim(2);
    return reshape(transpose_last2(tokens), {n, c, height, width});
}

Tensor sum(const Tensor& x) {
    // Neumaier compensation keeps the reduction error near one ulp of the result.
    double total = 0.0, comp = 0.0;
    for (double v : x.data()) {
        const double t = total + v;
        comp += std::fabs(total) >= std::fabs(v) ? (total - t) + v : (v - t) + total;
        total = t;
    }
    total += comp;
    return make_result({1}, {total}, {x}, [](Node& self) {
        if (double* gi = parent_grad(self, 0)) {
            const double g = self.grad[0];
            for (std::size_t i = 0; i < self.parents[0]->data.size(); ++i) gi[i] += g;
        }
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace cenet
