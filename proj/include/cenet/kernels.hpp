#pragma once

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial` is the plain nested-loop reference and
// `parallel` distributes independent outer iterations across OpenMP threads.
// Each output element is reduced by exactly one thread in the same order as
// the serial version, so both backends are bitwise identical.

#include <cstddef>
#include <span>

namespace cenet::kernels {

struct ConvGeometry {
    std::size_t batch = 0;
    std::size_t in_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    std::size_t out_height = 0;
    std::size_t out_width = 0;

    std::size_t in_per_group() const { return in_channels / groups; }
    std::size_t out_per_group() const { return out_channels / groups; }
};

// Output extent of a convolution along one axis, or 0 when it would be < 1.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t dilation, std::size_t padding);

struct MatmulGeometry {
    std::size_t batch = 1;
    std::size_t m = 0;
    std::size_t k = 0;
    std::size_t p = 0;
    bool rhs_batched = true;  // false: a single K x P matrix shared by all batches
};

// Half-pixel bilinear sampling of `planes` independent H x W planes.
struct ResizeGeometry {
    std::size_t planes = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t out_height = 0;
    std::size_t out_width = 0;
};

enum class Backend { serial, parallel };
void set_backend(Backend backend);
Backend backend();

#define CENET_KERNEL_DECLS                                                                  \
    void conv2d_forward(const ConvGeometry& g, std::span<const double> input,               \
                        std::span<const double> weight, std::span<const double> bias,       \
                        std::span<double> out);                                             \
    /* grad buffers below accumulate (+=) */                                                \
    void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,     \
                               std::span<const double> weight, std::span<double> grad_in);  \
    void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,    \
                                std::span<const double> input, std::span<double> grad_w,    \
                                std::span<double> grad_bias);                               \
    void matmul(const MatmulGeometry& g, std::span<const double> a,                         \
                std::span<const double> b, std::span<double> out);                          \
    void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> grad_out,     \
                             std::span<const double> b, std::span<double> grad_a);          \
    void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> grad_out,     \
                             std::span<const double> a, std::span<double> grad_b);          \
    void resize_forward(const ResizeGeometry& g, std::span<const double> input,             \
                        std::span<double> out);                                             \
    void resize_backward(const ResizeGeometry& g, std::span<const double> grad_out,         \
                         std::span<double> grad_in);

namespace serial {
CENET_KERNEL_DECLS
}  // namespace serial

namespace parallel {
CENET_KERNEL_DECLS
}  // namespace parallel

// Dispatch to the active backend.
CENET_KERNEL_DECLS

#undef CENET_KERNEL_DECLS

// Source coordinate and blend weight for one output index under half-pixel
// mapping, clamped to the input range.
struct ResizeTap {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double frac = 0.0;
};
ResizeTap resize_tap(std::size_t dst, std::size_t in_extent, std::size_t out_extent);

}  // namespace cenet::kernels
