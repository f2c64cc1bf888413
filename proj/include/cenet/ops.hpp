#pragma once

#include <span>
#include <vector>

#include "cenet/tensor.hpp"

namespace cenet {

struct ConvOptions {
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

/// Cross-correlation over N x Cin x H x W with weight Cout x Cin/groups x k x k.
/// `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvOptions opts = {});

/// Half-pixel bilinear resize to round(H*scale) x round(W*scale).
Tensor bilinear_resize(const Tensor& input, double scale);
/// Half-pixel bilinear resize to an explicit target extent.
Tensor resize_to(const Tensor& input, std::size_t height, std::size_t width);

Tensor softmax_lastdim(const Tensor& input);

// avg || max || population std over H x W, per channel: N x C x H x W -> N x 3C.
Tensor spatial_masp(const Tensor& input);
// avg, max, population std across channels, per position: N x C x H x W -> N x 3 x H x W.
Tensor channel_masp(const Tensor& input);
// Mean across channels: N x C x H x W -> N x 1 x H x W.
Tensor channel_mean(const Tensor& input);

enum class Activation { sigmoid, gelu, silu, relu };
Tensor activation(const Tensor& input, Activation kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor gelu(const Tensor& x) { return activation(x, Activation::gelu); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::silu); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }

// Normalizes over the last axis, then gain/shift of that length.
Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift, double eps = 1e-5);

/// [..., M, K] x [..., K, P]. The right operand may also be a plain K x P
/// matrix shared across all leading indices.
Tensor matmul_batched(const Tensor& a, const Tensor& b);
// x[..., in] * w[out, in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose_last2(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
// x * s where s is a single-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
// N x C x H x W times a per-channel factor of shape [C] or [N, C].
Tensor mul_channelwise(const Tensor& x, const Tensor& s);
// N x C x H x W times a spatial map N x 1 x H x W.
Tensor mul_spatial(const Tensor& x, const Tensor& s);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_lastdim(std::span<const Tensor> parts);
Tensor slice_lastdim(const Tensor& x, std::size_t start, std::size_t count);

// N x C x H x W <-> N x (H*W) x C
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace cenet
