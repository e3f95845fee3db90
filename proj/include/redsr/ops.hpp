#pragma once

#include <cstddef>

#include "redsr/tensor.hpp"

// Differentiable operator set. Every op validates shapes (DimensionError),
// rejects non-finite outputs (NumericError) and records a backward closure
// when any input requires grad.
namespace redsr::ops {

// Elementwise. Binary ops accept identical shapes, or either side holding a
// single element (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

/// Cross-correlation with zero padding.
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw] -> [N,Cout,H',W'],
/// H' = (H + 2*padding - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding);
/// Same, plus a per-output-channel bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// input [N,Din], weight [Dout,Din], bias [Dout] -> [N,Dout].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);
/// mean(|a - b|) over all elements.
Tensor l1_mean(const Tensor& a, const Tensor& b);
/// Per-sample mean(|a - b|) over all but the leading dimension -> [N].
Tensor l1_per_sample(const Tensor& a, const Tensor& b);
/// a [b,C], b [m,C] -> [b,m] Euclidean distances. The gradient at a zero
/// distance is the zero vector.
Tensor pairwise_l2(const Tensor& a, const Tensor& b);

/// Keeps pixels at rows/cols {0, s, 2s, ...}. H and W must be divisible by s.
Tensor decimate(const Tensor& x, std::size_t s);
/// Repeats each pixel into an s x s block.
Tensor nn_upsample(const Tensor& x, std::size_t s);

/// Feature-wise affine: x [N,C,H,W] * gamma [N,C] + beta [N,C].
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

Tensor reshape(const Tensor& x, Shape shape);

}  // namespace redsr::ops
