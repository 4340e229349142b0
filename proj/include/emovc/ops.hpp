#pragma once

#include <array>
#include <vector>

#include "emovc/tensor.hpp"

namespace emovc::nn {

enum class PadMode { kZero, kCircular };

// x: (N, Cin, T), weight: (Cout, Cin, K), bias: (Cout). Symmetric padding of
// `pad` frames on both sides.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad,
              PadMode mode = PadMode::kZero);

// x: (N, Cin, H, W), weight: (Cout, Cin, KH, KW), zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::array<int, 2> stride,
              std::array<int, 2> pad);

// Per (example, channel) standardization over every trailing axis:
// (x - mean) / sqrt(var + eps), population variance.
Tensor instance_norm(const Tensor& x, double eps);

// y = x * scale + shift, broadcast over trailing axes. scale/shift have shape
// (C) for a learned per-channel affine or (N, C) for per-example modulation.
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift);

// (N, C) -> (N, C * times); output column r*C + c copies input column c.
Tensor repeat_channels(const Tensor& x, int times);

// Splits axis 1 into halves (A, B) and returns A * sigmoid(B).
Tensor glu(const Tensor& x);

// (N, C, T) -> (N, C/r, r*T) with out[c][r*t + k] = x[c*r + k][t].
Tensor pixel_shuffle_1d(const Tensor& x, int r);

Tensor add(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sigmoid(const Tensor& x);

// (N, C, T) -> (N, C), the adaptive average pool to length one.
Tensor mean_over_time(const Tensor& x);

// x: (N, in), weight: (out, in), bias: (out).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// (N, D) -> (N, columns.size()); output column j copies input column columns[j].
Tensor gather_columns(const Tensor& x, std::vector<int> columns);

// Mean absolute difference over all elements.
Tensor l1_loss(const Tensor& a, const Tensor& b);

// -mean(log(clamp(p))) and -mean(log(1 - clamp(p))), clamp to [eps, 1 - eps].
// The gradient is zero where the clamp is active.
Tensor mean_neg_log(const Tensor& p, double eps);
Tensor mean_neg_log1m(const Tensor& p, double eps);

// sum_i weights[i] * terms[i] over scalar terms.
Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights);

}  // namespace emovc::nn
