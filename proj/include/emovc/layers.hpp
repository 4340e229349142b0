#pragma once

#include <array>
#include <string>
#include <vector>

#include "emovc/ops.hpp"
#include "emovc/random.hpp"
#include "emovc/tensor.hpp"

namespace emovc::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

inline constexpr double kInitStd = 0.02;

// Centered Gaussian weights; the caller's stream fixes the draw order.
Tensor gaussian_parameter(const Shape& shape, double stddev, Rng& rng);

class Conv1d {
 public:
  Conv1d() = default;
  // "Same" padding of (kernel - 1) / 2 on both sides.
  Conv1d(int in_channels, int out_channels, int kernel, int stride, Rng& rng, PadMode mode = PadMode::kZero);

  Tensor operator()(const Tensor& x) const { return conv1d(x, weight_, bias_, stride_, pad_, mode_); }
  void collect(const std::string& prefix, ParameterList& out) const;
  int out_channels() const { return weight_.dim(0); }

 private:
  Tensor weight_, bias_;
  int stride_ = 1;
  int pad_ = 0;
  PadMode mode_ = PadMode::kZero;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, std::array<int, 2> kernel, std::array<int, 2> stride, Rng& rng);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_, bias_;
  std::array<int, 2> stride_{1, 1};
  std::array<int, 2> pad_{0, 0};
};

// Instance normalization with a learned per-channel gain (init 1) and bias (init 0).
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(int channels, double eps);

  Tensor operator()(const Tensor& x) const { return channel_affine(instance_norm(x, eps_), gain_, bias_); }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor gain_, bias_;
  double eps_ = 1e-5;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng);

  Tensor operator()(const Tensor& x) const { return linear(x, weight_, bias_); }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_, bias_;
};

// sigma * (c - mean(c)) / sqrt(var(c) + eps) + mu, with mu and sigma of
// shape (N, C) modulating each example's channels.
Tensor adain(const Tensor& content, const Tensor& mu, const Tensor& sigma, double eps);

}  // namespace emovc::nn
