#include "emovc/layers.hpp"

#include "emovc/error.hpp"

namespace emovc::nn {

Tensor gaussian_parameter(const Shape& shape, double stddev, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = stddev * rng.normal();
  return Tensor(shape, std::move(values), true);
}

Conv1d::Conv1d(int in_channels, int out_channels, int kernel, int stride, Rng& rng, PadMode mode)
    : weight_(gaussian_parameter({out_channels, in_channels, kernel}, kInitStd, rng)),
      bias_(Tensor::zeros({out_channels}, true)),
      stride_(stride),
      pad_((kernel - 1) / 2),
      mode_(mode) {}

void Conv1d::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Conv2d::Conv2d(int in_channels, int out_channels, std::array<int, 2> kernel, std::array<int, 2> stride, Rng& rng)
    : weight_(gaussian_parameter({out_channels, in_channels, kernel[0], kernel[1]}, kInitStd, rng)),
      bias_(Tensor::zeros({out_channels}, true)),
      stride_(stride),
      pad_{(kernel[0] - 1) / 2, (kernel[1] - 1) / 2} {}

void Conv2d::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

InstanceNorm::InstanceNorm(int channels, double eps)
    : gain_(Tensor::full({channels}, 1.0, true)), bias_(Tensor::zeros({channels}, true)), eps_(eps) {}

void InstanceNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gain", gain_});
  out.push_back({prefix + ".bias", bias_});
}

Linear::Linear(int in_features, int out_features, Rng& rng)
    : weight_(gaussian_parameter({out_features, in_features}, kInitStd, rng)),
      bias_(Tensor::zeros({out_features}, true)) {}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Tensor adain(const Tensor& content, const Tensor& mu, const Tensor& sigma, double eps) {
  if (content.rank() < 2 || mu.rank() != 2 || mu.dim(0) != content.dim(0) || mu.dim(1) != content.dim(1)) {
    throw ShapeError("adain: style params " + shape_string(mu.shape()) + " do not match content " +
                     shape_string(content.shape()));
  }
  return channel_affine(instance_norm(content, eps), sigma, mu);
}

}  // namespace emovc::nn
