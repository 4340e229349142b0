#pragma once

#include <string>
#include <vector>

#include "emovc/layers.hpp"
#include "emovc/random.hpp"
#include "emovc/tensor.hpp"

namespace emovc::model {

using nn::ParameterList;
using nn::Shape;
using nn::Tensor;

// Layer widths follow the published table. width_divisor > 1 shrinks every
// hidden channel count proportionally (mcep_dim and style_dim stay fixed);
// it exists so the full training loop can run at desk scale.
struct ModelConfig {
  int mcep_dim = 24;
  int crop_len = 128;
  int content_channels = 512;
  int style_dim = 16;
  int mlp_hidden = 256;
  int width_divisor = 1;
  double epsilon_in = 1e-5;

  // Hidden width for a layer listed with `full` filters.
  int width(int full) const;
  int code_channels() const { return width(content_channels); }
  int adain_blocks() const { return 3; }
  void validate() const;
};

// Stable key over every field; stored in checkpoints.
std::string config_fingerprint(const ModelConfig& config);

// Records (layer name, output shape) while a network runs.
struct ShapeTrace {
  std::vector<std::pair<std::string, Shape>> layers;
  void add(std::string name, const Tensor& t) { layers.emplace_back(std::move(name), t.shape()); }
};

class ContentEncoder {
 public:
  ContentEncoder() = default;
  ContentEncoder(const ModelConfig& config, Rng& rng);

  // (N, mcep_dim, T) with T % 4 == 0 -> (N, code_channels, T / 4).
  Tensor operator()(const Tensor& x, ShapeTrace* trace = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  struct ResBlock {
    nn::Conv1d conv_a, conv_b;
    nn::InstanceNorm norm_a, norm_b;
  };
  ModelConfig config_;
  nn::Conv1d in_conv_;
  nn::InstanceNorm in_norm_;
  std::vector<nn::Conv1d> down_convs_;
  std::vector<nn::InstanceNorm> down_norms_;
  std::vector<ResBlock> blocks_;
};

class StyleEncoder {
 public:
  StyleEncoder() = default;
  StyleEncoder(const ModelConfig& config, Rng& rng);

  // (N, mcep_dim, T), T >= 16 -> (N, style_dim). No normalization layers;
  // convolutions wrap around in time so the pooled code only depends on the
  // periodic content of the input.
  Tensor operator()(const Tensor& x, ShapeTrace* trace = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  ModelConfig config_;
  nn::Conv1d in_conv_;
  std::vector<nn::Conv1d> down_convs_;
  nn::Conv1d out_conv_;
};

// Three-layer MLP from a style code to per-block AdaIN parameters. The flat
// output has layout (block, channel, {mu, sigma}).
class StyleToAdain {
 public:
  StyleToAdain() = default;
  StyleToAdain(const ModelConfig& config, Rng& rng);

  // (N, style_dim) -> (N, blocks * channels * 2)
  Tensor operator()(const Tensor& style) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  // Column slices of the flat parameter tensor for one block.
  static Tensor mu(const Tensor& params, int block, int channels);
  static Tensor sigma(const Tensor& params, int block, int channels);

 private:
  nn::Linear hidden_a_, hidden_b_, head_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const ModelConfig& config, Rng& rng);

  // code (N, code_channels, L), style (N, style_dim) -> (N, mcep_dim, 4 L).
  Tensor operator()(const Tensor& code, const Tensor& style, ShapeTrace* trace = nullptr) const;
  const StyleToAdain& mlp() const { return mlp_; }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  struct AdaptiveBlock {
    nn::Conv1d conv_a, conv_b;
  };
  ModelConfig config_;
  StyleToAdain mlp_;
  std::vector<AdaptiveBlock> blocks_;
  std::vector<nn::Conv1d> up_convs_;
  nn::Conv1d out_conv_;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const ModelConfig& config, Rng& rng);

  // (N, mcep_dim, crop_len) -> (N, 1) probabilities of being real.
  Tensor operator()(const Tensor& x, ShapeTrace* trace = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  ModelConfig config_;
  nn::Conv2d in_conv_;
  std::vector<nn::Conv2d> down_convs_;
  std::vector<nn::InstanceNorm> down_norms_;
  nn::Linear dense_;
};

// The two-domain model: per domain a content encoder, a style encoder, a
// decoder (with its AdaIN MLP) and a discriminator. Domains are indexed 0/1.
struct EmotionVcModel {
  ModelConfig config;
  ContentEncoder content[2];
  StyleEncoder style[2];
  Decoder decoder[2];
  Discriminator critic[2];

  EmotionVcModel() = default;
  EmotionVcModel(const ModelConfig& config, Rng& rng);

  ParameterList generator_parameters() const;
  ParameterList discriminator_parameters() const;
  ParameterList all_parameters() const;
};

}  // namespace emovc::model
