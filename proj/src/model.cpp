#include "emovc/model.hpp"

#include <algorithm>
#include <sstream>

#include "emovc/error.hpp"

namespace emovc::model {
namespace {

using nn::Conv1d;
using nn::Conv2d;
using nn::InstanceNorm;
using nn::PadMode;

constexpr int kDownsampleCount = 2;
constexpr int kContentResBlocks = 4;
constexpr int kDecoderResBlocks = 3;

}  // namespace

int ModelConfig::width(int full) const { return std::max(2, full / std::max(1, width_divisor)); }

void ModelConfig::validate() const {
  if (mcep_dim < 1 || style_dim < 1 || content_channels < 2 || mlp_hidden < 2) {
    throw ConfigError("model config: dimensions must be positive");
  }
  if (width_divisor < 1) throw ConfigError("model config: width_divisor must be >= 1");
  if (crop_len % 16 != 0) throw ConfigError("model config: crop_len must be a multiple of 16");
  if (!(epsilon_in > 0.0)) throw ConfigError("model config: epsilon_in must be positive");
}

std::string config_fingerprint(const ModelConfig& c) {
  std::ostringstream os;
  os << "mcep=" << c.mcep_dim << ";crop=" << c.crop_len << ";content=" << c.content_channels
     << ";style=" << c.style_dim << ";mlp=" << c.mlp_hidden << ";div=" << c.width_divisor << ";eps=" << c.epsilon_in;
  return os.str();
}

// ---------------------------------------------------------------------------

ContentEncoder::ContentEncoder(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const int c128 = config.width(128), c256 = config.width(256), c512 = config.code_channels();
  in_conv_ = Conv1d(config.mcep_dim, 2 * c128, 15, 1, rng);
  in_norm_ = InstanceNorm(2 * c128, config.epsilon_in);
  const int widths[kDownsampleCount + 1] = {c128, c256, c512};
  for (int i = 0; i < kDownsampleCount; ++i) {
    down_convs_.emplace_back(widths[i], 2 * widths[i + 1], 5, 2, rng);
    down_norms_.emplace_back(2 * widths[i + 1], config.epsilon_in);
  }
  for (int i = 0; i < kContentResBlocks; ++i) {
    ResBlock block;
    block.conv_a = Conv1d(c512, 2 * c512, 3, 1, rng);
    block.norm_a = InstanceNorm(2 * c512, config.epsilon_in);
    block.conv_b = Conv1d(c512, c512, 3, 1, rng);
    block.norm_b = InstanceNorm(c512, config.epsilon_in);
    blocks_.push_back(std::move(block));
  }
}

Tensor ContentEncoder::operator()(const Tensor& x, ShapeTrace* trace) const {
  if (x.rank() != 3 || x.dim(1) != config_.mcep_dim) {
    throw ShapeError("content encoder: expected (N, " + std::to_string(config_.mcep_dim) + ", T), got " +
                     nn::shape_string(x.shape()));
  }
  if (x.dim(2) % 4 != 0 || x.dim(2) == 0) {
    throw ShapeError("content encoder: frame count " + std::to_string(x.dim(2)) + " is not a positive multiple of 4");
  }
  Tensor h = nn::glu(in_norm_(in_conv_(x)));
  if (trace) trace->add("content.in", h);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    h = nn::glu(down_norms_[i](down_convs_[i](h)));
    if (trace) trace->add("content.down" + std::to_string(i), h);
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const ResBlock& b = blocks_[i];
    Tensor r = nn::glu(b.norm_a(b.conv_a(h)));
    r = b.norm_b(b.conv_b(r));
    h = nn::add(h, r);
    if (trace) trace->add("content.res" + std::to_string(i), h);
  }
  return h;
}

void ContentEncoder::collect(const std::string& prefix, ParameterList& out) const {
  in_conv_.collect(prefix + ".in.conv", out);
  in_norm_.collect(prefix + ".in.norm", out);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    down_convs_[i].collect(prefix + ".down" + std::to_string(i) + ".conv", out);
    down_norms_[i].collect(prefix + ".down" + std::to_string(i) + ".norm", out);
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + ".res" + std::to_string(i);
    blocks_[i].conv_a.collect(p + ".conv_a", out);
    blocks_[i].norm_a.collect(p + ".norm_a", out);
    blocks_[i].conv_b.collect(p + ".conv_b", out);
    blocks_[i].norm_b.collect(p + ".norm_b", out);
  }
}

// ---------------------------------------------------------------------------

StyleEncoder::StyleEncoder(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const int c128 = config.width(128), c256 = config.width(256), c512 = config.width(512);
  in_conv_ = Conv1d(config.mcep_dim, 2 * c128, 15, 1, rng, PadMode::kCircular);
  down_convs_.emplace_back(c128, 2 * c256, 5, 2, rng, PadMode::kCircular);
  down_convs_.emplace_back(c256, 2 * c512, 5, 2, rng, PadMode::kCircular);
  down_convs_.emplace_back(c512, 2 * c512, 3, 2, rng, PadMode::kCircular);
  down_convs_.emplace_back(c512, 2 * c512, 3, 2, rng, PadMode::kCircular);
  out_conv_ = Conv1d(c512, config.style_dim, 1, 1, rng);
}

Tensor StyleEncoder::operator()(const Tensor& x, ShapeTrace* trace) const {
  if (x.rank() != 3 || x.dim(1) != config_.mcep_dim) {
    throw ShapeError("style encoder: expected (N, " + std::to_string(config_.mcep_dim) + ", T), got " +
                     nn::shape_string(x.shape()));
  }
  if (x.dim(2) < 16) throw ShapeError("style encoder: need at least 16 frames, got " + std::to_string(x.dim(2)));
  Tensor h = nn::glu(in_conv_(x));
  if (trace) trace->add("style.in", h);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    h = nn::glu(down_convs_[i](h));
    if (trace) trace->add("style.down" + std::to_string(i), h);
  }
  const int n = h.dim(0), c = h.dim(1);
  h = nn::reshape(nn::mean_over_time(h), {n, c, 1});
  if (trace) trace->add("style.pool", h);
  h = nn::reshape(out_conv_(h), {n, config_.style_dim});
  if (trace) trace->add("style.code", h);
  return h;
}

void StyleEncoder::collect(const std::string& prefix, ParameterList& out) const {
  in_conv_.collect(prefix + ".in.conv", out);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    down_convs_[i].collect(prefix + ".down" + std::to_string(i) + ".conv", out);
  }
  out_conv_.collect(prefix + ".out.conv", out);
}

// ---------------------------------------------------------------------------

StyleToAdain::StyleToAdain(const ModelConfig& config, Rng& rng) {
  const int hidden = config.width(config.mlp_hidden);
  hidden_a_ = nn::Linear(config.style_dim, 2 * hidden, rng);
  hidden_b_ = nn::Linear(hidden, 2 * hidden, rng);
  head_ = nn::Linear(hidden, config.adain_blocks() * config.code_channels() * 2, rng);
}

Tensor StyleToAdain::operator()(const Tensor& style) const {
  if (style.rank() != 2) throw ShapeError("style_to_adain: expected (N, style_dim)");
  Tensor h = nn::glu(hidden_a_(style));
  h = nn::glu(hidden_b_(h));
  return head_(h);
}

namespace {

Tensor adain_column(const Tensor& params, int block, int channels, int which) {
  std::vector<int> cols(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) cols[static_cast<std::size_t>(c)] = (block * channels + c) * 2 + which;
  return nn::gather_columns(params, std::move(cols));
}

}  // namespace

Tensor StyleToAdain::mu(const Tensor& params, int block, int channels) {
  return adain_column(params, block, channels, 0);
}

Tensor StyleToAdain::sigma(const Tensor& params, int block, int channels) {
  return adain_column(params, block, channels, 1);
}

void StyleToAdain::collect(const std::string& prefix, ParameterList& out) const {
  hidden_a_.collect(prefix + ".hidden_a", out);
  hidden_b_.collect(prefix + ".hidden_b", out);
  head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------

Decoder::Decoder(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const int c256 = config.width(256), c512 = config.code_channels();
  mlp_ = StyleToAdain(config, rng);
  for (int i = 0; i < kDecoderResBlocks; ++i) {
    blocks_.push_back({Conv1d(c512, 2 * c512, 3, 1, rng), Conv1d(c512, c512, 3, 1, rng)});
  }
  // Each upsample conv feeds a x2 pixel shuffle and then a GLU, hence 4x.
  up_convs_.emplace_back(c512, 4 * config.width(512), 5, 1, rng);
  up_convs_.emplace_back(config.width(512), 4 * c256, 5, 1, rng);
  out_conv_ = Conv1d(c256, config.mcep_dim, 15, 1, rng);
}

Tensor Decoder::operator()(const Tensor& code, const Tensor& style, ShapeTrace* trace) const {
  const int channels = config_.code_channels();
  if (code.rank() != 3 || code.dim(1) != channels) {
    throw ShapeError("decoder: expected code (N, " + std::to_string(channels) + ", L), got " +
                     nn::shape_string(code.shape()));
  }
  if (style.rank() != 2 || style.dim(0) != code.dim(0) || style.dim(1) != config_.style_dim) {
    throw ShapeError("decoder: style " + nn::shape_string(style.shape()) + " does not match code batch " +
                     std::to_string(code.dim(0)));
  }
  const Tensor params = mlp_(style);
  Tensor h = code;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const int b = static_cast<int>(i);
    const Tensor mu = StyleToAdain::mu(params, b, channels);
    const Tensor sigma = StyleToAdain::sigma(params, b, channels);
    // Value and gate halves of the gated conv share the block's statistics.
    Tensor r = blocks_[i].conv_a(h);
    r = nn::glu(nn::adain(r, nn::repeat_channels(mu, 2), nn::repeat_channels(sigma, 2), config_.epsilon_in));
    r = nn::adain(blocks_[i].conv_b(r), mu, sigma, config_.epsilon_in);
    h = nn::add(h, r);
    if (trace) trace->add("decoder.res" + std::to_string(i), h);
  }
  for (std::size_t i = 0; i < up_convs_.size(); ++i) {
    h = nn::glu(nn::pixel_shuffle_1d(up_convs_[i](h), 2));
    if (trace) trace->add("decoder.up" + std::to_string(i), h);
  }
  h = out_conv_(h);
  if (trace) trace->add("decoder.out", h);
  return h;
}

void Decoder::collect(const std::string& prefix, ParameterList& out) const {
  mlp_.collect(prefix + ".mlp", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].conv_a.collect(prefix + ".res" + std::to_string(i) + ".conv_a", out);
    blocks_[i].conv_b.collect(prefix + ".res" + std::to_string(i) + ".conv_b", out);
  }
  for (std::size_t i = 0; i < up_convs_.size(); ++i) up_convs_[i].collect(prefix + ".up" + std::to_string(i), out);
  out_conv_.collect(prefix + ".out", out);
}

// ---------------------------------------------------------------------------

namespace {

int conv_out(int size, int kernel, int stride) { return (size + 2 * ((kernel - 1) / 2) - kernel) / stride + 1; }

}  // namespace

Discriminator::Discriminator(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const int d128 = config.width(128), d256 = config.width(256), d512 = config.width(512),
            d1024 = config.width(1024);
  in_conv_ = Conv2d(1, 2 * d128, {3, 3}, {1, 2}, rng);
  down_convs_.emplace_back(d128, 2 * d256, std::array<int, 2>{3, 3}, std::array<int, 2>{2, 2}, rng);
  down_convs_.emplace_back(d256, 2 * d512, std::array<int, 2>{3, 3}, std::array<int, 2>{2, 2}, rng);
  down_convs_.emplace_back(d512, 2 * d1024, std::array<int, 2>{6, 3}, std::array<int, 2>{1, 2}, rng);
  for (int c : {d256, d512, d1024}) down_norms_.emplace_back(2 * c, config.epsilon_in);

  int h = conv_out(config.mcep_dim, 3, 1), w = conv_out(config.crop_len, 3, 2);
  h = conv_out(h, 3, 2), w = conv_out(w, 3, 2);
  h = conv_out(h, 3, 2), w = conv_out(w, 3, 2);
  h = conv_out(h, 6, 1), w = conv_out(w, 3, 2);
  if (h < 1 || w < 1) throw ConfigError("discriminator: input too small for the layer stack");
  dense_ = nn::Linear(d1024 * h * w, 1, rng);
}

Tensor Discriminator::operator()(const Tensor& x, ShapeTrace* trace) const {
  if (x.rank() != 3 || x.dim(1) != config_.mcep_dim || x.dim(2) != config_.crop_len) {
    throw ShapeError("discriminator: expected (N, " + std::to_string(config_.mcep_dim) + ", " +
                     std::to_string(config_.crop_len) + "), got " + nn::shape_string(x.shape()));
  }
  const int n = x.dim(0);
  Tensor h = nn::glu(in_conv_(nn::reshape(x, {n, 1, x.dim(1), x.dim(2)})));
  if (trace) trace->add("critic.in", h);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    h = nn::glu(down_norms_[i](down_convs_[i](h)));
    if (trace) trace->add("critic.down" + std::to_string(i), h);
  }
  h = nn::reshape(h, {n, static_cast<int>(h.numel()) / n});
  h = nn::sigmoid(dense_(h));
  if (trace) trace->add("critic.out", h);
  return h;
}

void Discriminator::collect(const std::string& prefix, ParameterList& out) const {
  in_conv_.collect(prefix + ".in.conv", out);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    down_convs_[i].collect(prefix + ".down" + std::to_string(i) + ".conv", out);
    down_norms_[i].collect(prefix + ".down" + std::to_string(i) + ".norm", out);
  }
  dense_.collect(prefix + ".dense", out);
}

// ---------------------------------------------------------------------------

EmotionVcModel::EmotionVcModel(const ModelConfig& cfg, Rng& rng) : config(cfg) {
  for (int d = 0; d < 2; ++d) {
    content[d] = ContentEncoder(cfg, rng);
    style[d] = StyleEncoder(cfg, rng);
    decoder[d] = Decoder(cfg, rng);
    critic[d] = Discriminator(cfg, rng);
  }
}

ParameterList EmotionVcModel::generator_parameters() const {
  ParameterList out;
  for (int d = 0; d < 2; ++d) {
    const std::string tag = std::to_string(d + 1);
    content[d].collect("content" + tag, out);
    style[d].collect("style" + tag, out);
    decoder[d].collect("decoder" + tag, out);
  }
  return out;
}

ParameterList EmotionVcModel::discriminator_parameters() const {
  ParameterList out;
  for (int d = 0; d < 2; ++d) critic[d].collect("critic" + std::to_string(d + 1), out);
  return out;
}

ParameterList EmotionVcModel::all_parameters() const {
  ParameterList out = generator_parameters();
  ParameterList critics = discriminator_parameters();
  out.insert(out.end(), critics.begin(), critics.end());
  return out;
}

}  // namespace emovc::model
