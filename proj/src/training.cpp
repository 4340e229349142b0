#include "emovc/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "emovc/error.hpp"
#include "emovc/ops.hpp"

namespace emovc::training {

double OptimizerSchedule::lr_scale(std::int64_t iteration) const {
  if (iteration <= decay_start) return 1.0;
  if (total_iters <= decay_start) return 0.0;
  const double s = static_cast<double>(total_iters - iteration) / static_cast<double>(total_iters - decay_start);
  return std::max(0.0, s);
}

void OptimizerSchedule::validate() const {
  if (!(lr_d > 0.0) || !(lr_g > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (total_iters <= 0) throw ConfigError("total_iters must be positive");
  if (decay_start < 0 || decay_start > total_iters) throw ConfigError("decay_start must lie in [0, total_iters]");
  if (ratio_switch_iter < 0) throw ConfigError("ratio_switch_iter must be non-negative");
  if (gen_steps_before_switch < 1) throw ConfigError("gen_steps_before_switch must be at least 1");
}

void TrainConfig::validate() const {
  model.validate();
  schedule.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  for (double w : {weights.lambda_s, weights.lambda_c, weights.lambda_g, weights.lambda_x}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw ConfigError("prob_clamp must lie in (0, 0.5)");
  if (!(style_ema_decay >= 0.0 && style_ema_decay < 1.0)) throw ConfigError("style_ema_decay must lie in [0, 1)");
  if (nan_check_every < 1) throw ConfigError("nan_check_every must be at least 1");
}

TrainConfig desk_scale_config(std::uint64_t seed) {
  TrainConfig c;
  c.model.width_divisor = 16;
  c.batch_size = 4;
  c.seed = seed;
  c.schedule.total_iters = 2000;
  c.schedule.decay_start = 1500;
  c.schedule.ratio_switch_iter = 1000;
  return c;
}

std::string config_hash(const TrainConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17) << model::config_fingerprint(c.model) << ";ls=" << c.weights.lambda_s
     << ";lc=" << c.weights.lambda_c << ";lg=" << c.weights.lambda_g << ";lx=" << c.weights.lambda_x
     << ";lrd=" << c.schedule.lr_d << ";lrg=" << c.schedule.lr_g << ";b1=" << c.schedule.beta1
     << ";b2=" << c.schedule.beta2 << ";eps=" << c.schedule.adam_eps << ";decay=" << c.schedule.decay_start
     << ";switch=" << c.schedule.ratio_switch_iter << ";gsteps=" << c.schedule.gen_steps_before_switch
     << ";total=" << c.schedule.total_iters << ";batch=" << c.batch_size << ";seed=" << c.seed
     << ";gform=" << static_cast<int>(c.generator_loss) << ";clamp=" << c.prob_clamp
     << ";ema=" << c.style_ema_decay;
  // FNV-1a, 64 bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

double total_loss(const LossParts& p, const LossWeights& w) {
  return w.lambda_s * (p.style[0] + p.style[1]) + w.lambda_c * (p.content[0] + p.content[1]) +
         w.lambda_x * (p.recon[0] + p.recon[1]) + w.lambda_g * p.gan_g;
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& x_rec) { return nn::l1_loss(x_rec, x); }

SemiCycleLosses semi_cycle_losses(const Tensor& source_content, const Tensor& target_style, const Tensor& translated,
                                  const model::ContentEncoder& target_content_encoder,
                                  const model::StyleEncoder& target_style_encoder) {
  return {nn::l1_loss(target_content_encoder(translated), source_content),
          nn::l1_loss(target_style_encoder(translated), target_style)};
}

Tensor discriminator_loss(const Tensor& p_real, const Tensor& p_fake, double clamp) {
  return nn::add(nn::mean_neg_log(p_real, clamp), nn::mean_neg_log1m(p_fake, clamp));
}

Tensor generator_gan_loss(const Tensor& p_fake, GanGeneratorLoss form, double clamp) {
  if (form == GanGeneratorLoss::kNonSaturating) return nn::mean_neg_log(p_fake, clamp);
  return nn::weighted_sum({nn::mean_neg_log1m(p_fake, clamp)}, {-1.0});
}

GanLossValues gan_losses(const Tensor& p_real, const Tensor& p_fake, double clamp, GanGeneratorLoss form) {
  nn::NoGradGuard guard;
  return {discriminator_loss(p_real, p_fake, clamp).item(), generator_gan_loss(p_fake, form, clamp).item()};
}

void update_domain_style(DomainStyleState& state, int domain, std::span<const double> codes, int style_dim) {
  if (domain < 0 || domain > 1) throw InvalidInputError("domain index must be 0 or 1");
  if (style_dim <= 0 || codes.size() % static_cast<std::size_t>(style_dim) != 0) {
    throw ShapeError("style codes do not divide into rows of " + std::to_string(style_dim));
  }
  auto& mean = state.mean[domain];
  for (std::size_t r = 0; r < codes.size() / style_dim; ++r) {
    const auto row = codes.subspan(r * style_dim, style_dim);
    if (state.count[domain] == 0) {
      mean.assign(row.begin(), row.end());
    } else {
      if (mean.size() != row.size()) throw ShapeError("style code width changed");
      for (int i = 0; i < style_dim; ++i) mean[i] = state.decay * mean[i] + (1.0 - state.decay) * row[i];
    }
    ++state.count[domain];
  }
}

// ---------------------------------------------------------------------------

Adam::Adam(nn::ParameterList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    auto w = t.mutable_values();
    const auto g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------

TrainState make_initial_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.rng = Rng(config.seed);
  s.model = EmotionVcModel(config.model, s.rng);
  const auto& sch = config.schedule;
  s.gen_opt = Adam(s.model.generator_parameters(), sch.beta1, sch.beta2, sch.adam_eps);
  s.disc_opt = Adam(s.model.discriminator_parameters(), sch.beta1, sch.beta2, sch.adam_eps);
  s.styles.decay = config.style_ema_decay;
  return s;
}

Tensor batch_tensor(const dataset::CropBatch& b) { return Tensor({b.batch, b.rows, b.frames}, b.data); }

namespace {

class FreezeGuard {
 public:
  explicit FreezeGuard(const nn::ParameterList& params) : params_(params) {
    for (auto& p : params_) p.tensor.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.tensor.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nn::ParameterList params_;
};

void check_finite(double v, const char* name, std::int64_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + name + " at iteration " + std::to_string(iteration));
  }
}

void check_parameters(const nn::ParameterList& params, std::int64_t iteration) {
  for (const auto& p : params) {
    for (double v : p.tensor.values()) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite value in parameter " + p.name + " at iteration " + std::to_string(iteration));
      }
    }
  }
}

}  // namespace

double discriminator_update(TrainState& s, const dataset::TrainingBatch& batch, double lr) {
  auto& m = s.model;
  const Tensor x1 = batch_tensor(batch.x1), x2 = batch_tensor(batch.x2);
  Tensor x12, x21;
  {
    nn::NoGradGuard guard;
    const Tensor c1 = m.content[0](x1), s1 = m.style[0](x1);
    const Tensor c2 = m.content[1](x2), s2 = m.style[1](x2);
    x21 = m.decoder[1](c1, s2).detach();
    x12 = m.decoder[0](c2, s1).detach();
  }
  s.disc_opt.zero_grad();
  const double clamp = s.config.prob_clamp;
  const Tensor l1 = discriminator_loss(m.critic[0](x1), m.critic[0](x12), clamp);
  const Tensor l2 = discriminator_loss(m.critic[1](x2), m.critic[1](x21), clamp);
  const Tensor loss = nn::add(l1, l2);
  const double value = loss.item();
  check_finite(value, "discriminator loss", s.iteration + 1);
  loss.backward();
  s.disc_opt.step(lr);
  s.disc_opt.zero_grad();
  return value;
}

LossParts generator_update(TrainState& s, const dataset::TrainingBatch& batch, double lr) {
  auto& m = s.model;
  const auto& cfg = s.config;
  FreezeGuard freeze(s.disc_opt.parameters());
  s.gen_opt.zero_grad();

  const Tensor x1 = batch_tensor(batch.x1), x2 = batch_tensor(batch.x2);
  const Tensor c1 = m.content[0](x1), s1 = m.style[0](x1);
  const Tensor c2 = m.content[1](x2), s2 = m.style[1](x2);

  const Tensor rec1 = reconstruction_loss(x1, m.decoder[0](c1, s1));
  const Tensor rec2 = reconstruction_loss(x2, m.decoder[1](c2, s2));

  const Tensor x21 = m.decoder[1](c1, s2);
  const Tensor x12 = m.decoder[0](c2, s1);
  const SemiCycleLosses cyc21 = semi_cycle_losses(c1, s2, x21, m.content[1], m.style[1]);
  const SemiCycleLosses cyc12 = semi_cycle_losses(c2, s1, x12, m.content[0], m.style[0]);

  const Tensor gan = nn::add(generator_gan_loss(m.critic[0](x12), cfg.generator_loss, cfg.prob_clamp),
                             generator_gan_loss(m.critic[1](x21), cfg.generator_loss, cfg.prob_clamp));

  const auto& w = cfg.weights;
  const Tensor total = nn::weighted_sum(
      {cyc12.style, cyc21.style, cyc21.content, cyc12.content, rec1, rec2, gan},
      {w.lambda_s, w.lambda_s, w.lambda_c, w.lambda_c, w.lambda_x, w.lambda_x, w.lambda_g});

  LossParts parts;
  parts.recon = {rec1.item(), rec2.item()};
  parts.content = {cyc21.content.item(), cyc12.content.item()};
  parts.style = {cyc12.style.item(), cyc21.style.item()};
  parts.gan_g = gan.item();
  parts.total = total.item();
  check_finite(parts.total, "generator loss", s.iteration + 1);

  total.backward();
  s.gen_opt.step(lr);
  s.gen_opt.zero_grad();

  const int dim = cfg.model.style_dim;
  update_domain_style(s.styles, 0, s1.values(), dim);
  update_domain_style(s.styles, 1, s2.values(), dim);
  return parts;
}

StepReport train_step(TrainState& s, const dataset::DomainCorpus& first, const dataset::DomainCorpus& second) {
  const std::int64_t it = s.iteration + 1;
  const auto& sch = s.config.schedule;
  StepReport r;
  r.iteration = it;
  r.lr_g = sch.lr_g_at(it);
  r.lr_d = sch.lr_d_at(it);
  r.gen_steps = sch.gen_steps_at(it);

  const int n = s.config.batch_size, len = s.config.model.crop_len;
  const double gan_d = discriminator_update(s, dataset::make_batch(first, second, n, s.rng, len), r.lr_d);
  for (int k = 0; k < r.gen_steps; ++k) {
    r.parts = generator_update(s, dataset::make_batch(first, second, n, s.rng, len), r.lr_g);
  }
  r.parts.gan_d = gan_d;
  s.iteration = it;
  if (it % s.config.nan_check_every == 0) {
    check_parameters(s.gen_opt.parameters(), it);
    check_parameters(s.disc_opt.parameters(), it);
  }
  return r;
}

// ---------------------------------------------------------------------------

LossLog::LossLog(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
  if (fresh) {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw InvalidInputError("cannot write loss log " + path_.string());
    out << header() << '\n';
  }
}

std::string LossLog::header() { return "iteration,L_recon1,L_recon2,L_c1,L_c2,L_s1,L_s2,L_gan_d,L_gan_g,total,lr_g,lr_d"; }

std::string LossLog::format_row(const StepReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.iteration;
  const auto& p = r.parts;
  for (double v : {p.recon[0], p.recon[1], p.content[0], p.content[1], p.style[0], p.style[1], p.gan_d, p.gan_g,
                   p.total, r.lr_g, r.lr_d}) {
    os << ',' << v;
  }
  return os.str();
}

void LossLog::append(const StepReport& r) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw InvalidInputError("cannot append to loss log " + path_.string());
  out << format_row(r) << '\n';
}

void run_training(TrainState& s, const dataset::DomainCorpus& first, const dataset::DomainCorpus& second,
                  const TrainingRun& run) {
  if (first.utterances.empty() || second.utterances.empty()) {
    throw EmptyResultError("training needs at least one utterance in each domain");
  }
  std::optional<LossLog> log;
  if (!run.loss_log_path.empty()) log.emplace(run.loss_log_path);
  const std::int64_t end =
      run.stop_at >= 0 ? std::min(run.stop_at, s.config.schedule.total_iters) : s.config.schedule.total_iters;
  while (s.iteration < end) {
    const StepReport r = train_step(s, first, second);
    if (log) log->append(r);
    if (run.on_step) run.on_step(r);
    if (!run.checkpoint_path.empty() && run.checkpoint_every > 0 && s.iteration % run.checkpoint_every == 0) {
      save_checkpoint(s, run.checkpoint_path);
    }
  }
  if (!run.checkpoint_path.empty()) save_checkpoint(s, run.checkpoint_path);
}

}  // namespace emovc::training
