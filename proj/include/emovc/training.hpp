#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emovc/dataset.hpp"
#include "emovc/model.hpp"
#include "emovc/prosody.hpp"
#include "emovc/random.hpp"
#include "emovc/vocoder_features.hpp"

namespace emovc::training {

using model::EmotionVcModel;
using model::ModelConfig;
using nn::Tensor;

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_c = 1.0;
  double lambda_g = 1.0;
  double lambda_x = 10.0;
};

struct OptimizerSchedule {
  double lr_d = 1e-4;
  double lr_g = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t decay_start = 150000;
  std::int64_t ratio_switch_iter = 100000;
  int gen_steps_before_switch = 2;
  std::int64_t total_iters = 200000;

  // Multiplier for the 1-based iteration being run: 1 up to decay_start,
  // then linear down to 0 at total_iters.
  double lr_scale(std::int64_t iteration) const;
  double lr_g_at(std::int64_t iteration) const { return lr_g * lr_scale(iteration); }
  double lr_d_at(std::int64_t iteration) const { return lr_d * lr_scale(iteration); }
  int gen_steps_at(std::int64_t iteration) const {
    return iteration <= ratio_switch_iter ? gen_steps_before_switch : 1;
  }
  void validate() const;
};

enum class GanGeneratorLoss { kNonSaturating, kMinimax };

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  OptimizerSchedule schedule;
  int batch_size = 8;
  std::uint64_t seed = 0;
  GanGeneratorLoss generator_loss = GanGeneratorLoss::kNonSaturating;
  double prob_clamp = 1e-7;
  double style_ema_decay = 0.999;
  int nan_check_every = 100;

  void validate() const;
};

// Desk-scale profile: 2000 iterations, decay from 1500, ratio switch at 1000,
// batch 4 and channel widths divided by 16.
TrainConfig desk_scale_config(std::uint64_t seed = 0);

std::string config_hash(const TrainConfig& config);

// Per-iteration loss values. Index 0 is domain 1, index 1 is domain 2:
// content[0] = ||c1 - E2c(x2<-1)||, style[1] = ||s2 - E2s(x2<-1)||, and so on.
struct LossParts {
  std::array<double, 2> recon{};
  std::array<double, 2> content{};
  std::array<double, 2> style{};
  double gan_d = 0.0;  // discriminator objective summed over both critics
  double gan_g = 0.0;  // generator adversarial term summed over both directions
  double total = 0.0;
};

// lambda_s (Ls1 + Ls2) + lambda_c (Lc1 + Lc2) + lambda_x (Lrecon1 + Lrecon2) + lambda_g Lgan.
double total_loss(const LossParts& parts, const LossWeights& weights);

// Mean absolute error.
Tensor reconstruction_loss(const Tensor& x, const Tensor& x_rec);

struct SemiCycleLosses {
  Tensor content;
  Tensor style;
};

// Re-encodes a translated sample with the target domain's encoders and
// compares against the codes that produced it.
SemiCycleLosses semi_cycle_losses(const Tensor& source_content, const Tensor& target_style,
                                  const Tensor& translated, const model::ContentEncoder& target_content_encoder,
                                  const model::StyleEncoder& target_style_encoder);

// -[log D(real) + log(1 - D(fake))], each term averaged over the batch.
Tensor discriminator_loss(const Tensor& p_real, const Tensor& p_fake, double clamp);
// -log D(fake) (non-saturating) or log(1 - D(fake)) (literal minimax).
Tensor generator_gan_loss(const Tensor& p_fake, GanGeneratorLoss form, double clamp);

struct GanLossValues {
  double d = 0.0;
  double g = 0.0;
};
GanLossValues gan_losses(const Tensor& p_real, const Tensor& p_fake, double clamp = 1e-7,
                         GanGeneratorLoss form = GanGeneratorLoss::kNonSaturating);

// Exponential moving average of real style codes for each domain.
struct DomainStyleState {
  std::array<std::vector<double>, 2> mean;
  std::array<std::uint64_t, 2> count{0, 0};
  double decay = 0.999;
};

// codes is (N, style_dim) row-major; rows are folded in order.
void update_domain_style(DomainStyleState& state, int domain, std::span<const double> codes, int style_dim);

class Adam {
 public:
  Adam() = default;
  Adam(nn::ParameterList params, double beta1, double beta2, double eps);

  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return steps_; }
  const nn::ParameterList& parameters() const { return params_; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  nn::ParameterList params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t steps_ = 0;
};

// What conversion needs besides the weights: the domain pair and the
// statistics computed from its training split.
struct DomainInfo {
  std::string speaker;
  std::array<std::string, 2> emotion;
  std::optional<features::McepStats> mcep_stats;
  std::array<std::optional<prosody::LogF0Stats>, 2> logf0;
};

struct TrainState {
  TrainConfig config;
  EmotionVcModel model;
  Adam gen_opt;
  Adam disc_opt;
  DomainStyleState styles;
  Rng rng;
  std::int64_t iteration = 0;
  DomainInfo info;
};

TrainState make_initial_state(const TrainConfig& config);

struct StepReport {
  std::int64_t iteration = 0;
  LossParts parts;
  double lr_g = 0.0;
  double lr_d = 0.0;
  int gen_steps = 0;
};

Tensor batch_tensor(const dataset::CropBatch& batch);

// One critic update on the D objective with the generators frozen.
double discriminator_update(TrainState& state, const dataset::TrainingBatch& batch, double lr);
// One update of all encoders and decoders on the weighted objective with the
// critics frozen. Updates the domain style averages from the real codes.
LossParts generator_update(TrainState& state, const dataset::TrainingBatch& batch, double lr);

// Draws batches from state.rng: one critic update followed by
// gen_steps_at(iteration) generator updates. Throws NumericError with a
// diagnostic when a loss or (every nan_check_every iterations) a parameter
// turns non-finite.
StepReport train_step(TrainState& state, const dataset::DomainCorpus& first, const dataset::DomainCorpus& second);

// Append-only CSV: iteration,L_recon1,L_recon2,L_c1,L_c2,L_s1,L_s2,L_gan_d,L_gan_g,total,lr_g,lr_d
class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& path);
  void append(const StepReport& report);
  static std::string header();
  static std::string format_row(const StepReport& report);

 private:
  std::filesystem::path path_;
};

struct TrainingRun {
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_log_path;
  std::int64_t checkpoint_every = 0;  // 0: only at the end
  std::int64_t stop_at = -1;          // stop early at this iteration (-1: total_iters)
  std::function<void(const StepReport&)> on_step;
};

// Runs train_step until total_iters (or stop_at), logging every iteration.
void run_training(TrainState& state, const dataset::DomainCorpus& first, const dataset::DomainCorpus& second,
                  const TrainingRun& run);

// Checkpoint container: magic "EMOVCKPT", uint32 format version, uint64
// header length, JSON header, then float64 little-endian parameter and Adam
// moment blocks in header order. Written to a temp file and renamed.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

struct LoadedCheckpoint {
  TrainState state;
  std::vector<std::string> warnings;
};

// expected_config, when given, is compared by hash; a mismatch is reported
// as a warning, not an error.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<TrainConfig>& expected_config = std::nullopt);

}  // namespace emovc::training
