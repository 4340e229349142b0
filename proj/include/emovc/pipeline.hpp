#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emovc/audio_io.hpp"
#include "emovc/dataset.hpp"
#include "emovc/training.hpp"
#include "emovc/vocoder_features.hpp"

namespace emovc::pipeline {

using features::Matrix;
using features::Waveform;

struct Direction {
  int source = 0;  // 0 = domain 1, 1 = domain 2
  int target = 1;
};

// "1to2", "2to1", "1to1" or "2to2".
Direction parse_direction(const std::string& text);
std::string direction_string(Direction d);

struct ConversionConfig {
  std::filesystem::path checkpoint;
  Direction direction;
  // Optional cross-checks against the checkpoint's trained pair.
  std::string speaker;
  std::string source_emotion;
  std::string target_emotion;
  // Optional overrides of the statistics stored in the checkpoint.
  std::optional<std::filesystem::path> mcep_stats_path;
  std::optional<std::filesystem::path> source_logf0_path;
  std::optional<std::filesystem::path> target_logf0_path;
  bool f0_only = false;
};

// Weights plus every statistic conversion needs, resolved once.
class Converter {
 public:
  Converter(training::TrainState state, const ConversionConfig& config);
  static Converter load(const ConversionConfig& config);

  // Feature-level conversion; output has the input's frame count, ap is
  // copied, and in f0_only mode sp is copied too.
  features::VocoderFrames convert_frames(const features::VocoderFrames& frames) const;
  // Normalized-domain network path: source content encoder, target decoder
  // with the target domain's average style. Reflect-pads to a multiple of 4
  // frames and trims afterwards.
  Matrix convert_mcep(const Matrix& mcep, Direction direction) const;

  Waveform convert(const Waveform& wave) const;

  const training::TrainState& state() const { return state_; }
  Direction direction() const { return config_.direction; }
  bool f0_only() const { return config_.f0_only; }

 private:
  training::TrainState state_;
  ConversionConfig config_;
  features::McepStats mcep_stats_;
  std::array<prosody::LogF0Stats, 2> logf0_;
};

Waveform convert_utterance(const Waveform& wave, const ConversionConfig& config);

// Mel-cepstral distortion in dB over the shared frames, excluding row 0.
double mel_cepstral_distortion(const Matrix& reference, const Matrix& estimate);

struct EvalRow {
  std::string audio_path;
  std::string emotion;
  std::string direction;
  double mcd_db = 0.0;              // own-domain reconstruction against the original
  double logf0_mean_distance = 0.0; // converted voiced ln f0 mean vs target mu
  double logf0_std_distance = 0.0;  // converted voiced ln f0 std vs target sigma
  long duration_delta_frames = 0;   // converted minus input, in 5 ms frames
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_mcd_db = 0.0;
  double mean_logf0_mean_distance = 0.0;
  double mean_logf0_std_distance = 0.0;
  double mean_duration_delta_frames = 0.0;

  std::string to_json() const;
};

// Runs every test entry of the checkpoint's speaker whose emotion is one of
// the two domains; domain-1 items convert 1to2 and domain-2 items 2to1.
// Throws EmptyResultError when nothing applies.
EvalReport evaluate(const training::TrainState& state, std::span<const dataset::ManifestEntry> test,
                    const std::filesystem::path& audio_root = {});

// Vocoder analysis, mel-cepstrum and energy VAD for one manifest entry.
features::FeatureRecord extract_features(const dataset::ManifestEntry& entry, const Waveform& wave,
                                         double vad_threshold_db = features::kDefaultVadThresholdDb);

// Manifest with every split filled in, kept next to the cached features.
inline constexpr const char* kIndexFileName = "index.csv";
void write_index(const std::filesystem::path& path, std::span<const dataset::ManifestEntry> train,
                 std::span<const dataset::ManifestEntry> test);

std::string mcep_stats_file_name(const std::string& speaker);
std::string logf0_stats_file_name(const std::string& speaker, const std::string& emotion);

}  // namespace emovc::pipeline
