#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emovc/audio_io.hpp"

namespace emovc::features {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kFramePeriodMs = 5.0;
inline constexpr int kFftSize = 1024;
inline constexpr int kMcepDim = 24;
inline constexpr double kMcepAlpha = 0.42;
inline constexpr double kDefaultVadThresholdDb = 30.0;
inline constexpr double kStdFloor = 1e-5;

// Per-frame vocoder parameters at a fixed hop. f0 == 0 marks unvoiced frames.
struct VocoderFrames {
  std::vector<double> f0;
  Matrix sp;  // T x (fft_size/2 + 1), power spectral envelope
  Matrix ap;  // T x (fft_size/2 + 1), aperiodicity in [0, 1]
  double frame_period_ms = kFramePeriodMs;
  int fft_size = kFftSize;
  int sample_rate = kSampleRate;

  std::size_t num_frames() const { return f0.size(); }
  int num_bins() const { return fft_size / 2 + 1; }

  // Throws InvalidInputError when the three streams disagree in length, the
  // bin count does not match fft_size, or any value is out of range.
  void validate() const;
};

// Mel-cepstral coefficients stored coefficient-major: coeffs(d, t).
struct McepSeq {
  Matrix coeffs;
  double alpha = kMcepAlpha;
  int fft_size = kFftSize;

  std::size_t num_frames() const { return static_cast<std::size_t>(coeffs.cols()); }
  int order() const { return static_cast<int>(coeffs.rows()); }
};

struct McepStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct AnalysisOptions {
  double frame_period_ms = kFramePeriodMs;
  int fft_size = kFftSize;
  double f0_floor = 71.0;
  double f0_ceil = 800.0;
};

VocoderFrames analyze(const Waveform& wave, const AnalysisOptions& options = {});
Waveform synthesize(const VocoderFrames& frames);

// Warped cepstrum of the log amplitude envelope; row 0 is the energy term.
McepSeq sp_to_mcep(const Matrix& sp, int num_coeffs = kMcepDim, double alpha = kMcepAlpha,
                   int fft_size = kFftSize);
// Returns a T x (fft_size/2 + 1) power envelope.
Matrix mcep_to_sp(const McepSeq& mcep, int expected_order = kMcepDim);

// Root-mean-square log-spectral distortion in dB, averaged over frames.
double log_spectral_distortion(const Matrix& reference, const Matrix& estimate);

// Per-frame energy in dB: 10 log10 of the row sum of sp.
std::vector<double> frame_energy_db(const Matrix& sp);

struct VadResult {
  McepSeq mcep;
  VocoderFrames frames;
  std::vector<std::size_t> kept;  // input indices of surviving frames, increasing
};

// Drops frames whose energy is more than threshold_db below the utterance
// maximum. Passing an infinite threshold keeps everything.
VadResult energy_vad(const McepSeq& mcep, const VocoderFrames& frames,
                     double threshold_db = kDefaultVadThresholdDb);

McepStats compute_mcep_stats(std::span<const McepSeq> utterances, double std_floor = kStdFloor);
McepSeq normalize(const McepSeq& mcep, const McepStats& stats);
McepSeq denormalize(const McepSeq& mcep, const McepStats& stats);

std::string mcep_stats_to_json(const McepStats& stats, const std::string& speaker);
McepStats mcep_stats_from_json(const std::string& text);

}  // namespace emovc::features
