#include "emovc/vocoder_features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "emovc/error.hpp"
#include "world/cheaptrick.h"
#include "world/common.h"
#include "world/d4c.h"
#include "world/harvest.h"
#include "world/synthesis.h"

namespace emovc::features {
namespace {

class RealFft {
 public:
  explicit RealFft(int size) { InitializeForwardRealFFT(size, &plan_); }
  ~RealFft() { DestroyForwardRealFFT(&plan_); }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return plan_.waveform; }
  const fft_complex* run() {
    fft_execute(plan_.forward_fft);
    return plan_.spectrum;
  }

 private:
  ForwardRealFFT plan_{};
};

class InverseRealFft {
 public:
  explicit InverseRealFft(int size) { InitializeInverseRealFFT(size, &plan_); }
  ~InverseRealFft() { DestroyInverseRealFFT(&plan_); }
  InverseRealFft(const InverseRealFft&) = delete;
  InverseRealFft& operator=(const InverseRealFft&) = delete;

  fft_complex* input() { return plan_.spectrum; }
  const double* run() {
    fft_execute(plan_.inverse_fft);
    return plan_.waveform;
  }

 private:
  InverseRealFFT plan_{};
};

// Recursive all-pass frequency transform of a causal cepstrum (SPTK freqt).
std::vector<double> freqt(std::span<const double> in, int out_order, double alpha) {
  std::vector<double> out(static_cast<std::size_t>(out_order) + 1, 0.0);
  std::vector<double> prev(out.size(), 0.0);
  const double beta = 1.0 - alpha * alpha;
  for (std::size_t i = in.size(); i-- > 0;) {
    prev = out;
    out[0] = in[i] + alpha * prev[0];
    if (out_order >= 1) out[1] = beta * prev[0] + alpha * prev[1];
    for (int j = 2; j <= out_order; ++j) {
      out[j] = prev[j - 1] + alpha * (prev[j] - out[j - 1]);
    }
  }
  return out;
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInputError(std::string(what) + " contains non-finite values");
  }
}

}  // namespace

void VocoderFrames::validate() const {
  const auto t = static_cast<Eigen::Index>(f0.size());
  if (sp.rows() != t || ap.rows() != t) {
    throw InvalidInputError("f0/sp/ap frame counts differ: " + std::to_string(t) + "/" +
                            std::to_string(sp.rows()) + "/" + std::to_string(ap.rows()));
  }
  if (sp.cols() != num_bins() || ap.cols() != num_bins()) {
    throw InvalidInputError("sp/ap bin count does not match fft_size " + std::to_string(fft_size));
  }
  for (double f : f0) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw InvalidInputError("f0 must be finite and non-negative");
  }
  if (!(sp.array() > 0.0).all() || !sp.allFinite()) throw InvalidInputError("sp must be strictly positive");
  if (!(ap.array() >= 0.0).all() || !(ap.array() <= 1.0).all()) {
    throw InvalidInputError("ap must lie in [0, 1]");
  }
}

VocoderFrames analyze(const Waveform& wave, const AnalysisOptions& options) {
  if (wave.samples.empty()) throw InvalidInputError("analyze: empty waveform");
  if (wave.sample_rate != kSampleRate) {
    throw InvalidInputError("analyze: expected 16 kHz input, got " + std::to_string(wave.sample_rate));
  }
  require_finite(wave.samples, "waveform");

  const int fs = wave.sample_rate;
  const int length = static_cast<int>(wave.samples.size());

  HarvestOption harvest_option;
  InitializeHarvestOption(&harvest_option);
  harvest_option.frame_period = options.frame_period_ms;
  harvest_option.f0_floor = options.f0_floor;
  harvest_option.f0_ceil = options.f0_ceil;
  const int frames = GetSamplesForHarvest(fs, length, options.frame_period_ms);

  std::vector<double> time_axis(static_cast<std::size_t>(frames));
  VocoderFrames out;
  out.f0.resize(static_cast<std::size_t>(frames));
  out.frame_period_ms = options.frame_period_ms;
  out.fft_size = options.fft_size;
  out.sample_rate = fs;
  Harvest(wave.samples.data(), length, fs, &harvest_option, time_axis.data(), out.f0.data());

  const int bins = options.fft_size / 2 + 1;
  out.sp.resize(frames, bins);
  out.ap.resize(frames, bins);
  std::vector<double*> sp_rows(static_cast<std::size_t>(frames));
  std::vector<double*> ap_rows(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    sp_rows[static_cast<std::size_t>(t)] = out.sp.row(t).data();
    ap_rows[static_cast<std::size_t>(t)] = out.ap.row(t).data();
  }

  CheapTrickOption cheaptrick_option;
  InitializeCheapTrickOption(fs, &cheaptrick_option);
  cheaptrick_option.fft_size = options.fft_size;
  cheaptrick_option.f0_floor = GetF0FloorForCheapTrick(fs, options.fft_size);
  CheapTrick(wave.samples.data(), length, fs, time_axis.data(), out.f0.data(), frames,
             &cheaptrick_option, sp_rows.data());

  D4COption d4c_option;
  InitializeD4COption(&d4c_option);
  D4C(wave.samples.data(), length, fs, time_axis.data(), out.f0.data(), frames, options.fft_size,
      &d4c_option, ap_rows.data());

  out.ap = out.ap.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

Waveform synthesize(const VocoderFrames& frames) {
  frames.validate();
  Waveform out;
  out.sample_rate = frames.sample_rate;
  const int t = static_cast<int>(frames.num_frames());
  if (t == 0) return out;

  const auto length = static_cast<int>((t - 1) * frames.frame_period_ms / 1000.0 * frames.sample_rate) + 1;
  out.samples.assign(static_cast<std::size_t>(length), 0.0);

  // WORLD takes row pointers to mutable arrays but does not write through them.
  Matrix sp = frames.sp;
  Matrix ap = frames.ap;
  std::vector<double*> sp_rows(static_cast<std::size_t>(t));
  std::vector<double*> ap_rows(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    sp_rows[static_cast<std::size_t>(i)] = sp.row(i).data();
    ap_rows[static_cast<std::size_t>(i)] = ap.row(i).data();
  }
  Synthesis(frames.f0.data(), t, sp_rows.data(), ap_rows.data(), frames.fft_size, frames.frame_period_ms,
            frames.sample_rate, length, out.samples.data());
  return out;
}

McepSeq sp_to_mcep(const Matrix& sp, int num_coeffs, double alpha, int fft_size) {
  const int bins = fft_size / 2 + 1;
  if (sp.cols() != bins) {
    throw InvalidInputError("sp_to_mcep: expected " + std::to_string(bins) + " bins, got " +
                            std::to_string(sp.cols()));
  }
  if (num_coeffs < 1 || num_coeffs > bins) throw InvalidInputError("sp_to_mcep: bad order");
  if (!(sp.array() > 0.0).all() || !sp.allFinite()) {
    throw InvalidInputError("sp_to_mcep: envelope must be strictly positive and finite");
  }

  McepSeq out;
  out.alpha = alpha;
  out.fft_size = fft_size;
  out.coeffs.resize(num_coeffs, sp.rows());

  InverseRealFft ifft(fft_size);
  std::vector<double> causal(static_cast<std::size_t>(bins));
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    fft_complex* spec = ifft.input();
    for (int k = 0; k < bins; ++k) {
      spec[k][0] = std::log(sp(t, k));
      spec[k][1] = 0.0;
    }
    const double* real_cepstrum = ifft.run();
    // Causal cepstrum of the log amplitude (half the log power).
    const double scale = 1.0 / fft_size;
    causal[0] = 0.5 * real_cepstrum[0] * scale;
    for (int n = 1; n < bins - 1; ++n) causal[static_cast<std::size_t>(n)] = real_cepstrum[n] * scale;
    causal[static_cast<std::size_t>(bins - 1)] = 0.5 * real_cepstrum[bins - 1] * scale;

    const std::vector<double> warped = freqt(causal, num_coeffs - 1, alpha);
    for (int d = 0; d < num_coeffs; ++d) out.coeffs(d, t) = warped[static_cast<std::size_t>(d)];
  }
  return out;
}

Matrix mcep_to_sp(const McepSeq& mcep, int expected_order) {
  if (expected_order > 0 && mcep.order() != expected_order) {
    throw InvalidInputError("mcep_to_sp: expected " + std::to_string(expected_order) + " rows, got " +
                            std::to_string(mcep.order()));
  }
  if (!mcep.coeffs.allFinite()) throw InvalidInputError("mcep_to_sp: non-finite coefficients");
  const int fft_size = mcep.fft_size;
  const int half = fft_size / 2;
  Matrix sp(static_cast<Eigen::Index>(mcep.num_frames()), half + 1);

  RealFft fft(fft_size);
  std::vector<double> column(static_cast<std::size_t>(mcep.order()));
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    for (int d = 0; d < mcep.order(); ++d) column[static_cast<std::size_t>(d)] = mcep.coeffs(d, t);
    const std::vector<double> causal = freqt(column, half, -mcep.alpha);

    double* sym = fft.input();
    std::fill(sym, sym + fft_size, 0.0);
    sym[0] = causal[0];
    for (int n = 1; n < half; ++n) {
      sym[n] = 0.5 * causal[static_cast<std::size_t>(n)];
      sym[fft_size - n] = sym[n];
    }
    sym[half] = causal[static_cast<std::size_t>(half)];
    const fft_complex* spec = fft.run();
    for (int k = 0; k <= half; ++k) sp(t, k) = std::exp(2.0 * spec[k][0]);
  }
  return sp;
}

double log_spectral_distortion(const Matrix& reference, const Matrix& estimate) {
  if (reference.rows() != estimate.rows() || reference.cols() != estimate.cols()) {
    throw ShapeError("log_spectral_distortion: shape mismatch");
  }
  if (reference.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index t = 0; t < reference.rows(); ++t) {
    const auto diff = (10.0 * (reference.row(t).array() / estimate.row(t).array()).log10()).eval();
    total += std::sqrt(diff.square().mean());
  }
  return total / static_cast<double>(reference.rows());
}

std::vector<double> frame_energy_db(const Matrix& sp) {
  std::vector<double> energy(static_cast<std::size_t>(sp.rows()));
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    energy[static_cast<std::size_t>(t)] = 10.0 * std::log10(sp.row(t).sum());
  }
  return energy;
}

VadResult energy_vad(const McepSeq& mcep, const VocoderFrames& frames, double threshold_db) {
  if (mcep.num_frames() != frames.num_frames()) {
    throw InvalidInputError("energy_vad: mcep has " + std::to_string(mcep.num_frames()) +
                            " frames, vocoder frames " + std::to_string(frames.num_frames()));
  }
  if (frames.sp.rows() != static_cast<Eigen::Index>(frames.num_frames())) {
    throw InvalidInputError("energy_vad: sp frame count mismatch");
  }
  const std::vector<double> energy = frame_energy_db(frames.sp);
  VadResult result;
  if (!energy.empty()) {
    const double peak = *std::max_element(energy.begin(), energy.end());
    const double floor = peak - threshold_db;
    for (std::size_t t = 0; t < energy.size(); ++t) {
      if (!(energy[t] < floor)) result.kept.push_back(t);
    }
  }
  if (result.kept.empty()) {
    throw EmptyResultError("energy_vad: every one of " + std::to_string(energy.size()) +
                           " frames fell below the " + std::to_string(threshold_db) + " dB threshold");
  }

  const auto kept = static_cast<Eigen::Index>(result.kept.size());
  result.mcep.alpha = mcep.alpha;
  result.mcep.fft_size = mcep.fft_size;
  result.mcep.coeffs.resize(mcep.coeffs.rows(), kept);
  result.frames.frame_period_ms = frames.frame_period_ms;
  result.frames.fft_size = frames.fft_size;
  result.frames.sample_rate = frames.sample_rate;
  result.frames.f0.resize(result.kept.size());
  result.frames.sp.resize(kept, frames.sp.cols());
  result.frames.ap.resize(kept, frames.ap.cols());
  for (Eigen::Index i = 0; i < kept; ++i) {
    const auto src = static_cast<Eigen::Index>(result.kept[static_cast<std::size_t>(i)]);
    result.mcep.coeffs.col(i) = mcep.coeffs.col(src);
    result.frames.f0[static_cast<std::size_t>(i)] = frames.f0[static_cast<std::size_t>(src)];
    result.frames.sp.row(i) = frames.sp.row(src);
    result.frames.ap.row(i) = frames.ap.row(src);
  }
  return result;
}

McepStats compute_mcep_stats(std::span<const McepSeq> utterances, double std_floor) {
  if (utterances.empty()) throw EmptyResultError("compute_mcep_stats: no utterances");
  const int order = utterances.front().order();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(order);
  std::size_t count = 0;
  for (const McepSeq& u : utterances) {
    if (u.order() != order) throw ShapeError("compute_mcep_stats: inconsistent coefficient counts");
    sum += u.coeffs.rowwise().sum();
    count += u.num_frames();
  }
  if (count == 0) throw EmptyResultError("compute_mcep_stats: no frames");
  const Eigen::VectorXd mean = sum / static_cast<double>(count);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(order);
  for (const McepSeq& u : utterances) {
    sq += (u.coeffs.colwise() - mean).array().square().matrix().rowwise().sum();
  }
  McepStats stats;
  stats.mean.assign(mean.data(), mean.data() + order);
  stats.std.resize(static_cast<std::size_t>(order));
  for (int d = 0; d < order; ++d) {
    stats.std[static_cast<std::size_t>(d)] = std::max(std_floor, std::sqrt(sq(d) / static_cast<double>(count)));
  }
  return stats;
}

namespace {

void check_stats(const McepSeq& mcep, const McepStats& stats) {
  const auto order = static_cast<std::size_t>(mcep.order());
  if (stats.mean.size() != order || stats.std.size() != order) {
    throw ShapeError("normalization stats have " + std::to_string(stats.mean.size()) +
                     " coefficients, sequence has " + std::to_string(order));
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw InvalidInputError("normalization std must be strictly positive");
  }
}

}  // namespace

McepSeq normalize(const McepSeq& mcep, const McepStats& stats) {
  check_stats(mcep, stats);
  McepSeq out = mcep;
  for (int d = 0; d < mcep.order(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    out.coeffs.row(d) = (mcep.coeffs.row(d).array() - stats.mean[i]) / stats.std[i];
  }
  return out;
}

McepSeq denormalize(const McepSeq& mcep, const McepStats& stats) {
  check_stats(mcep, stats);
  McepSeq out = mcep;
  for (int d = 0; d < mcep.order(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    out.coeffs.row(d) = mcep.coeffs.row(d).array() * stats.std[i] + stats.mean[i];
  }
  return out;
}

std::string mcep_stats_to_json(const McepStats& stats, const std::string& speaker) {
  nlohmann::json j;
  j["speaker"] = speaker;
  j["mean"] = stats.mean;
  j["std"] = stats.std;
  return j.dump(2);
}

McepStats mcep_stats_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    McepStats stats{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
    if (stats.mean.size() != stats.std.size() || stats.mean.empty()) {
      throw FormatError("mcep stats: mean/std length mismatch");
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mcep stats: ") + e.what());
  }
}

}  // namespace emovc::features
