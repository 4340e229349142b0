#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace emovc::prosody {

inline constexpr double kSigmaFloor = 1e-5;

// Log-domain F0 statistics of one (speaker, emotion) domain.
struct LogF0Stats {
  double mu = 0.0;     // mean of ln f0 over voiced frames
  double sigma = 1.0;  // population std of ln f0, floored
  std::size_t n_frames = 0;
};

// Pools every voiced (f0 > 0) frame across tracks. Throws EmptyResultError
// when no frame is voiced.
LogF0Stats estimate_logf0_stats(std::span<const std::vector<double>> tracks,
                                double sigma_floor = kSigmaFloor);

// Affine map in the log domain: ln f2 = (ln f1 - mu_src) * sigma_tgt / sigma_src + mu_tgt.
// Zeros (unvoiced) pass through untouched.
std::vector<double> convert_f0(std::span<const double> f0, const LogF0Stats& src, const LogF0Stats& tgt);

std::string logf0_stats_to_json(const LogF0Stats& stats, const std::string& speaker, const std::string& emotion);
LogF0Stats logf0_stats_from_json(const std::string& text);

}  // namespace emovc::prosody
