#include "emovc/prosody.hpp"

#include <cmath>

#include "json.hpp"

#include "emovc/error.hpp"

namespace emovc::prosody {
namespace {

void validate(const LogF0Stats& s, const char* which) {
  if (!std::isfinite(s.mu) || !std::isfinite(s.sigma) || !(s.sigma > 0.0)) {
    throw InvalidInputError(std::string(which) + " log-F0 stats are not valid");
  }
}

}  // namespace

LogF0Stats estimate_logf0_stats(std::span<const std::vector<double>> tracks, double sigma_floor) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& track : tracks) {
    for (double f : track) {
      if (f > 0.0) {
        sum += std::log(f);
        ++count;
      }
    }
  }
  if (count == 0) throw EmptyResultError("estimate_logf0_stats: no voiced frames in domain");
  const double mu = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& track : tracks) {
    for (double f : track) {
      if (f > 0.0) sq += (std::log(f) - mu) * (std::log(f) - mu);
    }
  }
  return LogF0Stats{mu, std::max(sigma_floor, std::sqrt(sq / static_cast<double>(count))), count};
}

std::vector<double> convert_f0(std::span<const double> f0, const LogF0Stats& src, const LogF0Stats& tgt) {
  validate(src, "source");
  validate(tgt, "target");
  const double ratio = tgt.sigma / src.sigma;
  const bool identity = src.mu == tgt.mu && src.sigma == tgt.sigma;
  std::vector<double> out(f0.size());
  for (std::size_t t = 0; t < f0.size(); ++t) {
    const double f = f0[t];
    if (f < 0.0 || std::isnan(f)) throw InvalidInputError("convert_f0: negative or NaN f0 at frame " + std::to_string(t));
    out[t] = (f == 0.0 || identity) ? f : std::exp((std::log(f) - src.mu) * ratio + tgt.mu);
  }
  return out;
}

std::string logf0_stats_to_json(const LogF0Stats& stats, const std::string& speaker, const std::string& emotion) {
  nlohmann::json j;
  j["speaker"] = speaker;
  j["emotion"] = emotion;
  j["mu"] = stats.mu;
  j["sigma"] = stats.sigma;
  j["n_frames"] = stats.n_frames;
  return j.dump(2);
}

LogF0Stats logf0_stats_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LogF0Stats s{j.at("mu").get<double>(), j.at("sigma").get<double>(), j.at("n_frames").get<std::size_t>()};
    validate(s, "stored");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("log-F0 stats: ") + e.what());
  }
}

}  // namespace emovc::prosody
