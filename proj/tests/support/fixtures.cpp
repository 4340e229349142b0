#include "fixtures.hpp"

#include <cmath>
#include <numbers>

#include "emovc/pipeline.hpp"
#include "emovc/random.hpp"

namespace fixtures {

using emovc::features::Waveform;

namespace {

struct Resonator {
  double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;
  void set(double freq, double bw, double fs) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

constexpr double kVowels[][3] = {{730, 1090, 2440}, {270, 2290, 3010}, {300, 870, 2240}, {530, 1840, 2480}};

}  // namespace

Waveform synth_speech(const VoiceParams& p) {
  const int fs = 16000;
  const auto n = static_cast<std::size_t>(p.seconds * fs);
  emovc::Rng rng(p.seed);
  std::vector<double> raw(n, 0.0);
  const std::size_t edge = fs / 10;  // 100 ms of near-silence at both ends
  const std::size_t syllable = fs / 4, burst = fs / 20;
  Resonator res[3];
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = 1e-4 * (rng.uniform() - 0.5);
    if (i >= edge && i + edge < n) {
      const std::size_t k = i - edge;
      const std::size_t cycle = syllable + burst;
      const std::size_t pos = k % cycle;
      const std::size_t index = k / cycle;
      if (pos < syllable) {
        const auto& v = kVowels[(index + p.seed) % 4];
        const double t = static_cast<double>(i) / n;
        for (int f = 0; f < 3; ++f) res[f].set(v[f], 60.0 + 40.0 * f, fs);
        const double f0 = p.f0 * (1.0 + p.f0_swing * std::sin(2.0 * std::numbers::pi * (0.7 * t + 0.1 * index)));
        phase += f0 / fs;
        double e = 0.02 * (rng.uniform() - 0.5);
        if (phase >= 1.0) {
          phase -= 1.0;
          e += 1.0;
        }
        // Soft syllable envelope to avoid clicks.
        const double env = std::sin(std::numbers::pi * (pos + 0.5) / syllable);
        double y = 0.0;
        for (auto& r : res) y += r.step(e);
        x += env * y * 8.0;
      } else {
        x += 0.05 * (rng.uniform() - 0.5);
      }
    }
    raw[i] = x;
  }
  std::vector<double> out(n);
  double prev_in = 0.0, prev_out = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double y;
    if (p.tilt >= 0.0) {
      y = raw[i] - p.tilt * prev_in;
    } else {
      y = (1.0 + p.tilt) * raw[i] - p.tilt * prev_out;
    }
    prev_in = raw[i];
    prev_out = y;
    out[i] = y;
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  for (double& v : out) v *= p.level / peak;
  return Waveform{out, fs};
}

Waveform synth_vowel(double f0, double seconds, int sample_rate) {
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  Resonator res[3];
  for (int f = 0; f < 3; ++f) res[f].set(kVowels[0][f], 60.0 + 40.0 * f, sample_rate);
  std::vector<double> out(n);
  double phase = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phase += f0 / sample_rate;
    double e = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      e = 1.0;
    }
    double y = 0.0;
    for (auto& r : res) y += r.step(e);
    out[i] = y;
    peak = std::max(peak, std::abs(y));
  }
  for (double& v : out) v *= 0.3 / peak;
  return Waveform{out, sample_rate};
}

ToyCorpus make_toy_corpus(int per_domain, double seconds) {
  ToyCorpus c;
  std::vector<emovc::features::McepSeq> all;
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < per_domain; ++i) {
      VoiceParams p;
      p.seconds = seconds;
      p.seed = static_cast<std::uint64_t>(100 * d + i + 1);
      p.f0 = d == 0 ? 130.0 + 5.0 * i : 190.0 + 5.0 * i;
      p.tilt = d == 0 ? -0.6 : 0.8;
      emovc::dataset::ManifestEntry e;
      e.audio_path = "toy_" + std::to_string(d) + "_" + std::to_string(i) + ".wav";
      e.speaker = "spk";
      e.session = "s1";
      e.emotion = d == 0 ? "neu" : "ang";
      auto r = emovc::pipeline::extract_features(e, synth_speech(p));
      all.push_back(r.mcep_seq());
      (d == 0 ? c.first : c.second).push_back(std::move(r));
    }
  }
  c.stats = emovc::features::compute_mcep_stats(all);
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("emovc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
