#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emovc/audio_io.hpp"
#include "emovc/dataset.hpp"
#include "emovc/feature_cache.hpp"

namespace fixtures {

struct VoiceParams {
  double f0 = 150.0;        // base pitch (Hz)
  double f0_swing = 0.15;   // relative pitch excursion across the utterance
  double tilt = 0.0;        // >0 brightens (pre-emphasis), <0 darkens (one-pole lowpass)
  double seconds = 1.5;
  double level = 0.3;
  std::uint64_t seed = 1;
};

// Speech-like test signal: leading and trailing near-silence, voiced
// syllables (pulse train through three vowel formant resonators) separated
// by short unvoiced noise bursts.
emovc::features::Waveform synth_speech(const VoiceParams& p);

// Sustained vowel at a constant pitch.
emovc::features::Waveform synth_vowel(double f0, double seconds, int sample_rate = 16000);

// Records of four utterances per domain, the second domain with a distinct
// spectral tilt and pitch.
struct ToyCorpus {
  std::vector<emovc::features::FeatureRecord> first;
  std::vector<emovc::features::FeatureRecord> second;
  emovc::features::McepStats stats;
};
ToyCorpus make_toy_corpus(int per_domain = 4, double seconds = 1.2);

std::filesystem::path temp_dir(const std::string& name);

}  // namespace fixtures
