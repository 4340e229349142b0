#pragma once

#include <filesystem>
#include <vector>

namespace emovc::features {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kSampleRate;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads RIFF/WAVE with integer PCM (8/16/24/32 bit) or 32-bit float samples.
// Multi-channel input is averaged down to mono. The sample rate is returned
// as stored; use load_wav_16k to get the ingestion-ready form.
Waveform read_wav(const std::filesystem::path& path);

// read_wav followed by resampling to 16 kHz when needed.
Waveform load_wav_16k(const std::filesystem::path& path);

// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
Waveform resample(const Waveform& wave, int target_rate);

}  // namespace emovc::features
