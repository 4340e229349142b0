#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "emovc/vocoder_features.hpp"

namespace emovc::features {

// One utterance's cached training features. The envelope itself is not kept;
// the mel-cepstrum is the working representation.
struct FeatureRecord {
  std::string speaker;
  std::string emotion;
  std::string session;
  std::string utterance_id;
  double frame_period_ms = kFramePeriodMs;
  int sample_rate = kSampleRate;
  int fft_size = kFftSize;
  double alpha = kMcepAlpha;
  bool vad_applied = false;
  std::vector<double> f0;
  Matrix mcep;  // order x T
  Matrix ap;    // T x (fft_size/2 + 1)

  std::size_t num_frames() const { return f0.size(); }
  McepSeq mcep_seq() const { return McepSeq{mcep, alpha, fft_size}; }
};

inline constexpr char kFeatureMagic[8] = {'E', 'M', 'O', 'V', 'C', '0', '0', '1'};

// Layout: 8-byte magic "EMOVC001", uint64 little-endian header length, UTF-8
// JSON header, then float64 little-endian blocks f0, mcep (row-major), ap.
std::string encode_feature_record(const FeatureRecord& record);
FeatureRecord decode_feature_record(const std::string& bytes);

void write_feature_record(const std::filesystem::path& path, const FeatureRecord& record);
FeatureRecord read_feature_record(const std::filesystem::path& path);

}  // namespace emovc::features
