#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emovc/feature_cache.hpp"
#include "emovc/prosody.hpp"
#include "emovc/random.hpp"
#include "emovc/vocoder_features.hpp"

namespace emovc::dataset {

using features::Matrix;

inline constexpr int kCropLength = 128;
inline constexpr double kTrainRatio = 0.8;

// Closed label set: ang, hap, neu, sad.
bool is_known_emotion(const std::string& label);
const std::vector<std::string>& emotion_labels();

enum class Split { kTrain, kTest };

struct ManifestEntry {
  std::string audio_path;
  std::string speaker;
  std::string session;
  std::string emotion;
  std::optional<Split> split;
  std::size_t line = 0;  // 1-based line in the manifest, for diagnostics
};

// CSV with a header row naming at least audio_path, speaker, session and
// emotion; an optional split column holds train/test or is left empty.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source = "<manifest>");
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct TrainTestSplit {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

// Stratified by (speaker, emotion). In each stratum, rows without a split
// are shuffled with the seeded stream and floor(ratio * n) go to train (at
// least one when ratio > 0). Both outputs keep manifest order.
TrainTestSplit split_train_test(std::span<const ManifestEntry> entries, double ratio, std::uint64_t seed);

// File name of an entry's cached features inside the features directory.
std::string feature_file_name(const ManifestEntry& entry);

// One emotion domain of one speaker, with normalized training utterances.
struct DomainCorpus {
  std::string speaker;
  std::string emotion;
  std::vector<Matrix> utterances;  // normalized, mcep_dim x T each
  features::McepStats mcep_stats;
  prosody::LogF0Stats logf0_stats;
};

// Normalizes each record with the speaker-level stats. Every record must
// carry the given speaker and emotion.
DomainCorpus build_domain_corpus(const std::string& speaker, const std::string& emotion,
                                 std::span<const features::FeatureRecord> records,
                                 const features::McepStats& mcep_stats);

// Contiguous window of `length` frames at a uniformly drawn start. Shorter
// utterances are reflect-padded at the end up to `length`.
Matrix sample_crop(const Matrix& utterance, int length, Rng& rng);

// Dense (batch, rows, frames) block, row-major.
struct CropBatch {
  int batch = 0;
  int rows = 0;
  int frames = 0;
  std::vector<double> data;
};

struct TrainingBatch {
  CropBatch x1;
  CropBatch x2;
};

// Draws batch_size (utterance, crop) pairs from domain 1, then from domain 2.
TrainingBatch make_batch(const DomainCorpus& first, const DomainCorpus& second, int batch_size, Rng& rng,
                         int crop_length = kCropLength);

}  // namespace emovc::dataset
