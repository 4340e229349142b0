#include "emovc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "emovc/error.hpp"

namespace emovc::dataset {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& emotion_labels() {
  static const std::vector<std::string> labels{"ang", "hap", "neu", "sad"};
  return labels;
}

bool is_known_emotion(const std::string& label) {
  const auto& labels = emotion_labels();
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column;
  bool have_header = false;
  std::vector<ManifestEntry> entries;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) column[fields[i]] = i;
      for (const char* required : {"audio_path", "speaker", "session", "emotion"}) {
        if (!column.count(required)) {
          throw ParseError(source, line_no, std::string("header is missing column '") + required + "'");
        }
      }
      have_header = true;
      continue;
    }
    if (fields.size() < column.size()) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(column.size()) + " fields, got " + std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.audio_path = fields[column["audio_path"]];
    e.speaker = fields[column["speaker"]];
    e.session = fields[column["session"]];
    e.emotion = fields[column["emotion"]];
    e.line = line_no;
    if (e.audio_path.empty()) throw ParseError(source, line_no, "empty audio_path");
    if (e.speaker.empty()) throw ParseError(source, line_no, "empty speaker");
    if (!is_known_emotion(e.emotion)) {
      throw ParseError(source, line_no, "unknown emotion label '" + e.emotion + "' (expected ang, hap, neu or sad)");
    }
    if (auto it = column.find("split"); it != column.end()) {
      const std::string& s = fields[it->second];
      if (s == "train") {
        e.split = Split::kTrain;
      } else if (s == "test") {
        e.split = Split::kTest;
      } else if (!s.empty()) {
        throw ParseError(source, line_no, "split must be train, test or empty, got '" + s + "'");
      }
    }
    entries.push_back(std::move(e));
  }
  if (!have_header) throw ParseError(source + ": manifest is empty (no header row)");
  if (entries.empty()) throw ParseError(source + ": manifest has a header but no data rows");

  std::map<std::string, std::size_t> seen;
  std::vector<std::string> duplicates;
  for (const auto& e : entries) {
    if (++seen[e.audio_path] == 2) duplicates.push_back(e.audio_path);
  }
  if (!duplicates.empty()) {
    std::string msg = source + ": duplicated audio_path:";
    for (const auto& d : duplicates) msg += " " + d;
    throw ParseError(msg);
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.string());
}

TrainTestSplit split_train_test(std::span<const ManifestEntry> entries, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("split ratio must lie in [0, 1]");
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> strata;
  std::vector<bool> to_train(entries.size(), false);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split) {
      to_train[i] = *entries[i].split == Split::kTrain;
    } else {
      strata[{entries[i].speaker, entries[i].emotion}].push_back(i);
    }
  }

  Rng rng(seed);
  for (auto& [key, members] : strata) {
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.uniform_index(i)]);
    }
    auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(members.size()) + 1e-9));
    if (ratio > 0.0) n_train = std::max<std::size_t>(n_train, 1);
    for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = true;
  }

  TrainTestSplit out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    (to_train[i] ? out.train : out.test).push_back(entries[i]);
  }
  return out;
}

std::string feature_file_name(const ManifestEntry& entry) {
  std::string name = entry.speaker + "__" + entry.audio_path;
  for (char& c : name) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    if (!keep) c = '_';
  }
  return name + ".emvc";
}

DomainCorpus build_domain_corpus(const std::string& speaker, const std::string& emotion,
                                 std::span<const features::FeatureRecord> records,
                                 const features::McepStats& mcep_stats) {
  if (records.empty()) throw EmptyResultError("no training utterances for " + speaker + "/" + emotion);
  DomainCorpus corpus;
  corpus.speaker = speaker;
  corpus.emotion = emotion;
  corpus.mcep_stats = mcep_stats;
  std::vector<std::vector<double>> f0_tracks;
  for (const auto& r : records) {
    if (r.speaker != speaker || r.emotion != emotion) {
      throw InvalidInputError("record " + r.utterance_id + " belongs to " + r.speaker + "/" + r.emotion +
                              ", not " + speaker + "/" + emotion);
    }
    if (r.num_frames() == 0) continue;
    corpus.utterances.push_back(features::normalize(r.mcep_seq(), mcep_stats).coeffs);
    f0_tracks.push_back(r.f0);
  }
  if (corpus.utterances.empty()) throw EmptyResultError("all utterances for " + speaker + "/" + emotion + " are empty");
  corpus.logf0_stats = prosody::estimate_logf0_stats(f0_tracks);
  return corpus;
}

Matrix sample_crop(const Matrix& utterance, int length, Rng& rng) {
  const auto frames = utterance.cols();
  if (frames == 0) throw EmptyResultError("sample_crop: empty utterance");
  if (length < 1) throw ConfigError("sample_crop: crop length must be positive");
  if (frames >= length) {
    const auto start = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(frames - length + 1)));
    return utterance.middleCols(start, length);
  }
  Matrix out(utterance.rows(), length);
  const Eigen::Index period = 2 * (frames - 1);
  for (Eigen::Index t = 0; t < length; ++t) {
    Eigen::Index src = 0;
    if (period > 0) {
      src = t % period;
      if (src >= frames) src = period - src;
    }
    out.col(t) = utterance.col(src);
  }
  return out;
}

namespace {

CropBatch draw(const DomainCorpus& corpus, int batch_size, Rng& rng, int crop_length) {
  if (corpus.utterances.empty()) {
    throw EmptyResultError("make_batch: corpus " + corpus.speaker + "/" + corpus.emotion + " is empty");
  }
  CropBatch b;
  b.batch = batch_size;
  b.rows = static_cast<int>(corpus.utterances.front().rows());
  b.frames = crop_length;
  b.data.resize(static_cast<std::size_t>(batch_size) * b.rows * crop_length);
  for (int i = 0; i < batch_size; ++i) {
    const auto& utt = corpus.utterances[rng.uniform_index(corpus.utterances.size())];
    const Matrix crop = sample_crop(utt, crop_length, rng);
    std::copy_n(crop.data(), crop.size(), b.data.data() + static_cast<std::size_t>(i) * b.rows * crop_length);
  }
  return b;
}

}  // namespace

TrainingBatch make_batch(const DomainCorpus& first, const DomainCorpus& second, int batch_size, Rng& rng,
                         int crop_length) {
  if (batch_size < 1) throw ConfigError("make_batch: batch_size must be positive");
  TrainingBatch batch;
  batch.x1 = draw(first, batch_size, rng, crop_length);
  batch.x2 = draw(second, batch_size, rng, crop_length);
  return batch;
}

}  // namespace emovc::dataset
