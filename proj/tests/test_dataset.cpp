#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "emovc/dataset.hpp"
#include "emovc/error.hpp"
#include "fixtures.hpp"

using namespace emovc;
using namespace emovc::dataset;

namespace {

const char* kHeader = "audio_path,speaker,session,emotion,split\n";

std::string synthetic_manifest(int per_stratum, const std::vector<std::string>& speakers) {
  std::string text = kHeader;
  for (const auto& spk : speakers) {
    for (const auto& emo : emotion_labels()) {
      for (int i = 0; i < per_stratum; ++i) {
        text += spk + "/" + emo + "/" + std::to_string(i) + ".wav," + spk + ",Session1," + emo + ",\n";
      }
    }
  }
  return text;
}

// Row 0 holds the frame index so a crop reveals where it came from.
Matrix indexed_utterance(int frames, int rows = 24) {
  Matrix m(rows, frames);
  for (int r = 0; r < rows; ++r) {
    for (int t = 0; t < frames; ++t) m(r, t) = t + 1000.0 * r;
  }
  return m;
}

}  // namespace

TEST_CASE("manifest rows in file order") {
  const auto e = parse_manifest(std::string(kHeader) +
                                "a.wav,F01,Session1,ang,train\n"
                                "\"b,c.wav\",F01,Session1,neu,\n"
                                "d.wav,M01,Session2,sad,test\n");
  REQUIRE(e.size() == 3);
  CHECK(e[0].audio_path == "a.wav");
  CHECK(e[1].audio_path == "b,c.wav");
  CHECK(e[2].speaker == "M01");
  CHECK(e[0].split == Split::kTrain);
  CHECK(!e[1].split.has_value());
  CHECK(e[2].split == Split::kTest);
  CHECK(e[2].line == 4);
}

TEST_CASE("manifest without a split column") {
  const auto e = parse_manifest("speaker,audio_path,emotion,session\nF01,x.wav,hap,S1\n");
  REQUIRE(e.size() == 1);
  CHECK(e[0].audio_path == "x.wav");
  CHECK(e[0].emotion == "hap");
}

TEST_CASE("unknown emotion names the line") {
  try {
    parse_manifest(std::string(kHeader) + "a.wav,F01,S1,ang,\nb.wav,F01,S1,fear,\n", "m.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.line() == 3);
    CHECK(std::string(err.what()).find("m.csv:3") != std::string::npos);
    CHECK(std::string(err.what()).find("fear") != std::string::npos);
  }
}

TEST_CASE("malformed and empty manifests") {
  CHECK_THROWS_AS(parse_manifest(""), ParseError);
  CHECK_THROWS_AS(parse_manifest(kHeader), ParseError);
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + "a.wav,F01,S1\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest("audio_path,speaker,emotion\na.wav,F,ang\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + ",F01,S1,ang,\n"), ParseError);
}

TEST_CASE("duplicate audio paths are listed") {
  try {
    parse_manifest(std::string(kHeader) + "a.wav,F,S,ang,\nb.wav,F,S,ang,\na.wav,F,S,hap,\n");
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(std::string(err.what()).find("a.wav") != std::string::npos);
    CHECK(std::string(err.what()).find("b.wav") == std::string::npos);
  }
}

TEST_CASE("load_manifest reads a file") {
  const auto dir = fixtures::temp_dir("manifest");
  std::ofstream(dir / "m.csv") << synthetic_manifest(2, {"F01"});
  CHECK(load_manifest(dir / "m.csv").size() == 8);
  CHECK_THROWS_AS(load_manifest(dir / "nope.csv"), InvalidInputError);
}

TEST_CASE("stratified split counts and disjointness") {
  const auto entries = parse_manifest(synthetic_manifest(132, {"F01", "M01"}));
  const auto s = split_train_test(entries, 0.8, 42);
  CHECK(s.train.size() == 2 * 4 * 105);
  CHECK(s.test.size() == 2 * 4 * 27);
  std::set<std::string> train_paths, test_paths;
  for (const auto& e : s.train) train_paths.insert(e.audio_path);
  for (const auto& e : s.test) test_paths.insert(e.audio_path);
  for (const auto& p : test_paths) CHECK(!train_paths.count(p));
  CHECK(train_paths.size() + test_paths.size() == entries.size());
  for (const auto& spk : {"F01", "M01"}) {
    for (const auto& emo : emotion_labels()) {
      const auto n = std::count_if(s.train.begin(), s.train.end(),
                                   [&](const ManifestEntry& e) { return e.speaker == spk && e.emotion == emo; });
      CHECK(n == 105);
    }
  }
  // manifest order survives within each part
  for (std::size_t i = 1; i < s.train.size(); ++i) CHECK(s.train[i - 1].line < s.train[i].line);
}

TEST_CASE("split is deterministic and honours preassigned rows") {
  auto entries = parse_manifest(synthetic_manifest(10, {"F01"}));
  const auto a = split_train_test(entries, 0.8, 7), b = split_train_test(entries, 0.8, 7);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].audio_path == b.train[i].audio_path);

  const auto all = split_train_test(entries, 1.0, 1);
  CHECK(all.test.empty());

  entries[0].split = Split::kTest;
  entries[1].split = Split::kTrain;
  const auto c = split_train_test(entries, 0.0, 3);
  CHECK(c.train.size() == 1);
  CHECK(c.train[0].audio_path == entries[1].audio_path);
  CHECK_THROWS_AS(split_train_test(entries, 1.5, 0), ConfigError);
}

TEST_CASE("crop of an exact-length utterance is the utterance") {
  Rng rng(1);
  const Matrix u = indexed_utterance(128);
  CHECK(sample_crop(u, 128, rng) == u);
  CHECK_THROWS_AS(sample_crop(Matrix(24, 0), 128, rng), EmptyResultError);
}

TEST_CASE("crop starts are uniform over the valid range") {
  Rng rng(2024);
  const Matrix u = indexed_utterance(300);
  const int range = 300 - 128 + 1;  // 173 start positions
  const int per_bin = 200;
  std::vector<int> counts(range, 0);
  for (int i = 0; i < range * per_bin; ++i) {
    const Matrix c = sample_crop(u, 128, rng);
    const int start = static_cast<int>(c(0, 0));
    REQUIRE(start >= 0);
    REQUIRE(start < range);
    for (int t = 0; t < 128; ++t) REQUIRE(c(0, t) == start + t);
    ++counts[start];
  }
  double chi2 = 0.0;
  for (int k : counts) chi2 += (k - per_bin) * (k - per_bin) / static_cast<double>(per_bin);
  // Wilson-Hilferty approximation of the 0.999 quantile with range-1 dof.
  const double dof = range - 1, z = 3.0902;
  const double crit = dof * std::pow(1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof)), 3);
  CHECK(chi2 < crit);
}

TEST_CASE("short utterances are reflect padded") {
  Rng rng(3);
  const Matrix u = indexed_utterance(100);
  const Matrix c = sample_crop(u, 128, rng);
  REQUIRE(c.cols() == 128);
  for (int t = 0; t < 100; ++t) CHECK(c(0, t) == t);
  // reflection about the last frame: 98, 97, ...
  for (int t = 100; t < 128; ++t) CHECK(c(0, t) == 198 - t);
  CHECK(c.row(5) == (c.row(0).array() + 5000.0).matrix());

  const Matrix one = indexed_utterance(1);
  const Matrix c1 = sample_crop(one, 8, rng);
  CHECK((c1.row(0).array() == 0.0).all());
}

TEST_CASE("batches have the expected shape and come from the corpora") {
  DomainCorpus a, b;
  a.speaker = b.speaker = "F01";
  a.emotion = "neu";
  b.emotion = "ang";
  a.utterances.push_back(indexed_utterance(150));
  a.utterances.push_back(indexed_utterance(200));
  b.utterances.push_back(indexed_utterance(140));
  Rng rng(9);
  const auto batch = make_batch(a, b, 8, rng);
  CHECK(batch.x1.batch == 8);
  CHECK(batch.x1.rows == 24);
  CHECK(batch.x1.frames == 128);
  CHECK(batch.x1.data.size() == 8u * 24 * 128);
  CHECK(batch.x2.data.size() == 8u * 24 * 128);
  // single-utterance corpus: every crop is a window of it (frame index < 140)
  for (int i = 0; i < 8; ++i) {
    const double start = batch.x2.data[static_cast<std::size_t>(i) * 24 * 128];
    CHECK(start + 127 < 140);
  }

  Rng r1(77), r2(77);
  for (int k = 0; k < 3; ++k) {
    const auto p = make_batch(a, b, 4, r1), q = make_batch(a, b, 4, r2);
    CHECK(p.x1.data == q.x1.data);
    CHECK(p.x2.data == q.x2.data);
  }
  DomainCorpus empty;
  CHECK_THROWS_AS(make_batch(a, empty, 2, rng), EmptyResultError);
}

TEST_CASE("domain corpus normalizes with the given stats and checks labels") {
  features::FeatureRecord r;
  r.speaker = "F01";
  r.emotion = "sad";
  r.f0 = {0.0, 100.0, 200.0};
  r.mcep = Matrix::Constant(24, 3, 2.0);
  r.ap = Matrix::Constant(3, 513, 0.5);
  features::McepStats stats{std::vector<double>(24, 1.0), std::vector<double>(24, 0.5)};
  const std::vector<features::FeatureRecord> records{r};
  const auto corpus = build_domain_corpus("F01", "sad", records, stats);
  REQUIRE(corpus.utterances.size() == 1);
  CHECK((corpus.utterances[0].array() == 2.0).all());
  CHECK(corpus.logf0_stats.n_frames == 2);
  CHECK_THROWS_AS(build_domain_corpus("F01", "hap", records, stats), InvalidInputError);
  CHECK_THROWS_AS(build_domain_corpus("F01", "sad", {}, stats), EmptyResultError);
}

TEST_CASE("feature file names are filesystem safe") {
  ManifestEntry e;
  e.speaker = "F01";
  e.audio_path = "/data/a b/c.wav";
  const auto name = feature_file_name(e);
  CHECK(name.find('/') == std::string::npos);
  CHECK(name.find(' ') == std::string::npos);
  CHECK(name.size() > 5);
  CHECK(name.substr(name.size() - 5) == ".emvc");
}
