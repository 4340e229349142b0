#include <cmath>
#include <cstring>

#include "doctest.h"
#include "emovc/error.hpp"
#include "emovc/pipeline.hpp"
#include "fixtures.hpp"

using namespace emovc;
using namespace emovc::pipeline;

namespace {

std::vector<double> voiced_logs(const std::vector<double>& f0) {
  std::vector<double> out;
  for (double f : f0) {
    if (f > 0) out.push_back(std::log(f));
  }
  return out;
}

std::pair<double, double> moments(const std::vector<double>& x) {
  double m = 0.0, v = 0.0;
  for (double e : x) m += e / x.size();
  for (double e : x) v += (e - m) * (e - m) / x.size();
  return {m, std::sqrt(v)};
}

// Fills both style averages from encoded real crops, like a trained state.
void seed_styles(training::TrainState& s, const std::vector<features::FeatureRecord>& records) {
  nn::NoGradGuard g;
  for (int d = 0; d < 2; ++d) {
    for (const auto& r : records) {
      const auto norm = features::normalize(r.mcep_seq(), *s.info.mcep_stats);
      const int t = static_cast<int>(norm.coeffs.cols());
      const nn::Tensor x({1, 24, t}, std::vector<double>(norm.coeffs.data(), norm.coeffs.data() + norm.coeffs.size()));
      const auto code = s.model.style[d](x);
      training::update_domain_style(s.styles, d, code.values(), 16);
    }
  }
}

training::TrainState random_state(const fixtures::ToyCorpus& toy) {
  auto cfg = training::desk_scale_config(1);
  auto s = training::make_initial_state(cfg);
  s.info.speaker = "spk";
  s.info.emotion = {"neu", "ang"};
  s.info.mcep_stats = toy.stats;
  std::vector<std::vector<double>> f1, f2;
  for (const auto& r : toy.first) f1.push_back(r.f0);
  for (const auto& r : toy.second) f2.push_back(r.f0);
  s.info.logf0 = {prosody::estimate_logf0_stats(f1), prosody::estimate_logf0_stats(f2)};
  return s;
}

}  // namespace

TEST_CASE("direction parsing") {
  CHECK(parse_direction("1to2").source == 0);
  CHECK(parse_direction("1to2").target == 1);
  CHECK(parse_direction("2to1").source == 1);
  CHECK(parse_direction("2to2").target == 1);
  CHECK(direction_string(parse_direction("2to1")) == "2to1");
  CHECK_THROWS_AS(parse_direction("1-2"), InvalidInputError);
  CHECK_THROWS_AS(parse_direction("3to1"), InvalidInputError);
}

TEST_CASE("mel-cepstral distortion") {
  Matrix a = Matrix::Zero(24, 10);
  CHECK(mel_cepstral_distortion(a, a) == 0.0);
  Matrix b = a;
  b.row(1).setConstant(1.0);
  const double expected = 10.0 / std::log(10.0) * std::sqrt(2.0);
  CHECK(mel_cepstral_distortion(a, b) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(mel_cepstral_distortion(a, b) == doctest::Approx(6.1421).epsilon(1e-4));
  // the energy row is excluded and only shared frames count
  Matrix c = Matrix::Zero(24, 4);
  c.row(0).setConstant(5.0);
  CHECK(mel_cepstral_distortion(a, c) == 0.0);
  CHECK_THROWS_AS(mel_cepstral_distortion(a, Matrix::Zero(23, 10)), ShapeError);
}

TEST_CASE("conversion with a random checkpoint") {
  const auto toy = fixtures::make_toy_corpus(2, 1.0);
  auto state = random_state(toy);

  ConversionConfig cfg;
  cfg.direction = parse_direction("1to2");
  CHECK_THROWS_AS(Converter(state, cfg), InvalidInputError);  // no style averages yet

  seed_styles(state, toy.first);
  const Converter conv(state, cfg);
  const auto wave = fixtures::synth_speech({.f0 = 140.0, .tilt = -0.6, .seconds = 1.3, .seed = 77});
  const auto frames = features::analyze(wave);
  const auto out_frames = conv.convert_frames(frames);
  CHECK(out_frames.num_frames() == frames.num_frames());
  for (std::size_t t = 0; t < frames.num_frames(); ++t) CHECK((out_frames.f0[t] == 0.0) == (frames.f0[t] == 0.0));
  CHECK(out_frames.ap == frames.ap);
  CHECK(out_frames.sp.allFinite());
  CHECK((out_frames.sp.array() > 0).all());
  CHECK(out_frames.sp != frames.sp);

  const auto out = conv.convert(wave);
  CHECK(std::abs(static_cast<long>(out.samples.size()) - static_cast<long>(wave.samples.size())) <= 80);
  for (double v : out.samples) REQUIRE(std::isfinite(v));

  // an odd frame count exercises the reflect padding
  const features::McepSeq m = features::sp_to_mcep(frames.sp.topRows(37));
  CHECK(conv.convert_mcep(m.coeffs, cfg.direction).cols() == 37);
}

TEST_CASE("f0-only conversion leaves the envelope untouched") {
  const auto toy = fixtures::make_toy_corpus(2, 1.0);
  auto state = random_state(toy);
  ConversionConfig cfg;
  cfg.direction = parse_direction("1to2");
  cfg.f0_only = true;
  const Converter conv(state, cfg);  // style averages not needed
  const auto frames = features::analyze(fixtures::synth_speech({.seed = 5}));
  const auto out = conv.convert_frames(frames);
  REQUIRE(out.sp.size() == frames.sp.size());
  CHECK(std::memcmp(out.sp.data(), frames.sp.data(), frames.sp.size() * sizeof(double)) == 0);
  CHECK(out.ap == frames.ap);

  // input whose voiced moments equal the source stats lands on the target stats
  const auto [mu, sigma] = moments(voiced_logs(frames.f0));
  training::TrainState moved = state;
  moved.info.logf0[0] = prosody::LogF0Stats{mu, sigma, 1};
  const auto target = *moved.info.logf0[1];
  const auto [m2, s2] = moments(voiced_logs(Converter(moved, cfg).convert_frames(frames).f0));
  CHECK(std::abs(m2 - target.mu) < 1e-6);
  CHECK(std::abs(s2 - target.sigma) < 1e-6);
}

TEST_CASE("conversion configuration errors") {
  const auto toy = fixtures::make_toy_corpus(1, 0.8);
  auto state = random_state(toy);
  seed_styles(state, toy.first);
  ConversionConfig cfg;
  cfg.source_emotion = "sad";
  CHECK_THROWS_AS(Converter(state, cfg), ConfigError);
  cfg.source_emotion = "neu";
  cfg.target_emotion = "ang";
  CHECK_NOTHROW(Converter(state, cfg));
  cfg.speaker = "other";
  CHECK_THROWS_AS(Converter(state, cfg), ConfigError);

  auto no_stats = state;
  no_stats.info.mcep_stats.reset();
  CHECK_THROWS_AS(Converter(no_stats, ConversionConfig{}), InvalidInputError);
  auto no_f0 = state;
  no_f0.info.logf0[1].reset();
  CHECK_THROWS_AS(Converter(no_f0, ConversionConfig{}), InvalidInputError);

  ConversionConfig missing;
  missing.checkpoint = fixtures::temp_dir("conv") / "none.ckpt";
  CHECK_THROWS_AS(convert_utterance(fixtures::synth_vowel(120, 0.2), missing), InvalidInputError);
}

TEST_CASE("checkpoint-driven conversion through files") {
  const auto dir = fixtures::temp_dir("conv_files");
  const auto toy = fixtures::make_toy_corpus(1, 0.8);
  auto state = random_state(toy);
  seed_styles(state, toy.first);
  training::save_checkpoint(state, dir / "c.ckpt");
  ConversionConfig cfg;
  cfg.checkpoint = dir / "c.ckpt";
  cfg.direction = parse_direction("2to1");
  const auto wave = fixtures::synth_speech({.f0 = 200.0, .tilt = 0.8, .seconds = 0.9});
  const auto a = convert_utterance(wave, cfg);
  const auto b = Converter(state, cfg).convert(wave);
  CHECK(a.samples == b.samples);

  // 22.05 kHz input is resampled before analysis
  const auto resampled = features::resample(wave, 22050);
  const auto c = convert_utterance(resampled, cfg);
  CHECK(c.sample_rate == 16000);
  CHECK(std::abs(static_cast<long>(c.samples.size()) - static_cast<long>(wave.samples.size())) <= 80);
}

TEST_CASE("evaluation report") {
  const auto dir = fixtures::temp_dir("eval");
  const auto toy = fixtures::make_toy_corpus(2, 0.8);
  auto state = random_state(toy);
  seed_styles(state, toy.first);

  std::vector<dataset::ManifestEntry> test;
  for (int i = 0; i < 3; ++i) {
    dataset::ManifestEntry e;
    e.speaker = "spk";
    e.session = "s";
    e.emotion = i == 2 ? "ang" : "neu";
    e.audio_path = "t" + std::to_string(i) + ".wav";
    features::write_wav(dir / e.audio_path, fixtures::synth_speech({.f0 = 120.0 + 40 * i, .seconds = 0.7, .seed = 30u + i}));
    test.push_back(e);
  }
  dataset::ManifestEntry other = test[0];
  other.emotion = "sad";
  other.audio_path = "skip.wav";
  test.push_back(other);

  const auto r1 = evaluate(state, test, dir);
  const auto r2 = evaluate(state, test, dir);
  CHECK(r1.to_json() == r2.to_json());
  REQUIRE(r1.rows.size() == 3);
  CHECK(r1.rows[0].direction == "1to2");
  CHECK(r1.rows[2].direction == "2to1");
  double sum = 0.0;
  for (const auto& r : r1.rows) {
    CHECK(r.mcd_db >= 0.0);
    CHECK(std::abs(r.duration_delta_frames) <= 1);
    sum += r.mcd_db;
  }
  CHECK(r1.mean_mcd_db == doctest::Approx(sum / 3).epsilon(1e-14));
  CHECK(r1.to_json().find("\"mean_mcd_db\"") != std::string::npos);

  const std::vector<dataset::ManifestEntry> none{other};
  CHECK_THROWS_AS(evaluate(state, none, dir), EmptyResultError);
}

TEST_CASE("own-domain reconstruction improves after overfitting a tiny set") {
  const auto toy = fixtures::make_toy_corpus(1, 1.0);
  const auto d1 = dataset::build_domain_corpus("spk", "neu", toy.first, toy.stats);
  const auto d2 = dataset::build_domain_corpus("spk", "ang", toy.second, toy.stats);
  auto cfg = training::desk_scale_config(2);
  cfg.schedule.total_iters = 600;
  cfg.schedule.decay_start = 600;
  cfg.schedule.ratio_switch_iter = 300;
  auto state = training::make_initial_state(cfg);
  state.info.speaker = "spk";
  state.info.emotion = {"neu", "ang"};
  state.info.mcep_stats = toy.stats;
  state.info.logf0 = {d1.logf0_stats, d2.logf0_stats};

  auto own_mcd = [&](const training::TrainState& s) {
    ConversionConfig c;
    c.direction = parse_direction("1to1");
    const Converter conv(s, c);
    const auto& rec = toy.first[0];
    const auto norm = features::normalize(rec.mcep_seq(), toy.stats);
    const features::McepSeq out{conv.convert_mcep(norm.coeffs, c.direction), rec.alpha, rec.fft_size};
    return mel_cepstral_distortion(rec.mcep, features::denormalize(out, toy.stats).coeffs);
  };

  auto untrained = state;
  untrained.model = model::EmotionVcModel(cfg.model, untrained.rng);
  seed_styles(untrained, toy.first);
  const double before = own_mcd(untrained);

  training::run_training(state, d1, d2, {});
  const double after = own_mcd(state);
  MESSAGE("own-domain MCD untrained " << before << " dB, trained " << after << " dB");
  CHECK(after <= 0.5 * before);
}
