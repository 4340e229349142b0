#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "emovc/audio_io.hpp"
#include "emovc/error.hpp"
#include "emovc/feature_cache.hpp"
#include "emovc/vocoder_features.hpp"
#include "fixtures.hpp"

using namespace emovc;
using namespace emovc::features;

namespace {

double median_voiced(const std::vector<double>& f0) {
  std::vector<double> v;
  for (double f : f0) {
    if (f > 0) v.push_back(f);
  }
  REQUIRE(!v.empty());
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

double voiced_fraction(const std::vector<double>& f0) {
  return static_cast<double>(std::count_if(f0.begin(), f0.end(), [](double f) { return f > 0; })) / f0.size();
}

// Power envelope with three resonance peaks on a falling slope.
Matrix formant_envelope(int frames) {
  const int bins = kFftSize / 2 + 1;
  Matrix sp(frames, bins);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      const double hz = 8000.0 * k / (bins - 1);
      double a = 1e-3 + std::exp(-hz / 3000.0);
      for (double f : {500.0 + 10 * t, 1500.0, 2500.0}) a += 2.0 * std::exp(-0.5 * std::pow((hz - f) / 80.0, 2));
      sp(t, k) = a * a;
    }
  }
  return sp;
}

}  // namespace

TEST_CASE("analysis frame count follows the 5 ms hop") {
  const auto frames = analyze(fixtures::synth_vowel(150.0, 1.0));
  CHECK(frames.num_frames() == 201);
  CHECK(frames.sp.rows() == 201);
  CHECK(frames.sp.cols() == kFftSize / 2 + 1);
  CHECK(frames.ap.rows() == 201);
}

TEST_CASE("150 Hz vowel is mostly voiced with the right pitch") {
  const auto frames = analyze(fixtures::synth_vowel(150.0, 1.0));
  CHECK(voiced_fraction(frames.f0) >= 0.9);
  CHECK(std::abs(median_voiced(frames.f0) - 150.0) / 150.0 < 0.05);
}

TEST_CASE("digital silence is all unvoiced") {
  const auto frames = analyze(Waveform{std::vector<double>(16000, 0.0), 16000});
  CHECK(std::all_of(frames.f0.begin(), frames.f0.end(), [](double f) { return f == 0.0; }));
}

TEST_CASE("analyze rejects empty and non-finite input") {
  CHECK_THROWS_AS(analyze(Waveform{{}, 16000}), InvalidInputError);
  std::vector<double> bad(1600, 0.0);
  bad[10] = std::nan("");
  CHECK_THROWS_AS(analyze(Waveform{bad, 16000}), InvalidInputError);
}

TEST_CASE("analysis and synthesis round trip keeps pitch and voicing") {
  const auto wave = fixtures::synth_vowel(150.0, 1.0);
  const auto frames = analyze(wave);
  const auto out = synthesize(frames);
  CHECK(std::abs(static_cast<double>(out.samples.size()) - 16000.0) <= 80.0);
  const auto again = analyze(out);
  CHECK(std::abs(median_voiced(again.f0) - median_voiced(frames.f0)) / median_voiced(frames.f0) < 0.05);
  const std::size_t n = std::min(again.num_frames(), frames.num_frames());
  std::size_t agree = 0;
  for (std::size_t t = 0; t < n; ++t) agree += (again.f0[t] > 0) == (frames.f0[t] > 0);
  CHECK(static_cast<double>(agree) / n >= 0.85);
}

TEST_CASE("unvoiced frames with a flat envelope synthesize finite noise") {
  VocoderFrames v;
  v.f0.assign(201, 0.0);
  v.sp = Matrix::Constant(201, kFftSize / 2 + 1, 1e-4);
  v.ap = Matrix::Constant(201, kFftSize / 2 + 1, 1.0);
  const auto out = synthesize(v);
  CHECK(std::abs(static_cast<double>(out.samples.size()) - 16000.0) <= 80.0);
  double energy = 0.0;
  for (double s : out.samples) {
    REQUIRE(std::isfinite(s));
    energy += s * s;
  }
  CHECK(energy > 0.0);
}

TEST_CASE("synthesize rejects mismatched streams") {
  VocoderFrames v;
  v.f0.assign(10, 0.0);
  v.sp = Matrix::Constant(9, kFftSize / 2 + 1, 1.0);
  v.ap = Matrix::Constant(10, kFftSize / 2 + 1, 1.0);
  CHECK_THROWS_AS(synthesize(v), InvalidInputError);
}

TEST_CASE("flat envelope has only an energy coefficient") {
  const double c = 3.7;
  const auto m = sp_to_mcep(Matrix::Constant(5, kFftSize / 2 + 1, c));
  REQUIRE(m.coeffs.rows() == 24);
  for (int t = 0; t < 5; ++t) {
    // half the log power is the log amplitude
    CHECK(m.coeffs(0, t) == doctest::Approx(0.5 * std::log(c)).epsilon(1e-9));
    for (int d = 1; d < 24; ++d) CHECK(std::abs(m.coeffs(d, t)) < 1e-9);
  }
}

TEST_CASE("mcep shapes and zero coefficients") {
  const auto m = sp_to_mcep(formant_envelope(128));
  CHECK(m.coeffs.rows() == 24);
  CHECK(m.coeffs.cols() == 128);
  const Matrix sp = mcep_to_sp(McepSeq{Matrix::Zero(24, 128)});
  CHECK(sp.rows() == 128);
  CHECK(sp.cols() == kFftSize / 2 + 1);
  CHECK((sp.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(mcep_to_sp(McepSeq{Matrix::Zero(23, 4)}), InvalidInputError);
  Matrix bad = formant_envelope(2);
  bad(0, 3) = 0.0;
  CHECK_THROWS_AS(sp_to_mcep(bad), InvalidInputError);
}

TEST_CASE("reconstruction distortion shrinks with cepstral order") {
  const Matrix sp = formant_envelope(16);
  auto lsd = [&](int order) { return log_spectral_distortion(sp, mcep_to_sp(sp_to_mcep(sp, order), order)); };
  CHECK(lsd(24) < lsd(8));

  // white-noise envelope: random positive powers
  Rng rng(7);
  Matrix noise(4, kFftSize / 2 + 1);
  for (int i = 0; i < noise.size(); ++i) noise.data()[i] = std::exp(rng.normal());
  auto lsd_noise = [&](int order) {
    return log_spectral_distortion(noise, mcep_to_sp(sp_to_mcep(noise, order), order));
  };
  const double d8 = lsd_noise(8), d16 = lsd_noise(16), d24 = lsd_noise(24);
  CHECK(std::isfinite(d8));
  CHECK(d16 <= d8);
  CHECK(d24 <= d16);
}

TEST_CASE("vad removes the silent half of silence followed by a tone") {
  std::vector<double> s(16000, 0.0);
  for (int i = 8000; i < 16000; ++i) s[i] = 0.3 * std::sin(2 * std::numbers::pi * 200.0 * i / 16000.0);
  const auto frames = analyze(Waveform{s, 16000});
  const auto mcep = sp_to_mcep(frames.sp);
  const auto vad = energy_vad(mcep, frames, 30.0);
  REQUIRE(!vad.kept.empty());
  // Tone starts at 0.5 s, frame 100.
  CHECK(std::abs(static_cast<long>(vad.kept.front()) - 100) <= 2);
  CHECK(vad.kept.back() == frames.num_frames() - 1);
  for (std::size_t i = 1; i < vad.kept.size(); ++i) CHECK(vad.kept[i] > vad.kept[i - 1]);
  CHECK(vad.mcep.coeffs.cols() == static_cast<long>(vad.kept.size()));
  CHECK(vad.frames.num_frames() == vad.kept.size());
  for (std::size_t i = 0; i < vad.kept.size(); ++i) {
    CHECK(vad.frames.f0[i] == frames.f0[vad.kept[i]]);
    CHECK(vad.mcep.coeffs(3, i) == mcep.coeffs(3, vad.kept[i]));
  }
}

TEST_CASE("vad degenerate thresholds") {
  VocoderFrames v;
  v.f0.assign(20, 0.0);
  v.sp = Matrix::Constant(20, kFftSize / 2 + 1, 0.5);
  v.ap = Matrix::Constant(20, kFftSize / 2 + 1, 1.0);
  const auto mcep = sp_to_mcep(v.sp);
  CHECK(energy_vad(mcep, v, 30.0).kept.size() == 20);

  const auto frames = analyze(fixtures::synth_speech({}));
  const auto m = sp_to_mcep(frames.sp);
  const auto all = energy_vad(m, frames, std::numeric_limits<double>::infinity());
  CHECK(all.kept.size() == frames.num_frames());
  CHECK(all.mcep.coeffs == m.coeffs);
  CHECK(all.frames.sp == frames.sp);
  CHECK_THROWS_AS(energy_vad(m, frames, -1.0), EmptyResultError);
}

TEST_CASE("normalization statistics and inverses") {
  Rng rng(3);
  McepSeq m;
  m.coeffs.resize(24, 50);
  for (int i = 0; i < m.coeffs.size(); ++i) m.coeffs.data()[i] = 2.0 * rng.normal() + 0.1 * (i % 24);
  const std::vector<McepSeq> one{m};
  const auto stats = compute_mcep_stats(one);
  const auto n = normalize(m, stats);
  for (int d = 0; d < 24; ++d) {
    const auto row = n.coeffs.row(d);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
  CHECK((denormalize(n, stats).coeffs - m.coeffs).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((normalize(denormalize(m, stats), stats).coeffs - m.coeffs).cwiseAbs().maxCoeff() < 1e-6);

  McepSeq flat;
  flat.coeffs.resize(24, 7);
  for (int d = 0; d < 24; ++d) flat.coeffs.row(d).setConstant(stats.mean[d]);
  CHECK(normalize(flat, stats).coeffs.cwiseAbs().maxCoeff() == 0.0);

  const auto back = mcep_stats_from_json(mcep_stats_to_json(stats, "spk"));
  CHECK(back.mean == stats.mean);
  CHECK(back.std == stats.std);
}

TEST_CASE("constant coefficients hit the std floor") {
  McepSeq m;
  m.coeffs = Matrix::Constant(24, 10, 1.5);
  const std::vector<McepSeq> one{m};
  const auto stats = compute_mcep_stats(one);
  for (double s : stats.std) CHECK(s == kStdFloor);
}

TEST_CASE("feature cache round trip is bit exact") {
  FeatureRecord r;
  r.speaker = "F01";
  r.emotion = "hap";
  r.session = "Session1";
  r.utterance_id = "a/b.wav";
  r.vad_applied = true;
  Rng rng(11);
  r.f0 = {0.0, 123.456789, -0.0, 1e-300};
  r.mcep.resize(24, 4);
  for (int i = 0; i < r.mcep.size(); ++i) r.mcep.data()[i] = rng.normal() * 1e3;
  r.ap.resize(4, kFftSize / 2 + 1);
  for (int i = 0; i < r.ap.size(); ++i) r.ap.data()[i] = rng.uniform();
  const std::string bytes = encode_feature_record(r);
  CHECK(bytes.substr(0, 8) == "EMOVC001");
  const auto back = decode_feature_record(bytes);
  CHECK(back.speaker == r.speaker);
  CHECK(back.emotion == r.emotion);
  CHECK(back.session == r.session);
  CHECK(back.utterance_id == r.utterance_id);
  CHECK(back.vad_applied);
  REQUIRE(back.f0.size() == r.f0.size());
  CHECK(std::memcmp(back.f0.data(), r.f0.data(), r.f0.size() * 8) == 0);
  CHECK(std::memcmp(back.mcep.data(), r.mcep.data(), r.mcep.size() * 8) == 0);
  CHECK(std::memcmp(back.ap.data(), r.ap.data(), r.ap.size() * 8) == 0);
  CHECK(encode_feature_record(back) == bytes);

  CHECK_THROWS_AS(decode_feature_record("EMOVC002" + bytes.substr(8)), FormatError);
  CHECK_THROWS_AS(decode_feature_record(bytes.substr(0, bytes.size() - 3)), FormatError);
}

TEST_CASE("wav io and resampling") {
  const auto dir = fixtures::temp_dir("wav");
  const auto wave = fixtures::synth_vowel(200.0, 0.25);
  write_wav(dir / "a.wav", wave);
  const auto back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i) CHECK(std::abs(back.samples[i] - wave.samples[i]) <= 1.0 / 32767);

  std::vector<double> tone(44100);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 44100.0);
  write_wav(dir / "b.wav", Waveform{tone, 44100});
  const auto r = load_wav_16k(dir / "b.wav");
  CHECK(r.sample_rate == 16000);
  CHECK(std::abs(static_cast<long>(r.samples.size()) - 16000) <= 1);
  // compare against the analytic tone away from the edges
  double err = 0.0;
  for (int i = 1000; i < 15000; ++i) err = std::max(err, std::abs(r.samples[i] - 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0)));
  CHECK(err < 1e-3);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), InvalidInputError);
}
