#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "emovc/error.hpp"
#include "emovc/run_config.hpp"
#include "emovc/training.hpp"
#include "fixtures.hpp"

using namespace emovc;
using namespace emovc::training;
using nn::Tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_tensor(const nn::Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(shape, v);
}

std::vector<std::vector<double>> snapshot(const nn::ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(vals(p.tensor));
  return out;
}

// Small corpora from a fixed random walk; cheap to build.
dataset::DomainCorpus toy_corpus(const std::string& emotion, int utterances, std::uint64_t seed, int frames = 160) {
  dataset::DomainCorpus c;
  c.speaker = "spk";
  c.emotion = emotion;
  Rng rng(seed);
  for (int u = 0; u < utterances; ++u) {
    features::Matrix m(24, frames);
    for (int d = 0; d < 24; ++d) {
      double x = rng.normal();
      for (int t = 0; t < frames; ++t) {
        x = 0.9 * x + 0.3 * rng.normal();
        m(d, t) = x + (emotion == "ang" ? 0.5 : -0.5) * (d < 4);
      }
    }
    c.utterances.push_back(m);
  }
  return c;
}

TrainConfig tiny_config(std::uint64_t seed = 3) {
  TrainConfig c = desk_scale_config(seed);
  c.model.width_divisor = 64;
  c.batch_size = 2;
  c.schedule.total_iters = 50;
  c.schedule.decay_start = 40;
  c.schedule.ratio_switch_iter = 3;
  return c;
}

}  // namespace

TEST_CASE("reconstruction loss") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 3, 5}, rng);
  CHECK(reconstruction_loss(x, x).item() == 0.0);
  CHECK(reconstruction_loss(Tensor::zeros({2, 3}), Tensor::full({2, 3}, 1.0)).item() == 1.0);
  const Tensor y = random_tensor({2, 3, 5}, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) oracle += std::abs(x.at(i) - y.at(i));
  CHECK(reconstruction_loss(x, y).item() == doctest::Approx(oracle / x.numel()).epsilon(1e-14));
  CHECK_THROWS_AS(reconstruction_loss(x, Tensor::zeros({2, 3, 4})), ShapeError);
}

TEST_CASE("semi-cycle losses") {
  model::ModelConfig cfg;
  cfg.width_divisor = 32;
  Rng rng(2);
  const model::ContentEncoder content(cfg, rng);
  const model::StyleEncoder style(cfg, rng);
  nn::NoGradGuard g;
  const Tensor translated = random_tensor({2, 24, 32}, rng);
  const Tensor c = content(translated), s = style(translated);

  // encoders that exactly invert the decoder recover the codes
  const auto ideal = semi_cycle_losses(c, s, translated, content, style);
  CHECK(ideal.content.item() == 0.0);
  CHECK(ideal.style.item() == 0.0);

  const Tensor c_src = random_tensor(c.shape(), rng), s_tgt = random_tensor(s.shape(), rng);
  const auto got = semi_cycle_losses(c_src, s_tgt, translated, content, style);
  double lc = 0.0, ls = 0.0;
  for (std::size_t i = 0; i < c.numel(); ++i) lc += std::abs(c.at(i) - c_src.at(i));
  for (std::size_t i = 0; i < s.numel(); ++i) ls += std::abs(s.at(i) - s_tgt.at(i));
  CHECK(got.content.item() == doctest::Approx(lc / c.numel()).epsilon(1e-12));
  CHECK(got.style.item() == doctest::Approx(ls / s.numel()).epsilon(1e-12));
}

TEST_CASE("semi-cycle content gradient on a two-channel network") {
  model::ModelConfig cfg;
  cfg.mcep_dim = 2;
  cfg.style_dim = 2;
  cfg.width_divisor = 1024;  // every hidden width collapses to 2
  Rng rng(9);
  const model::ContentEncoder enc_src(cfg, rng), enc_tgt(cfg, rng);
  const model::StyleEncoder style_enc(cfg, rng);
  const model::Decoder dec(cfg, rng);
  const Tensor x = random_tensor({1, 2, 16}, rng);
  const Tensor s = random_tensor({1, 2}, rng);

  auto loss = [&]() {
    const Tensor c = enc_src(x);
    return semi_cycle_losses(c, s, dec(c, s), enc_tgt, style_enc).content;
  };
  nn::ParameterList params;
  dec.collect("dec", params);
  for (auto& p : params) p.tensor.zero_grad();
  loss().backward();

  int checked = 0;
  const double h = 1e-6;
  for (auto& p : params) {
    REQUIRE(p.tensor.has_grad());
    const std::vector<double> grad(p.tensor.grad().begin(), p.tensor.grad().end());
    auto v = p.tensor.mutable_values();
    for (std::size_t i = 0; i < v.size(); i += 3) {
      if (std::abs(grad[i]) < 1e-5) continue;
      const double keep = v[i];
      double plus, minus;
      {
        nn::NoGradGuard g;
        v[i] = keep + h;
        plus = loss().item();
        v[i] = keep - h;
        minus = loss().item();
      }
      v[i] = keep;
      const double fd = (plus - minus) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-3 * std::abs(fd));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("gan losses at a constant one-half discriminator") {
  const Tensor half = Tensor::full({4, 1}, 0.5);
  const auto l = gan_losses(half, half);
  CHECK(l.d == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(l.g == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.d == doctest::Approx(1.3863).epsilon(1e-4));

  const auto perfect = gan_losses(Tensor::full({2, 1}, 1.0 - 1e-12), Tensor::full({2, 1}, 1e-12));
  CHECK(perfect.d < 1e-6);
  const auto worst = gan_losses(Tensor::full({2, 1}, 0.0), Tensor::full({2, 1}, 1.0));
  CHECK(std::isfinite(worst.d));
  CHECK(std::isfinite(worst.g));
  CHECK(worst.d == doctest::Approx(-2 * std::log(1e-7)).epsilon(1e-9));

  const auto literal = gan_losses(half, half, 1e-7, GanGeneratorLoss::kMinimax);
  CHECK(literal.g == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("weighted total") {
  LossParts p;
  p.recon = {1, 1};
  p.content = {1, 1};
  p.style = {1, 1};
  p.gan_g = 2;  // both directions
  const LossWeights w;
  CHECK(total_loss(p, w) == 26.0);
  CHECK(total_loss(p, LossWeights{0, 0, 0, 0}) == 0.0);
  LossWeights doubled = w;
  doubled.lambda_x *= 2;
  p.recon = {0.3, 0.45};
  CHECK(total_loss(p, doubled) - total_loss(p, w) == doctest::Approx(0.75 * 10).epsilon(1e-12));
}

TEST_CASE("domain style moving average") {
  DomainStyleState st;
  const std::vector<double> v{0.5, -1.0, 2.0};
  update_domain_style(st, 0, v, 3);
  CHECK(st.mean[0] == v);
  CHECK(st.count[0] == 1);
  for (int i = 0; i < 100; ++i) update_domain_style(st, 0, v, 3);
  for (int k = 0; k < 3; ++k) CHECK(st.mean[0][k] == doctest::Approx(v[k]).epsilon(1e-12));

  DomainStyleState alt;
  const double norm = std::sqrt(0.25 + 1.0 + 4.0);
  const int n = 20000;
  double closed = 1.0;  // coefficient on v, closed-form EMA
  for (int k = 0; k < n; ++k) {
    std::vector<double> x = v;
    const double sign = k % 2 == 0 ? 1.0 : -1.0;
    for (auto& e : x) e *= sign;
    update_domain_style(alt, 1, x, 3);
    if (k > 0) closed = 0.999 * closed + 0.001 * sign;
    double mag = 0.0;
    for (double e : alt.mean[1]) mag += e * e;
    REQUIRE(std::sqrt(mag) <= norm + 1e-12);
  }
  for (int k = 0; k < 3; ++k) CHECK(alt.mean[1][k] == doctest::Approx(closed * v[k]).epsilon(1e-9));
  double mag = 0.0;
  for (double e : alt.mean[1]) mag += e * e;
  CHECK(std::sqrt(mag) < 1e-3 * norm);
  CHECK_THROWS_AS(update_domain_style(alt, 2, v, 3), InvalidInputError);
  CHECK_THROWS_AS(update_domain_style(alt, 0, v, 2), ShapeError);
}

TEST_CASE("learning-rate schedule and update ratio") {
  OptimizerSchedule s;
  s.total_iters = 200000;
  CHECK(s.lr_g_at(1) == 2e-4);
  CHECK(s.lr_d_at(150000) == 1e-4);
  CHECK(s.lr_g_at(175000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.lr_d_at(200000) == 0.0);
  CHECK(s.gen_steps_at(1) == 2);
  CHECK(s.gen_steps_at(100000) == 2);
  CHECK(s.gen_steps_at(100001) == 1);
  OptimizerSchedule bad = s;
  bad.decay_start = 300000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("adam first step moves by the learning rate") {
  Tensor w({3}, {1.0, 2.0, 3.0}, true);
  Adam opt({{"w", w}}, 0.5, 0.999, 1e-8);
  const Tensor target({3}, {0.0, 0.0, 10.0});
  nn::l1_loss(w, target).backward();
  opt.step(0.1);
  CHECK(w.at(0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(w.at(1) == doctest::Approx(1.9).epsilon(1e-7));
  CHECK(w.at(2) == doctest::Approx(3.1).epsilon(1e-7));
  CHECK(opt.steps() == 1);
}

TEST_CASE("train step bookkeeping, partition and determinism") {
  const auto d1 = toy_corpus("neu", 2, 1), d2 = toy_corpus("ang", 2, 2);
  TrainState a = make_initial_state(tiny_config());
  TrainState b = make_initial_state(tiny_config());

  const auto gen0 = snapshot(a.gen_opt.parameters());
  const auto disc0 = snapshot(a.disc_opt.parameters());
  auto batch = dataset::make_batch(d1, d2, 2, a.rng);
  discriminator_update(a, batch, 1e-3);
  CHECK(snapshot(a.gen_opt.parameters()) == gen0);
  CHECK(snapshot(a.disc_opt.parameters()) != disc0);
  const auto disc1 = snapshot(a.disc_opt.parameters());
  generator_update(a, batch, 1e-3);
  CHECK(snapshot(a.disc_opt.parameters()) == disc1);
  CHECK(snapshot(a.gen_opt.parameters()) != gen0);
  CHECK(a.styles.count[0] == 2);

  // identical state and data give identical updates
  TrainState c = make_initial_state(tiny_config());
  const auto r_b = train_step(b, d1, d2);
  const auto r_c = train_step(c, d1, d2);
  CHECK(snapshot(b.gen_opt.parameters()) == snapshot(c.gen_opt.parameters()));
  CHECK(LossLog::format_row(r_b) == LossLog::format_row(r_c));
  CHECK(b.rng == c.rng);

  CHECK(r_b.iteration == 1);
  CHECK(r_b.gen_steps == 2);
  CHECK(b.gen_opt.steps() == 2);
  CHECK(b.disc_opt.steps() == 1);
  for (int i = 0; i < 4; ++i) {
    const auto r = train_step(b, d1, d2);
    const auto& p = r.parts;
    for (double v : {p.recon[0], p.recon[1], p.content[0], p.content[1], p.style[0], p.style[1], p.gan_d, p.gan_g})
      CHECK(v >= 0.0);
    CHECK(std::abs(p.total - total_loss(p, b.config.weights)) <= 1e-9 * std::max(1.0, std::abs(p.total)));
  }
  // iterations 1-3 run two generator updates, 4-5 one
  CHECK(b.gen_opt.steps() == 3 * 2 + 2);
  CHECK(b.disc_opt.steps() == 5);
}

TEST_CASE("non-finite parameters abort with a diagnostic") {
  const auto d1 = toy_corpus("neu", 1, 1), d2 = toy_corpus("ang", 1, 2);
  TrainConfig cfg = tiny_config();
  cfg.nan_check_every = 1;
  TrainState s = make_initial_state(cfg);
  auto critic = s.disc_opt.parameters();
  critic.back().tensor.mutable_values()[0] = std::nan("");
  try {
    train_step(s, d1, d2);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip continues the same trajectory") {
  const auto dir = fixtures::temp_dir("ckpt");
  const auto d1 = toy_corpus("neu", 2, 1), d2 = toy_corpus("ang", 2, 2);
  TrainState a = make_initial_state(tiny_config());
  for (int i = 0; i < 3; ++i) train_step(a, d1, d2);
  a.info.speaker = "spk";
  a.info.emotion = {"neu", "ang"};
  a.info.mcep_stats = features::McepStats{std::vector<double>(24, 0.1), std::vector<double>(24, 2.0)};
  a.info.logf0[1] = prosody::LogF0Stats{5.0, 0.2, 10};
  save_checkpoint(a, dir / "a.ckpt");
  CHECK(!std::filesystem::exists(dir / "a.ckpt.tmp"));

  auto loaded = load_checkpoint(dir / "a.ckpt", tiny_config());
  CHECK(loaded.warnings.empty());
  TrainState& b = loaded.state;
  CHECK(b.iteration == 3);
  CHECK(b.rng == a.rng);
  CHECK(b.styles.mean == a.styles.mean);
  CHECK(b.styles.count == a.styles.count);
  CHECK(b.gen_opt.steps() == a.gen_opt.steps());
  CHECK(b.gen_opt.first_moments() == a.gen_opt.first_moments());
  CHECK(b.disc_opt.second_moments() == a.disc_opt.second_moments());
  CHECK(snapshot(b.model.all_parameters()) == snapshot(a.model.all_parameters()));
  CHECK(b.info.speaker == "spk");
  CHECK(b.info.emotion[1] == "ang");
  CHECK(b.info.mcep_stats->std == a.info.mcep_stats->std);
  CHECK(!b.info.logf0[0].has_value());
  CHECK(b.info.logf0[1]->sigma == 0.2);

  for (int i = 0; i < 5; ++i) {
    CHECK(LossLog::format_row(train_step(a, d1, d2)) == LossLog::format_row(train_step(b, d1, d2)));
  }
  CHECK(snapshot(b.model.all_parameters()) == snapshot(a.model.all_parameters()));
}

TEST_CASE("checkpoint rejects foreign files and warns on config drift") {
  const auto dir = fixtures::temp_dir("ckpt_bad");
  TrainState a = make_initial_state(tiny_config());
  save_checkpoint(a, dir / "a.ckpt");
  std::ifstream in(dir / "a.ckpt", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), VersionError);
  std::string v2 = bytes;
  v2[8] = 2;
  std::ofstream(dir / "v2.ckpt", std::ios::binary) << v2;
  CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), VersionError);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), InvalidInputError);

  TrainConfig other = tiny_config();
  other.weights.lambda_x = 5.0;
  const auto drift = load_checkpoint(dir / "a.ckpt", other);
  REQUIRE(drift.warnings.size() == 1);
  CHECK(drift.warnings[0].find("config hash") != std::string::npos);
  CHECK(config_hash(other) != config_hash(tiny_config()));
}

TEST_CASE("loss log format and append") {
  const auto dir = fixtures::temp_dir("losslog");
  StepReport r;
  r.iteration = 7;
  r.parts.recon = {0.5, 0.25};
  r.parts.total = 0.1;
  r.lr_g = 2e-4;
  r.lr_d = 1e-4;
  {
    LossLog log(dir / "l.csv");
    log.append(r);
  }
  {
    LossLog log(dir / "l.csv");
    r.iteration = 8;
    log.append(r);
  }
  std::ifstream in(dir / "l.csv");
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "iteration,L_recon1,L_recon2,L_c1,L_c2,L_s1,L_s2,L_gan_d,L_gan_g,total,lr_g,lr_d");
  CHECK(row1 == "7,0.5,0.25,0,0,0,0,0,0,0.10000000000000001,0.00020000000000000001,0.0001");
  CHECK(row2.substr(0, 2) == "8,");
  CHECK(!std::getline(in, extra));
}

TEST_CASE("reconstruction overfits without the adversarial term") {
  const auto d1 = toy_corpus("neu", 1, 5, 140), d2 = toy_corpus("ang", 1, 6, 140);
  TrainConfig cfg = desk_scale_config(4);
  cfg.weights.lambda_g = 0.0;
  cfg.schedule.total_iters = 500;
  cfg.schedule.decay_start = 500;
  cfg.schedule.ratio_switch_iter = 0;
  TrainState s = make_initial_state(cfg);
  double at10 = 0.0, last = 0.0;
  while (s.iteration < 500) {
    const auto r = train_step(s, d1, d2);
    const double recon = r.parts.recon[0] + r.parts.recon[1];
    if (r.iteration == 10) at10 = recon;
    last = recon;
  }
  MESSAGE("recon at 10: " << at10 << ", at 500: " << last);
  CHECK(last <= 0.5 * at10);
}

TEST_CASE("run configuration parsing") {
  const std::string text =
      "# desk run\n"
      "speaker = F01\nemotion_1=neu\nemotion_2=ang\nfeatures_dir=feat\nstats_dir=stats\nout_dir=out\n"
      "batch_size=4\ntotal_iters=2000\ndecay_start=1500\nratio_switch_iter=1000\n"
      "lambda_s=1\nlambda_c=1\nlambda_x=10\nlambda_g=1\nlr_g=0.0002\nlr_d=0.0001\nseed=17\nwidth_divisor=16\n";
  const auto rc = parse_run_config(text, "cfg");
  CHECK(rc.speaker == "F01");
  CHECK(rc.emotion_2 == "ang");
  CHECK(rc.out_dir == "out");
  CHECK(rc.train.seed == 17);
  CHECK(rc.train.batch_size == 4);
  CHECK(rc.train.schedule.lr_g == 2e-4);
  CHECK(rc.train.weights.lambda_x == 10.0);
  CHECK(rc.train.model.width_divisor == 16);

  CHECK_THROWS_AS(parse_run_config(text + "bogus=1\n", "cfg"), ParseError);
  CHECK_THROWS_AS(parse_run_config(text + "seed=3\n", "cfg"), ParseError);
  CHECK_THROWS_AS(parse_run_config("speaker=F01\n", "cfg"), ConfigError);
  try {
    parse_run_config("speaker=F01\nbatch_size=four\n", "cfg");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::string bad_emotion = text;
  bad_emotion.replace(bad_emotion.find("emotion_2=ang"), 13, "emotion_2=joy");
  CHECK_THROWS_AS(parse_run_config(bad_emotion, "cfg"), ConfigError);
}
