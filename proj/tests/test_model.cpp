#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "emovc/error.hpp"
#include "emovc/layers.hpp"
#include "emovc/model.hpp"
#include "emovc/ops.hpp"

using namespace emovc;
using namespace emovc::nn;
using emovc::model::ModelConfig;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(shape, v, grad);
}

// Compares backprop gradients of f with central differences on every input.
void gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
               double tol = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  const Tensor out = f(inputs);
  out.backward();
  const double h = 1e-6;
  for (auto& t : inputs) {
    REQUIRE(t.has_grad());
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      auto v = t.mutable_values();
      const double keep = v[i];
      double plus, minus;
      {
        NoGradGuard g;
        v[i] = keep + h;
        plus = f(inputs).item();
        v[i] = keep - h;
        minus = f(inputs).item();
      }
      v[i] = keep;
      const double numeric = (plus - minus) / (2 * h);
      CHECK(std::abs(numeric - analytic[i]) <= tol * (1.0 + std::abs(numeric)));
    }
  }
}

// Weighted sum so that every output element gets a distinct upstream gradient.
Tensor probe(const Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.37 * i + 0.1);
  const Tensor flat = reshape(y, {1, static_cast<int>(y.numel())});
  const Tensor wrow({1, static_cast<int>(y.numel())}, w);
  return reshape(linear(flat, wrow, Tensor::zeros({1})), {1});
}

ModelConfig small_config() {
  ModelConfig c;
  c.width_divisor = 16;
  return c;
}

void zero_all(const ParameterList& params) {
  for (const auto& p : params) {
    auto v = const_cast<Tensor&>(p.tensor).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

}  // namespace

TEST_CASE("glu examples") {
  const Tensor x({1, 4, 1}, {1.0, -1.0, 0.0, 0.0});
  const auto y = vals(glu(x));
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(-0.5));
  const Tensor sat({1, 2, 3}, {1.5, -2.0, 3.0, 100.0, 100.0, 100.0});
  const auto s = vals(glu(sat));
  CHECK(std::abs(s[0] - 1.5) < 1e-10);
  CHECK(std::abs(s[1] + 2.0) < 1e-10);
  CHECK(std::abs(s[2] - 3.0) < 1e-10);
  const Tensor z({1, 2, 2}, {0.0, 0.0, 5.0, -5.0});
  CHECK(vals(glu(z))[0] == 0.0);
  CHECK_THROWS_AS(glu(Tensor::zeros({1, 3, 2})), ConfigError);
}

TEST_CASE("instance norm standardizes and guards constants") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 3, 50}, rng, 3.0, false);
  const auto y = vals(instance_norm(x, 1e-5));
  for (int r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (int t = 0; t < 50; ++t) m += y[r * 50 + t] / 50;
    for (int t = 0; t < 50; ++t) v += (y[r * 50 + t] - m) * (y[r * 50 + t] - m) / 50;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-3);
  }
  const auto c = vals(instance_norm(Tensor::full({1, 1, 8}, 4.2), 1e-5));
  for (double v : c) CHECK(v == 0.0);
  // already standardized input is a fixed point up to the epsilon guard
  const auto again = vals(instance_norm(Tensor({2, 3, 50}, std::vector<double>(y.begin(), y.end())), 1e-5));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(again[i] - y[i]) < 1e-4);
}

TEST_CASE("adain examples") {
  const Tensor c({1, 1, 3}, {1.0, 2.0, 3.0});
  const auto y = vals(adain(c, Tensor({1, 1}, {0.0}), Tensor({1, 1}, {1.0}), 1e-5));
  // population standardization: (x - 2) / sqrt(2/3)
  const double s = std::sqrt(2.0 / 3.0 + 1e-5);
  CHECK(y[0] == doctest::Approx(-1.0 / s).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(1.0 / s).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(1.2247).epsilon(1e-4));

  const auto flat = vals(adain(Tensor::full({1, 1, 5}, 7.0), Tensor({1, 1}, {-0.3}), Tensor({1, 1}, {2.0}), 1e-5));
  for (double v : flat) CHECK(v == doctest::Approx(-0.3));
}

TEST_CASE("adain fixed point") {
  Rng rng(4);
  const Tensor c = random_tensor({2, 4, 30}, rng, 2.0, false);
  std::vector<double> mu(8), sigma(8);
  const auto v = vals(c);
  for (int r = 0; r < 8; ++r) {
    double m = 0, q = 0;
    for (int t = 0; t < 30; ++t) m += v[r * 30 + t] / 30;
    for (int t = 0; t < 30; ++t) q += (v[r * 30 + t] - m) * (v[r * 30 + t] - m) / 30;
    mu[r] = m;
    sigma[r] = std::sqrt(q + 1e-5);
  }
  const auto y = vals(adain(c, Tensor({2, 4}, mu), Tensor({2, 4}, sigma), 1e-5));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(y[i] - v[i]) < 1e-6);
}

TEST_CASE("pixel shuffle index map") {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const auto y = pixel_shuffle_1d(x, 2);
  CHECK(y.shape() == Shape{1, 1, 4});
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) == std::vector<double>{1, 3, 2, 4});
  Rng rng(2);
  const Tensor r = random_tensor({2, 6, 5}, rng, 1.0, false);
  const auto id = pixel_shuffle_1d(r, 1);
  CHECK(std::equal(id.values().begin(), id.values().end(), r.values().begin()));
  const auto s = pixel_shuffle_1d(r, 3);
  std::vector<double> a(r.values().begin(), r.values().end()), b(s.values().begin(), s.values().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  // inverse index map recovers the input
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int t = 0; t < 5; ++t)
        for (int k = 0; k < 3; ++k)
          CHECK(s.values()[(n * 2 + c) * 15 + 3 * t + k] == r.values()[(n * 6 + c * 3 + k) * 5 + t]);
  CHECK_THROWS_AS(pixel_shuffle_1d(r, 4), ConfigError);
}

TEST_CASE("operator gradients match finite differences") {
  Rng rng(10);
  SUBCASE("conv1d zero and circular padding, stride 2") {
    for (auto mode : {PadMode::kZero, PadMode::kCircular}) {
      gradcheck([mode](const std::vector<Tensor>& in) { return probe(conv1d(in[0], in[1], in[2], 2, 2, mode)); },
                {random_tensor({2, 3, 9}, rng), random_tensor({4, 3, 5}, rng), random_tensor({4}, rng)});
    }
  }
  SUBCASE("conv2d") {
    gradcheck([](const std::vector<Tensor>& in) { return probe(conv2d(in[0], in[1], in[2], {2, 1}, {1, 1})); },
              {random_tensor({2, 2, 5, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  }
  SUBCASE("instance norm and affine") {
    gradcheck([](const std::vector<Tensor>& in) { return probe(channel_affine(instance_norm(in[0], 1e-5), in[1], in[2])); },
              {random_tensor({2, 3, 7}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  }
  SUBCASE("glu, shuffle, repeat, gather, mean") {
    gradcheck([](const std::vector<Tensor>& in) {
      const Tensor a = pixel_shuffle_1d(glu(in[0]), 2);
      const Tensor m = mean_over_time(a);
      return probe(add(gather_columns(repeat_channels(m, 2), {0, 3, 1}), gather_columns(in[1], {2, 0, 0})));
    }, {random_tensor({2, 8, 3}, rng), random_tensor({2, 3}, rng)});
  }
  SUBCASE("linear, sigmoid and losses") {
    gradcheck([](const std::vector<Tensor>& in) {
      const Tensor p = sigmoid(linear(in[0], in[1], in[2]));
      return weighted_sum({mean_neg_log(p, 1e-7), mean_neg_log1m(p, 1e-7), l1_loss(p, in[3])}, {1.0, 0.5, 2.0});
    }, {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2}, rng), random_tensor({3, 2}, rng)});
  }
}

TEST_CASE("clamped probabilities keep losses finite") {
  const Tensor p({3}, {0.0, 1.0, 0.5});
  CHECK(std::isfinite(mean_neg_log(p, 1e-7).item()));
  CHECK(std::isfinite(mean_neg_log1m(p, 1e-7).item()));
}

TEST_CASE("full-width layer shapes") {
  ModelConfig cfg;
  Rng rng(0);
  const model::ContentEncoder content(cfg, rng);
  const model::StyleEncoder style(cfg, rng);
  const model::Decoder decoder(cfg, rng);
  const model::Discriminator critic(cfg, rng);
  NoGradGuard g;
  const Tensor x = random_tensor({1, 24, 128}, rng, 1.0, false);
  model::ShapeTrace trace;
  const Tensor c = content(x, &trace);
  const Tensor s = style(x, &trace);
  const Tensor y = decoder(c, s, &trace);
  const Tensor d = critic(x, &trace);
  const std::vector<std::pair<std::string, Shape>> expected{
      {"content.in", {1, 128, 128}},   {"content.down0", {1, 256, 64}}, {"content.down1", {1, 512, 32}},
      {"content.res0", {1, 512, 32}},  {"content.res1", {1, 512, 32}},  {"content.res2", {1, 512, 32}},
      {"content.res3", {1, 512, 32}},  {"style.in", {1, 128, 128}},     {"style.down0", {1, 256, 64}},
      {"style.down1", {1, 512, 32}},   {"style.down2", {1, 512, 16}},   {"style.down3", {1, 512, 8}},
      {"style.pool", {1, 512, 1}},     {"style.code", {1, 16}},         {"decoder.res0", {1, 512, 32}},
      {"decoder.res1", {1, 512, 32}},  {"decoder.res2", {1, 512, 32}},  {"decoder.up0", {1, 512, 64}},
      {"decoder.up1", {1, 256, 128}},  {"decoder.out", {1, 24, 128}},   {"critic.in", {1, 128, 24, 64}},
      {"critic.down0", {1, 256, 12, 32}}, {"critic.down1", {1, 512, 6, 16}}, {"critic.down2", {1, 1024, 5, 8}},
      {"critic.out", {1, 1}}};
  REQUIRE(trace.layers.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(trace.layers[i].first == expected[i].first);
    CHECK(shape_string(trace.layers[i].second) == shape_string(expected[i].second));
  }
  CHECK(d.item() > 0.0);
  CHECK(d.item() < 1.0);
  const Tensor params = decoder.mlp()(s);
  CHECK(params.shape() == Shape{1, 3 * 512 * 2});
}

TEST_CASE("fully convolutional over longer inputs") {
  const ModelConfig cfg = small_config();
  Rng rng(1);
  const model::ContentEncoder content(cfg, rng);
  const model::StyleEncoder style(cfg, rng);
  const model::Decoder decoder(cfg, rng);
  NoGradGuard g;
  for (int t : {16, 20, 256}) {
    const Tensor x = random_tensor({2, 24, t}, rng, 1.0, false);
    const Tensor c = content(x);
    CHECK(c.shape() == Shape{2, cfg.code_channels(), t / 4});
    CHECK(decoder(c, style(x)).shape() == Shape{2, 24, t});
  }
  CHECK_THROWS_AS(content(Tensor::zeros({1, 24, 18})), ShapeError);
  CHECK_THROWS_AS(content(Tensor::zeros({1, 23, 16})), ShapeError);
  CHECK_THROWS_AS(style(Tensor::zeros({1, 24, 12})), ShapeError);
}

TEST_CASE("content code ignores a per-coefficient offset at the first norm") {
  // The first layer is a convolution, so a constant offset per input row adds
  // a constant per output channel away from the zero-padded borders; the
  // following IN removes it. Check on the stride-1 first stage only.
  Rng rng(3);
  const Tensor x = random_tensor({1, 24, 64}, rng, 1.0, false);
  std::vector<double> shifted(x.values().begin(), x.values().end());
  for (int d = 0; d < 24; ++d)
    for (int t = 0; t < 64; ++t) shifted[d * 64 + t] += 0.5 * d - 3.0;
  const Conv1d conv(24, 8, 15, 1, rng, PadMode::kCircular);
  NoGradGuard g;
  const auto a = vals(instance_norm(conv(x), 1e-5));
  const auto b = vals(instance_norm(conv(Tensor({1, 24, 64}, shifted)), 1e-5));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
}

TEST_CASE("style encoder properties") {
  const ModelConfig cfg = small_config();
  Rng rng(5);
  model::StyleEncoder style(cfg, rng);
  NoGradGuard g;
  const Tensor x = random_tensor({1, 24, 64}, rng, 1.0, false);
  std::vector<double> twice(24 * 128);
  for (int d = 0; d < 24; ++d)
    for (int t = 0; t < 128; ++t) twice[d * 128 + t] = x.values()[d * 64 + t % 64];
  const auto a = vals(style(x));
  const auto b = vals(style(Tensor({1, 24, 128}, twice)));
  REQUIRE(a.size() == 16);
  for (int i = 0; i < 16; ++i) {
    CHECK(std::isfinite(a[i]));
    CHECK(std::abs(a[i] - b[i]) < 1e-4);
  }
  ParameterList params;
  style.collect("s", params);
  for (const auto& p : params) {
    if (p.name.size() > 5 && p.name.substr(p.name.size() - 5) == ".bias") {
      auto v = const_cast<Tensor&>(p.tensor).mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  for (double v : vals(style(Tensor::zeros({1, 24, 32})))) CHECK(v == 0.0);
}

TEST_CASE("style mlp maps zero to zero and separates codes") {
  const ModelConfig cfg = small_config();
  Rng rng(6);
  const model::StyleToAdain mlp(cfg, rng);
  NoGradGuard g;
  const auto zero = vals(mlp(Tensor::zeros({1, 16})));
  for (double v : zero) CHECK(v == 0.0);
  std::vector<std::vector<double>> outs;
  for (int i = 0; i < 20; ++i) {
    const auto v = vals(mlp(random_tensor({1, 16}, rng, 1.0, false)));
    outs.emplace_back(v.begin(), v.end());
  }
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j) CHECK(outs[i] != outs[j]);
}

TEST_CASE("decoder output depends on the style") {
  const ModelConfig cfg = small_config();
  Rng rng(7);
  const model::ContentEncoder content(cfg, rng);
  const model::Decoder decoder(cfg, rng);
  NoGradGuard g;
  const Tensor c = content(random_tensor({1, 24, 32}, rng, 1.0, false));
  const auto a = vals(decoder(c, random_tensor({1, 16}, rng, 1.0, false)));
  const auto b = vals(decoder(c, random_tensor({1, 16}, rng, 1.0, false)));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("discriminator range, zero weights and input checks") {
  const ModelConfig cfg = small_config();
  Rng rng(8);
  model::Discriminator critic(cfg, rng);
  NoGradGuard g;
  const Tensor out = critic(random_tensor({3, 24, 128}, rng, 1.0, false));
  CHECK(out.shape() == Shape{3, 1});
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(critic(Tensor::zeros({1, 24, 64})), ShapeError);
  ParameterList params;
  critic.collect("d", params);
  zero_all(params);
  for (double v : vals(critic(random_tensor({2, 24, 128}, rng, 1.0, false)))) CHECK(v == 0.5);
}

TEST_CASE("networks are deterministic") {
  const ModelConfig cfg = small_config();
  Rng r1(11), r2(11);
  const model::EmotionVcModel a(cfg, r1), b(cfg, r2);
  NoGradGuard g;
  Rng rng(1);
  const Tensor x = random_tensor({1, 24, 128}, rng, 1.0, false);
  const auto ya = vals(a.decoder[0](a.content[0](x), a.style[1](x)));
  const auto yb = vals(b.decoder[0](b.content[0](x), b.style[1](x)));
  CHECK(std::equal(ya.begin(), ya.end(), yb.begin()));
  CHECK(ya == vals(a.decoder[0](a.content[0](x), a.style[1](x))));
}

TEST_CASE("initialization statistics") {
  ModelConfig cfg = small_config();
  Rng rng(12);
  const model::EmotionVcModel m(cfg, rng);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& p : m.all_parameters()) {
    const bool is_weight = p.name.size() > 7 && p.name.substr(p.name.size() - 7) == ".weight";
    const bool is_gain = p.name.size() > 5 && p.name.substr(p.name.size() - 5) == ".gain";
    for (double v : p.tensor.values()) {
      if (is_weight) {
        sum += v;
        sq += v * v;
        ++n;
      } else if (is_gain) {
        CHECK(v == 1.0);
      } else {
        CHECK(v == 0.0);
      }
    }
  }
  REQUIRE(n > 10000);
  CHECK(std::abs(sum / n) < 1e-3);
  CHECK(std::abs(std::sqrt(sq / n) - kInitStd) < 1e-3);
}
