#include <cmath>
#include <limits>

#include "doctest.h"
#include "emovc/error.hpp"
#include "emovc/prosody.hpp"
#include "emovc/random.hpp"

using namespace emovc;
using namespace emovc::prosody;

TEST_CASE("constant track gives the floored sigma") {
  const std::vector<std::vector<double>> tracks{{100.0, 0.0, 100.0, 100.0}};
  const auto s = estimate_logf0_stats(tracks);
  CHECK(s.mu == doctest::Approx(std::log(100.0)).epsilon(1e-12));
  CHECK(s.sigma == kSigmaFloor);
  CHECK(s.n_frames == 3);
}

TEST_CASE("two-point population statistics") {
  const std::vector<std::vector<double>> tracks{{100.0}, {0.0, 200.0}};
  const auto s = estimate_logf0_stats(tracks);
  CHECK(s.mu == doctest::Approx((std::log(100.0) + std::log(200.0)) / 2).epsilon(1e-12));
  CHECK(s.sigma == doctest::Approx(std::log(2.0) / 2).epsilon(1e-12));
  CHECK(s.sigma == doctest::Approx(0.34657).epsilon(1e-5));
}

TEST_CASE("unvoiced tracks are ignored") {
  const std::vector<std::vector<double>> tracks{{0.0, 0.0, 0.0}, {150.0}};
  const auto s = estimate_logf0_stats(tracks);
  CHECK(s.mu == doctest::Approx(std::log(150.0)));
  CHECK(s.n_frames == 1);
  const std::vector<std::vector<double>> none{{0.0, 0.0}, {}};
  CHECK_THROWS_AS(estimate_logf0_stats(none), EmptyResultError);
}

TEST_CASE("log-gaussian conversion example") {
  const LogF0Stats src{std::log(150.0), 0.2, 10}, tgt{std::log(250.0), 0.3, 10};
  const std::vector<double> f0{200.0, 0.0};
  const auto out = convert_f0(f0, src, tgt);
  const double expected = 250.0 * std::pow(200.0 / 150.0, 1.5);
  CHECK(out[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out[0] == doctest::Approx(384.9).epsilon(1e-4));
  CHECK(out[1] == 0.0);
}

TEST_CASE("identical stats return the input exactly") {
  const LogF0Stats s{5.1, 0.17, 4};
  const std::vector<double> f0{0.0, 101.3, 222.2, 0.0, 97.0};
  CHECK(convert_f0(f0, s, s) == f0);
}

TEST_CASE("invalid inputs are rejected") {
  const LogF0Stats s{5.0, 0.2, 1};
  const std::vector<double> neg{100.0, -1.0};
  CHECK_THROWS_AS(convert_f0(neg, s, s), InvalidInputError);
  const std::vector<double> nan{std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(convert_f0(nan, s, s), InvalidInputError);
}

TEST_CASE("round trip, monotonicity and voicing pattern") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const LogF0Stats a{std::log(80 + 200 * rng.uniform()), 0.05 + 0.4 * rng.uniform(), 1};
    const LogF0Stats b{std::log(80 + 200 * rng.uniform()), 0.05 + 0.4 * rng.uniform(), 1};
    std::vector<double> f0(40);
    for (auto& f : f0) f = rng.uniform() < 0.3 ? 0.0 : 60 + 300 * rng.uniform();
    const auto there = convert_f0(f0, a, b);
    const auto back = convert_f0(there, b, a);
    for (std::size_t i = 0; i < f0.size(); ++i) {
      CHECK((there[i] == 0.0) == (f0[i] == 0.0));
      if (f0[i] > 0) CHECK(std::abs(back[i] - f0[i]) <= 1e-9 * f0[i]);
      for (std::size_t j = 0; j < f0.size(); ++j) {
        if (f0[i] > 0 && f0[j] > 0 && f0[i] < f0[j]) CHECK(there[i] < there[j]);
      }
    }
  }
}

TEST_CASE("moment transport") {
  const std::vector<double> f0{100.0, 0.0, 150.0, 220.0, 0.0, 180.0};
  const std::vector<std::vector<double>> tracks{f0};
  const auto src = estimate_logf0_stats(tracks);
  const LogF0Stats tgt{std::log(260.0), 0.31, 1};
  const std::vector<std::vector<double>> out{convert_f0(f0, src, tgt)};
  const auto moved = estimate_logf0_stats(out);
  CHECK(std::abs(moved.mu - tgt.mu) < 1e-9);
  CHECK(std::abs(moved.sigma - tgt.sigma) < 1e-9);
}

TEST_CASE("json persistence") {
  const LogF0Stats s{4.9, 0.23, 321};
  const auto back = logf0_stats_from_json(logf0_stats_to_json(s, "F01", "sad"));
  CHECK(back.mu == s.mu);
  CHECK(back.sigma == s.sigma);
  CHECK(back.n_frames == s.n_frames);
}
