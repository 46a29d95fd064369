#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"

#include "adsense/allocation.hpp"
#include "adsense/bounds.hpp"
#include "adsense/error.hpp"
#include "adsense/harness.hpp"
#include "oracles.hpp"

using namespace adsense;

namespace {

ChernoffInputs at(double p, double x, double s, double gamma) { return ChernoffInputs{p, x, 1.0, s, gamma}; }

// log of p f1(y) - log of (1 - p) f0(y) in normalized units
double log_ratio(double p, double x, double s, double y) {
  const double v0 = 1.0 / x, v1 = 1.0 + 1.0 / x;
  const double d = y - std::sqrt(s);
  return std::log(p) - 0.5 * std::log(v1) - 0.5 * d * d / v1 - std::log1p(-p) + 0.5 * std::log(v0) +
         0.5 * y * y / v0;
}

}  // namespace

TEST_CASE("closed-form C0") {
  CHECK(chernoff_closed_form_c0(at(0.01, 0.0, 16, 0.5)) == 1.0);
  // mpmath, 30 digits
  CHECK(chernoff_closed_form_c0(at(0.01, 1.0, 16, 0.5)) == doctest::Approx(0.2559484832).epsilon(1e-9));
  // quadrature at p = 0 agrees
  for (double x : {0.01, 1.0, 30.0, 1e4}) {
    for (double g : {0.25, 0.5, 0.8}) {
      CHECK(chernoff_exact(at(0.0, x, 9.0, g)) == doctest::Approx(chernoff_closed_form_c0(at(0.0, x, 9.0, g))).epsilon(1e-9));
    }
  }
  // large r lambda leading term e^(-gamma s/2) (1-gamma)^(-1/2) (r lambda)^(-gamma/2)
  const double x = 1e10;
  const double lead = std::exp(-0.25 * 16) / std::sqrt(0.5) * std::pow(x, -0.25);
  CHECK(chernoff_closed_form_c0(at(0.3, x, 16, 0.5)) == doctest::Approx(lead).epsilon(1e-3));
}

TEST_CASE("exact Chernoff coefficient against high-precision values") {
  struct Row {
    double p, x, s, g, value;
  };
  // mpmath quad, 30 digits
  const Row table[] = {
      {0.01, 1.0, 16.0, 0.5, 0.32051972306219155},   {0.1, 0.5, 16.0, 0.5, 0.6103307816072754},
      {0.3, 10.0, 4.0, 1.0 / 3.0, 0.75911211445270342}, {0.01, 100.0, 16.0, 0.5, 0.10872303051072691},
      {0.5, 0.01, 1.0, 0.75, 0.99976725233138007},  {0.1, 0.5, 16.0, 2.0 / 3.0, 0.66633665169728456},
      {0.001, 1000.0, 9.0, 0.5, 0.058164472016527917},
  };
  for (const Row& r : table) {
    CAPTURE(r.p);
    CAPTURE(r.x);
    CHECK(chernoff_exact(at(r.p, r.x, r.s, r.g)) == doctest::Approx(r.value).epsilon(1e-9));
  }
}

TEST_CASE("exact Chernoff coefficient limits") {
  CHECK(chernoff_exact(at(1.0, 5.0, 16, 0.5)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(chernoff_exact(at(0.2, 0.0, 16, 0.5)) - 1.0) <= 1e-8);
  CHECK(chernoff_exact(at(0.01, 1e8, 16, 0.5)) == doctest::Approx(0.1).epsilon(0.01));

  const auto t0 = std::chrono::steady_clock::now();
  const double big = chernoff_exact(at(0.001, 1e9, 16, 1.0 / 3.0));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(big == doctest::Approx(std::pow(0.001, 2.0 / 3.0)).epsilon(0.01));
  CHECK(secs < 1.0);

  CHECK_THROWS_AS(chernoff_exact(at(0.1, 1.0, 16, 0.5), 0.1), UsageError);
  CHECK_THROWS_AS(chernoff_exact(at(1.1, 1.0, 16, 0.5)), DomainError);
}

TEST_CASE("region boundaries solve p f1 = (1 - p) f0") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double p = std::pow(10.0, -3.0 * u(rng)) * 0.6;
    const double x = std::pow(10.0, 5.0 * u(rng) - 1.0);
    const double s = 1.0 + 20.0 * u(rng);
    const RegionBoundaries b = region_boundaries(at(p, x, s, 0.5));
    if (!b.real) continue;
    for (double y : {b.y_minus, b.y_plus}) {
      // the log ratio vanishes; scale by the size of its terms
      const double scale = 1.0 + 0.5 * y * y * x + std::abs(std::log(p));
      CHECK(std::abs(log_ratio(p, x, s, y)) <= 1e-10 * scale);
    }
    const RegionProbabilities pr = region_probabilities(b);
    for (double v : {pr.p1, pr.p01, pr.p0}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  const RegionBoundaries none = region_boundaries(at(0.99, 1e-6, 1.0, 0.5));
  CHECK_FALSE(none.real);
  CHECK(std::isnan(none.z1_plus));
  const RegionProbabilities all = region_probabilities(none);
  CHECK(all.p1 == 1.0);
  CHECK(all.p01 == 0.0);
  CHECK(all.p0 == 1.0);
}

TEST_CASE("region edges as r lambda vanishes") {
  const RegionBoundaries half = region_boundaries(at(0.5, 1e-12, 16.0, 0.5));
  CHECK(std::abs(half.z1_plus) < 1e-4);
  CHECK(std::abs(half.z01_plus) < 1e-4);

  const RegionBoundaries low = region_boundaries(at(0.1, 1e-12, 16.0, 0.5));
  CHECK(low.z1_plus < -1e3);
  CHECK(low.z1_minus < -1e3);
  CHECK(low.z0_plus < -1e3);
  CHECK(low.z0_minus < -1e3);
  CHECK(low.z01_plus > 1e3);
  CHECK(low.z01_minus < -1e3);
}

TEST_CASE("prop1 and prop2 at vanishing r lambda") {
  const Prop1Bound b1 = prop1_upper(at(0.25, 1e-12, 16.0, 0.5));
  CHECK(b1.strong_raw == doctest::Approx(0.5 * 0.5 + std::sqrt(0.75)).epsilon(1e-6));
  CHECK(b1.strong == 1.0);
  const Prop2Bound b2 = prop2_upper(at(0.25, 1e-12, 16.0, 0.5));
  CHECK(b2.raw == doctest::Approx((1.0 + std::sqrt(0.1875)) / (0.5 + std::sqrt(0.75))).epsilon(1e-6));
  CHECK(b2.raw == doctest::Approx(1.04904).epsilon(1e-5));
  CHECK(b2.value == 1.0);

  for (double p = 0.05; p < 0.46; p += 0.05) {
    CHECK(prop2_upper(at(p, 1e-6, 16.0, 0.5)).raw < prop1_upper(at(p, 1e-6, 16.0, 0.5)).strong_raw);
  }
}

TEST_CASE("prop1 and prop2: argument checks and limits") {
  CHECK_THROWS_AS(prop1_upper(at(0.0, 1.0, 16, 0.5)), DomainError);
  CHECK_THROWS_AS(prop1_upper(at(1.0, 1.0, 16, 0.5)), DomainError);
  CHECK_THROWS_AS(prop2_upper(at(0.1, 1.0, 16, 1.0 / 3.0)), UsageError);

  for (double x : {0.1, 3.0, 100.0}) {
    CHECK(prop2_upper(at(1e-14, x, 16, 0.5)).value ==
          doctest::Approx(chernoff_closed_form_c0(at(0.0, x, 16, 0.5))).epsilon(1e-5));
  }

  const Prop1Bound big = prop1_upper(at(0.01, 1e8, 16, 0.5));
  CHECK(big.strong == doctest::Approx(0.1).epsilon(0.01));
  CHECK(big.weak == doctest::Approx(0.1).epsilon(0.01));
}

TEST_CASE("bound dominance on a small grid") {
  for (double p : {0.001, 0.05, 0.3, 0.7}) {
    for (double x : {1e-3, 0.3, 5.0, 300.0, 1e5}) {
      for (double s : {1.0, 9.0, 25.0}) {
        for (double g : {0.25, 0.5, 0.75}) {
          const ChernoffInputs in = at(p, x, s, g);
          const double e = chernoff_exact(in);
          const Prop1Bound b = prop1_upper(in);
          CAPTURE(p);
          CAPTURE(x);
          CAPTURE(s);
          CAPTURE(g);
          CHECK(e > 0.0);
          CHECK(e <= b.strong + 1e-8);
          CHECK(b.strong <= b.weak + 1e-8);
          CHECK(b.weak <= 1.0);
          if (g == 0.5) CHECK(e <= prop2_upper(in).value + 1e-8);
        }
      }
    }
  }
}

TEST_CASE("leading expansion of the strong bound") {
  // p^(1-g) (1 + ((1-p)/p)^(1-g) e^(-g s/2) (1-g)^(-1/2) (r lambda)^(-g/2)), g = 1/2, s = 16, p = 0.01
  double last = 1e300;
  for (double x : {1e4, 1e5, 1e6}) {
    const double lead = 0.1 * (1.0 + std::sqrt(99.0) * std::exp(-4.0) / std::sqrt(0.5) * std::pow(x, -0.25));
    const double rel = std::abs(prop1_upper(at(0.01, x, 16.0, 0.5)).strong - lead) / lead;
    CHECK(rel < last);
    last = rel;
  }
}

TEST_CASE("gain lower bound") {
  const BoundReport zero = gain_lower_bound(ModelConfig::from_ratios(0.01, 2.0, 16.0, 0.0, 100), CoefficientSource::automatic);
  CHECK(zero.gain_lower_bound == 1.0);
  CHECK(zero.undetermined_lambda);

  const BoundReport hi = gain_lower_bound(ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e6, 100), CoefficientSource::quadrature);
  // still 6% short at 60 dB; tracks the high-SNR expansion instead
  CHECK(hi.gain_lower_bound == doctest::Approx(theorem2_rate(ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e6, 100)).gain_leading).epsilon(0.01));
  CHECK(gain_lower_bound(ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e8, 100), CoefficientSource::quadrature, false)
            .gain_lower_bound == doctest::Approx(100.0).epsilon(0.05));
  REQUIRE(hi.cp_exact.has_value());
  CHECK(*hi.cp_exact <= hi.cp_upper_prop1 + 1e-8);
  REQUIRE(hi.cp_upper_prop2.has_value());
  CHECK(*hi.cp_exact <= *hi.cp_upper_prop2 + 1e-8);

  for (double q : {1.0, 2.0}) {
    double prev = 1.0;
    for (double db = -20.0; db <= 40.0; db += 2.0) {
      const double g = gain_lower_bound(ModelConfig::from_ratios(0.01, q, 16.0, from_db(db), 100),
                                        CoefficientSource::automatic, false)
                           .gain_lower_bound;
      CHECK(g >= 1.0);
      CHECK(g >= prev * (1.0 - 1e-9));
      prev = g;
    }
  }
  CHECK_THROWS_AS(gain_lower_bound(ModelConfig::from_ratios(0.0, 2.0, 16.0, 1.0, 100), CoefficientSource::automatic), DomainError);
}

TEST_CASE("two-stage error upper bound") {
  const ModelConfig c = ModelConfig::from_ratios(0.05, 2.0, 16.0, 20.0, 1000);
  const double j0 = j0_upper_bound(c, 0.0, CoefficientSource::quadrature);
  const double g = gain_lower_bound(c, CoefficientSource::quadrature, false).gain_lower_bound;
  CHECK(nonadaptive_error(c) / j0 == doctest::Approx(g).epsilon(1e-9));
  CHECK(j0_upper_bound(c, 0.1, CoefficientSource::quadrature) >= j0);
  CHECK(j0 <= nonadaptive_error(c));
  CHECK_THROWS_AS(j0_upper_bound(c, -0.1, CoefficientSource::quadrature), DomainError);
}

TEST_CASE("finite-N probability") {
  // same formula evaluated with mpmath at 50 digits
  const double cp = 0.6103307816072754;
  CHECK(finite_n_probability(10000, 0.1, 0.5, 0.05, cp, 1.0) == doctest::Approx(0.99914001140279006).epsilon(1e-10));
  CHECK(finite_n_probability(1000, 0.1, 2.0 / 3.0, 0.05, 0.66633665169728456, std::nullopt) ==
        doctest::Approx(0.27020393888419462).epsilon(1e-10));

  CHECK(finite_n_probability(100, 0.1, 0.5, 1e300, cp, 1.0) == doctest::Approx(1.0));
  CHECK(finite_n_probability(100, 0.1, 0.5, std::numeric_limits<double>::infinity(), cp, 1.0) == 1.0);
  double prev = 0.0;
  for (std::size_t n : {10u, 100u, 1000u, 100000u, 10000000u}) {
    const double v = finite_n_probability(n, 0.1, 0.5, 0.05, cp, 1.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev == doctest::Approx(1.0));
  CHECK_THROWS_AS(finite_n_probability(100, 0.1, 0.5, 0.05, cp, std::nullopt), UsageError);
  CHECK_THROWS_AS(finite_n_probability(100, 0.1, 0.5, 0.0, cp, 1.0), DomainError);
}

TEST_CASE("high-SNR rate constants") {
  // (q+3)(q+2)^((q+2)/(2(q+3))) / (2 q^(q/(2(q+3)))) and its lambda counterpart, mpmath
  CHECK(theorem2_a1(2.0) == doctest::Approx(3.7892914162759952).epsilon(1e-13));
  CHECK(theorem2_a2(2.0) == doctest::Approx(0.75785828325519904).epsilon(1e-13));
  CHECK(theorem2_a2(2.0) == doctest::Approx(std::pow(2.0, -0.4)).epsilon(1e-13));
  CHECK(theorem2_a1(1.0) == doctest::Approx(3.01960729695421).epsilon(1e-12));
  CHECK(theorem2_a2(1.0) == doctest::Approx(1.509803648477105).epsilon(1e-12));

  const ModelConfig c = ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e3, 100);
  const Theorem2Rate t = theorem2_rate(c);
  CHECK(t.a1 == theorem2_a1(2.0));
  CHECK(t.gain_leading < 100.0);
  CHECK_FALSE(t.clamped);

  const Theorem2Rate far = theorem2_rate(ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e30, 100));
  CHECK(far.gain_leading == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(far.lambda_star < 1e-5);

  bool clamped = false;
  CHECK(theorem2_lambda_star(ModelConfig::from_ratios(0.01, 2.0, 16.0, 1e-6, 100), &clamped) == 1.0);
  CHECK(clamped);
}

TEST_CASE("vanishing-p rates") {
  CHECK(theorem3_c3(2.0) == doctest::Approx(0.19245008972987525).epsilon(1e-13));
  CHECK(theorem3_c3(2.0) == doctest::Approx(4.0 / (4.0 * std::pow(3.0, 1.5))).epsilon(1e-13));
  CHECK(theorem3_gain(ModelConfig::from_ratios(0.001, 2.0, 16.0, 0.1, 100), Theorem3Regime::low_r) ==
        doctest::Approx(1.01).epsilon(1e-14));
  for (double q : {1.0, 2.0, 3.0}) {
    const double a = theorem3_gain(ModelConfig::from_ratios(0.001, q, 16.0, 100.0, 100), Theorem3Regime::high_r);
    const double b = theorem3_gain(ModelConfig::from_ratios(0.001, q, 16.0, 400.0, 100), Theorem3Regime::high_r);
    CHECK(b / a == doctest::Approx(2.0).epsilon(1e-13));
  }
}
