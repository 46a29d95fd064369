#include "adsense/bounds.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cfloat>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "adsense/error.hpp"
#include "adsense/numerics.hpp"

namespace adsense {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(const ChernoffInputs& in) {
  if (!(in.p >= 0.0 && in.p <= 1.0)) throw DomainError("p must be in [0, 1]");
  if (!(in.r >= 0.0)) throw DomainError("r must be non-negative");
  if (!(in.lambda_frac >= 0.0 && in.lambda_frac <= 1.0)) {
    throw DomainError("lambda must be in [0, 1]");
  }
  if (!(in.s >= 0.0) || !std::isfinite(in.s)) throw DomainError("s must be non-negative");
  if (!(in.gamma > 0.0 && in.gamma < 1.0)) throw DomainError("gamma must be in (0, 1)");
  if (!std::isfinite(in.x())) throw DomainError("r * lambda must be finite");
}

void check_open_p(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("p must be in (0, 1); use the closed-form limits at p = 0 or 1");
  }
}

double resolve_gamma_power(double c, double gamma) { return std::exp(-std::log(c) / (1.0 - gamma)); }

CoefficientSource resolve(CoefficientSource source, double q) {
  if (source != CoefficientSource::automatic) return source;
  return q == 2.0 ? CoefficientSource::prop2 : CoefficientSource::prop1;
}

}  // namespace

const char* source_name(CoefficientSource source) {
  switch (source) {
    case CoefficientSource::quadrature:
      return "quadrature";
    case CoefficientSource::prop1:
      return "prop1";
    case CoefficientSource::prop1_weak:
      return "prop1_weak";
    case CoefficientSource::prop2:
      return "prop2";
    case CoefficientSource::automatic:
      return "auto";
  }
  return "unknown";
}

double ChernoffInputs::eta() const { return std::log1p(-p) - std::log(p); }

ChernoffInputs ChernoffInputs::from_config(const ModelConfig& config, double lambda_frac) {
  return ChernoffInputs{config.p, config.r(), lambda_frac, config.s(), config.gamma()};
}

double chernoff_closed_form_c0(const ChernoffInputs& in) {
  check_inputs(in);
  const double x = in.x();
  if (x == 0.0) return 1.0;
  const double g = 1.0 - in.gamma;
  const double log_c0 = 0.5 * (g * std::log1p(x) - std::log1p(g * x)) -
                        in.gamma * g * in.s * x / (2.0 * (1.0 + g * x));
  return std::exp(log_c0);
}

double chernoff_exact(const ChernoffInputs& in, double rel_tol) {
  check_inputs(in);
  if (!(rel_tol > 0.0 && rel_tol <= 1e-3)) throw UsageError("rel_tol must be in (0, 1e-3]");
  const double x = in.x();
  if (in.p == 1.0 || x == 0.0) return 1.0;

  const double p = in.p;
  const double g = in.gamma;
  const double m = std::sqrt(in.s);
  const double v0 = 1.0 / x;
  const double v1 = 1.0 + v0;
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  auto integrand = [&](double y) {
    const double lf0 = num::log_normal_pdf(y, 0.0, v0);
    const double lf1 = num::log_normal_pdf(y, m, v1);
    const double lfp = p == 0.0 ? lf0 : num::log_add_exp(log_p + lf1, log_q + lf0);
    return std::exp(g * lf1 + (1.0 - g) * lfp);
  };

  const double sd0 = std::sqrt(v0);
  const double sd1 = std::sqrt(v1);
  const double lo = std::min(-12.0 * sd0, m - 12.0 * sd1);
  const double hi = std::max(12.0 * sd0, m + 12.0 * sd1);
  std::vector<double> cuts{lo, hi, 0.0, m, -12.0 * sd0, 12.0 * sd0, m - 12.0 * sd1, m + 12.0 * sd1};
  if (p > 0.0) {
    const RegionBoundaries b = region_boundaries(in);
    if (b.real) {
      cuts.push_back(b.y_minus);
      cuts.push_back(b.y_plus);
    }
  }
  std::erase_if(cuts, [&](double c) { return !(c >= lo && c <= hi); });
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double total = 0.0;
  double err_total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    // Each piece is mapped onto [0, 1]; boost's error floor misbehaves on very narrow intervals.
    const double a = cuts[i];
    const double w = cuts[i + 1] - a;
    double err = 0.0;
    total += w * GK::integrate([&](double t) { return integrand(a + w * t); }, 0.0, 1.0, 20, rel_tol * 0.1, &err);
    err_total += w * err;
  }
  if (!std::isfinite(total) || err_total > rel_tol * total) {
    std::ostringstream os;
    os << "Chernoff coefficient quadrature did not reach rel_tol " << rel_tol << " (p=" << p
       << ", r*lambda=" << x << ", s=" << in.s << ", gamma=" << g << ")";
    throw NumericalError(os.str(), total, err_total);
  }
  return total;
}

RegionBoundaries region_boundaries(const ChernoffInputs& in, double eta) {
  check_inputs(in);
  const double x = std::max(in.x(), DBL_MIN);
  const double s = in.s;
  const double g = 1.0 - in.gamma;
  const double L = std::log1p(x);
  const double shift = 2.0 * eta + L;
  const double Q = s + shift;
  RegionBoundaries b;
  if (!(Q >= 0.0)) {
    b.real = false;
    b.y_minus = b.y_plus = kNaN;
    b.z1_minus = b.z1_plus = b.z01_minus = b.z01_plus = b.z0_minus = b.z0_plus = kNaN;
    return b;
  }
  b.real = true;
  const double sq = std::sqrt(Q);
  const double rs = std::sqrt(s);
  const double rx = std::sqrt(x);
  const double wide = std::sqrt((1.0 + x) * Q);
  const double a = std::sqrt(s * (1.0 + x));
  // (1 + x) Q - s, the numerator of y+ once the root difference is rationalized.
  const double lift = x * s + (1.0 + x) * shift;

  b.y_plus = lift / (x * (wide + rs));
  b.y_minus = -(rs + wide) / x;

  b.z1_plus = (s * x - shift) / ((a + sq) * rx);
  b.z1_minus = -(a + sq) / rx;

  b.z0_plus = -lift / ((rs + wide) * rx);
  b.z0_minus = -(rs + wide) / rx;

  const double gx = 1.0 + g * x;
  const double k = std::sqrt(gx / x);
  const double c = a / gx;
  const double q_minus_c2 = shift + s * x * (2.0 * g - 1.0 + g * g * x) / (gx * gx);
  b.z01_plus = sq + c > 0.0 ? k * q_minus_c2 / (sq + c) : 0.0;
  b.z01_minus = -k * (sq + c);
  return b;
}

RegionBoundaries region_boundaries(const ChernoffInputs& in) {
  check_open_p(in.p);
  return region_boundaries(in, in.eta());
}

RegionProbabilities region_probabilities(const RegionBoundaries& b) {
  if (!b.real) return RegionProbabilities{1.0, 0.0, 1.0};
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  RegionProbabilities pr;
  pr.p1 = unit(num::normal_cdf(b.z1_plus) + num::normal_cdf(b.z1_minus));
  pr.p01 = unit(num::normal_interval(b.z01_minus, b.z01_plus));
  pr.p0 = unit(num::normal_cdf(b.z0_plus) + num::normal_cdf(b.z0_minus));
  return pr;
}

Prop1Bound prop1_upper(const ChernoffInputs& in) {
  check_inputs(in);
  check_open_p(in.p);
  const double p = in.p;
  const double g = in.gamma;
  const double c0 = chernoff_closed_form_c0(in);
  const RegionProbabilities pr = region_probabilities(region_boundaries(in));
  const double pw = std::pow(p, 1.0 - g);
  const double qw = std::pow(1.0 - p, 1.0 - g);
  const double odds = std::pow((1.0 - p) / p, g);
  Prop1Bound out;
  out.strong_raw = pw * (1.0 - g + g * pr.p1) + qw * (pr.p01 * c0 + (1.0 - g) * odds * pr.p0);
  out.weak_raw = pw + qw * c0;
  out.strong = std::min(out.strong_raw, 1.0);
  out.weak = std::min(out.weak_raw, 1.0);
  return out;
}

Prop2Bound prop2_upper(const ChernoffInputs& in) {
  check_inputs(in);
  if (in.gamma != 0.5) throw UsageError("the Bhattacharyya bound needs gamma = 1/2 (q = 2)");
  check_open_p(in.p);
  const double p = in.p;
  const double c0 = chernoff_closed_form_c0(in);
  const RegionProbabilities pr = region_probabilities(region_boundaries(in, 0.0));
  const double d = std::sqrt(p) + std::sqrt(1.0 - p);
  const double cross = std::sqrt(p * (1.0 - p)) / d;
  Prop2Bound out;
  out.raw = p / d + cross * pr.p1 + c0 * ((1.0 - p) / d + cross * pr.p01);
  out.value = std::min(out.raw, 1.0);
  return out;
}

std::function<double(double)> coefficient_function(const ModelConfig& config,
                                                   CoefficientSource source) {
  const CoefficientSource src = resolve(source, config.q);
  const ChernoffInputs base = ChernoffInputs::from_config(config, 0.0);
  if (src == CoefficientSource::prop2 && base.gamma != 0.5) {
    throw UsageError("coefficient source prop2 needs q = 2");
  }
  return [base, src](double lambda) {
    ChernoffInputs in = base;
    in.lambda_frac = lambda;
    switch (src) {
      case CoefficientSource::quadrature:
        return chernoff_exact(in);
      case CoefficientSource::prop1:
        return prop1_upper(in).strong;
      case CoefficientSource::prop1_weak:
        return prop1_upper(in).weak;
      default:
        return prop2_upper(in).value;
    }
  };
}

BoundMaximum maximize_bound_objective(const std::function<double(double)>& coefficient,
                                      double gamma, double shrink) {
  auto objective = [&](double lambda) {
    return (shrink * resolve_gamma_power(coefficient(lambda), gamma) - 1.0) * (1.0 - lambda);
  };
  const num::ScalarOptimum best = num::scan_then_refine_max(objective, 33, 1e-6);
  if (!(best.value > 0.0)) return BoundMaximum{0.0, 0.0, true};
  return BoundMaximum{best.x, best.value, false};
}

BoundReport gain_lower_bound(const ModelConfig& config, CoefficientSource source,
                             bool include_exact) {
  config.validate();
  check_open_p(config.p);
  BoundReport rep;
  rep.p = config.p;
  rep.q = config.q;
  rep.s = config.s();
  rep.r = config.r();
  rep.source = resolve(source, config.q);
  const double gamma = config.gamma();

  if (rep.r > 0.0) {
    const BoundMaximum best = maximize_bound_objective(coefficient_function(config, rep.source), gamma);
    rep.maximizing_lambda = best.lambda;
    rep.undetermined_lambda = best.undetermined;
    rep.gain_lower_bound = std::pow(1.0 + rep.r / (rep.r + 1.0) * best.value, 0.5 * config.q);
  } else {
    rep.undetermined_lambda = true;
  }

  const ChernoffInputs at = ChernoffInputs::from_config(config, rep.maximizing_lambda);
  rep.c0 = chernoff_closed_form_c0(at);
  if (include_exact || rep.source == CoefficientSource::quadrature) rep.cp_exact = chernoff_exact(at);
  const Prop1Bound p1 = prop1_upper(at);
  rep.cp_upper_prop1 = p1.strong;
  rep.cp_upper_prop1_weak = p1.weak;
  if (gamma == 0.5) rep.cp_upper_prop2 = prop2_upper(at).value;
  rep.boundaries = region_boundaries(at);
  rep.region_probs = region_probabilities(rep.boundaries);
  return rep;
}

double j0_upper_bound(const ModelConfig& config, double epsilon, CoefficientSource source) {
  config.validate();
  check_open_p(config.p);
  if (!(epsilon >= 0.0)) throw DomainError("epsilon must be non-negative");
  const double r = config.r();
  double best = 0.0;
  if (r > 0.0) {
    best = maximize_bound_objective(coefficient_function(config, source), config.gamma(),
                                    1.0 / (1.0 + epsilon))
               .value;
  }
  const double scale = config.m_q() * std::pow(config.sigma(), config.q) *
                       static_cast<double>(config.n_dim) * config.p;
  return scale / std::pow(1.0 + r + r * best, 0.5 * config.q);
}

double finite_n_probability(std::size_t n, double p, double gamma, double epsilon,
                            double cp_gamma, std::optional<double> cp_2gamma) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("p must be in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must be in (0, 1)");
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(cp_gamma > 0.0 && cp_gamma <= 1.0 + 1e-12)) throw DomainError("cp_gamma must be in (0, 1]");
  if (std::isinf(epsilon)) return 1.0;
  const double c = cp_gamma;
  const double pg = std::pow(p, gamma);
  double var_term;
  if (gamma <= 0.5) {
    if (!cp_2gamma) throw UsageError("cp_2gamma is required when gamma <= 1/2");
    var_term = pg * (*cp_2gamma - c * c);
  } else {
    var_term = std::pow(p, 1.0 - gamma) - pg * c * c;
  }
  const double denom = 2.0 * (var_term + epsilon * c / 3.0);
  if (!(denom > 0.0)) return 1.0;
  const double exponent = c * c * static_cast<double>(n) * pg * epsilon * epsilon / denom;
  return std::clamp(-std::expm1(-exponent), 0.0, 1.0);
}

double theorem2_a1(double q) {
  return (q + 3.0) * std::pow(q + 2.0, (q + 2.0) / (2.0 * (q + 3.0))) /
         (2.0 * std::pow(q, q / (2.0 * (q + 3.0))));
}

double theorem2_a2(double q) {
  return std::pow(q + 2.0, (q + 2.0) / (2.0 * (q + 3.0))) /
         std::pow(q, 3.0 * (q + 2.0) / (2.0 * (q + 3.0)));
}

double theorem2_lambda_star(const ModelConfig& config, bool* clamped) {
  config.validate();
  check_open_p(config.p);
  const double q = config.q;
  const double e = 1.0 / (q + 3.0);
  const double raw = theorem2_a2(q) * std::pow(config.p, -q * e) * std::pow(1.0 - config.p, -2.0 * e) *
                     std::exp(-config.s() * e) * std::pow(config.r(), -e);
  const double lam = std::clamp(raw, 0.0, 1.0);
  if (clamped) *clamped = !(raw <= 1.0);
  return lam;
}

Theorem2Rate theorem2_rate(const ModelConfig& config) {
  Theorem2Rate t;
  t.a1 = theorem2_a1(config.q);
  t.a2 = theorem2_a2(config.q);
  t.lambda_star = theorem2_lambda_star(config, &t.clamped);
  const double q = config.q;
  const double e = 1.0 / (q + 3.0);
  const double correction = t.a1 * std::pow(1.0 - config.p, (q + 1.0) * e) * std::pow(config.p, -q * e) *
                            std::exp(-config.s() * e) * std::pow(config.r(), -e);
  t.gain_leading = std::pow(1.0 / config.p, 0.5 * q) * (1.0 - correction);
  return t;
}

double theorem3_c3(double q) {
  return std::pow(q, (3.0 * q + 2.0) / 4.0) /
         (std::pow(q + 2.0, (q + 2.0) / 4.0) * std::pow(q + 1.0, (q + 1.0) / 2.0));
}

double theorem3_gain(const ModelConfig& config, Theorem3Regime regime) {
  config.validate();
  const double r = config.r();
  if (regime == Theorem3Regime::low_r) {
    return 1.0 + (1.0 - config.gamma()) * config.s() * r * r / 8.0;
  }
  return theorem3_c3(config.q) * std::exp(config.s() / 2.0) * std::sqrt(r);
}

}  // namespace adsense
