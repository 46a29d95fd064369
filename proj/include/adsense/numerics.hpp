#pragma once

#include <cmath>
#include <functional>
#include <numbers>

namespace adsense::num {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

/// log of the N(mean, var) density at y.
inline double log_normal_pdf(double y, double mean, double var) {
  const double d = y - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

/// Standard normal CDF through erfc, accurate in both tails.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// P(a < Z < b) for standard normal Z without cancellation when both ends sit
/// in the same tail.
double normal_interval(double a, double b);

/// log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

struct ScalarOptimum {
  double x;
  double value;
};

/// Golden-section search for the maximum of a unimodal function on [lo, hi],
/// stopping once the bracket is narrower than `tol`.
ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double tol);

/// Coarse uniform scan on [0, 1] followed by golden-section refinement around
/// the best scan point. Ties in the scan keep the smallest abscissa.
ScalarOptimum scan_then_refine_max(const std::function<double(double)>& f, int scan_points,
                                   double tol);

}  // namespace adsense::num
