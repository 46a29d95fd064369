#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "adsense/model.hpp"

namespace adsense {

/// Where the Chernoff coefficient inside the gain bound comes from.
/// `automatic` picks prop2 for q = 2 and prop1 (strong form) otherwise.
enum class CoefficientSource { quadrature, prop1, prop1_weak, prop2, automatic };

const char* source_name(CoefficientSource source);

/// Dimensionless inputs of C_p^gamma. Densities are normalized so that
/// sigma = 1: f0 = N(0, 1/x) and f1 = N(sqrt(s), 1 + 1/x) with x = r * lambda.
struct ChernoffInputs {
  double p = 0.01;
  double r = 1.0;
  double lambda_frac = 1.0;
  double s = 16.0;
  double gamma = 0.5;

  double x() const { return r * lambda_frac; }
  /// log((1 - p) / p).
  double eta() const;

  static ChernoffInputs from_config(const ModelConfig& config, double lambda_frac);
};

/// Closed-form C_0^gamma, evaluated in log space.
double chernoff_closed_form_c0(const ChernoffInputs& in);

/// C_p^gamma = integral of f1^gamma fp^(1 - gamma) by adaptive Gauss-Kronrod
/// quadrature. Throws NumericalError if rel_tol is not reached.
double chernoff_exact(const ChernoffInputs& in, double rel_tol = 1e-10);

/// Roots of p f1 = (1 - p) f0 and the standardized region edges. When the
/// quadratic has no real root, `real` is false, the z values are left NaN and
/// the signal region covers the whole line.
struct RegionBoundaries {
  bool real = false;
  double y_minus = 0.0;
  double y_plus = 0.0;
  double z1_minus = 0.0;
  double z1_plus = 0.0;
  double z01_minus = 0.0;
  double z01_plus = 0.0;
  double z0_minus = 0.0;
  double z0_plus = 0.0;
};

/// P1(Y1): mass of f1 on the signal region. P01(Y0): mass of the normalized
/// f1^gamma f0^(1-gamma) on the null region. P0(Y1): mass of f0 on the signal
/// region.
struct RegionProbabilities {
  double p1 = 1.0;
  double p01 = 0.0;
  double p0 = 1.0;
};

/// Uses `eta` in place of log((1 - p)/p); rlambda = 0 is taken as the limit.
RegionBoundaries region_boundaries(const ChernoffInputs& in, double eta);
RegionBoundaries region_boundaries(const ChernoffInputs& in);
RegionProbabilities region_probabilities(const RegionBoundaries& b);

struct Prop1Bound {
  double strong;
  double weak;
  double strong_raw;
  double weak_raw;
};

/// Upper bounds on C_p^gamma through C_0^gamma. Requires 0 < p < 1.
Prop1Bound prop1_upper(const ChernoffInputs& in);

struct Prop2Bound {
  double value;
  double raw;
};

/// Bhattacharyya-specific bound; gamma must be 1/2.
Prop2Bound prop2_upper(const ChernoffInputs& in);

/// C_p^gamma (or its bound) as a function of lambda for a fixed config.
std::function<double(double)> coefficient_function(const ModelConfig& config,
                                                   CoefficientSource source);

struct BoundReport {
  double p = 0.0;
  double q = 0.0;
  double s = 0.0;
  double r = 0.0;
  CoefficientSource source = CoefficientSource::automatic;
  double maximizing_lambda = 0.0;
  bool undetermined_lambda = false;
  double gain_lower_bound = 1.0;
  /// Everything below is evaluated at maximizing_lambda.
  double c0 = 1.0;
  std::optional<double> cp_exact;
  double cp_upper_prop1 = 1.0;
  double cp_upper_prop1_weak = 1.0;
  std::optional<double> cp_upper_prop2;
  RegionBoundaries boundaries;
  RegionProbabilities region_probs;
};

/// Maximizer of (C(lambda)^(-1/(1-gamma)) - 1)(1 - lambda) over [0, 1] by a
/// 33-point scan and golden-section refinement to 1e-6. When the objective is
/// zero everywhere the maximizer is reported as undetermined with lambda = 0.
struct BoundMaximum {
  double lambda;
  double value;
  bool undetermined;
};

BoundMaximum maximize_bound_objective(const std::function<double(double)>& coefficient,
                                      double gamma, double shrink = 1.0);

/// Asymptotic large-N lower bound on the optimal two-stage gain. With
/// include_exact, cp_exact is filled by quadrature even for other sources.
BoundReport gain_lower_bound(const ModelConfig& config, CoefficientSource source,
                             bool include_exact = true);

/// Upper bound on the optimal two-stage error; epsilon = 0 gives the N -> inf form.
double j0_upper_bound(const ModelConfig& config, double epsilon, CoefficientSource source);

/// Probability with which the finite-N bound holds. cp_2gamma is required for
/// gamma <= 1/2.
double finite_n_probability(std::size_t n, double p, double gamma, double epsilon,
                            double cp_gamma, std::optional<double> cp_2gamma);

struct Theorem2Rate {
  double gain_leading;
  double lambda_star;
  double a1;
  double a2;
  /// lambda_star hit the [0, 1] clamp.
  bool clamped;
};

double theorem2_a1(double q);
double theorem2_a2(double q);
/// Large-r first-stage fraction, clamped to [0, 1].
double theorem2_lambda_star(const ModelConfig& config, bool* clamped = nullptr);
Theorem2Rate theorem2_rate(const ModelConfig& config);

enum class Theorem3Regime { low_r, high_r };

double theorem3_c3(double q);
double theorem3_gain(const ModelConfig& config, Theorem3Regime regime);

}  // namespace adsense
