#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adsense {

struct Allocation;

/// Prior and budget parameters of the Bernoulli-Gaussian sensing model.
///
/// `nu2` is the noise variance after rescaling the total budget to N, so the
/// effective SNR-budget ratio is r = sigma2 / nu2. `nu2 = +inf` is accepted as
/// the r = 0 limit for the closed-form error expressions; simulation paths
/// reject it.
struct ModelConfig {
  double p = 0.01;
  double mu = 4.0;
  double sigma2 = 1.0;
  double nu2 = 1.0;
  std::size_t n_dim = 10000;
  double q = 2.0;

  double r() const { return sigma2 / nu2; }
  double s() const { return mu * mu / sigma2; }
  double gamma() const { return 2.0 / (q + 2.0); }
  double m_q() const;
  double sigma() const;

  /// Throws DomainError naming the offending field.
  void validate() const;

  /// Builds a config from the dimensionless ratios used throughout the
  /// analysis: sigma is fixed, mu = sqrt(s) * sigma and nu2 = sigma2 / r.
  static ModelConfig from_ratios(double p, double q, double s, double r, std::size_t n_dim,
                                 double sigma = 1.0);
};

struct SignalRealization {
  std::vector<std::uint8_t> support;
  std::vector<double> amplitudes;

  std::size_t size() const { return amplitudes.size(); }
  std::size_t support_size() const;
};

/// Per-component posterior (p_i, mu_i, sigma_i^2) plus the remaining budget.
struct BeliefState {
  std::vector<double> probs;
  std::vector<double> means;
  std::vector<double> variances;
  double budget_remaining = 0.0;

  std::size_t size() const { return probs.size(); }

  /// Uniform prior state with budget N.
  static BeliefState prior(const ModelConfig& config);
};

struct Observation {
  std::vector<double> values;
  std::vector<std::uint8_t> observed;

  std::size_t size() const { return values.size(); }
};

/// Log densities of one observation under signal-absent (f0), signal-present
/// (f1) and the prior mixture (fp).
struct LikelihoodTriple {
  double log_f0;
  double log_f1;
  double log_fp;

  double f0() const;
  double f1() const;
  double fp() const;
};

/// E|z|^q for z ~ N(0, 1).
double gaussian_moment(double q);

SignalRealization sample_signal(const ModelConfig& config, std::uint64_t seed);

/// y_i = x_i + n_i / sqrt(lambda_i) with n_i ~ N(0, nu2); components with zero
/// effort are masked. One standard normal is consumed per component whether
/// or not it is observed, so allocations never shift the noise stream.
Observation observe(const SignalRealization& signal, const Allocation& alloc, double nu2,
                    std::uint64_t seed);

/// Same as observe() with caller-supplied standard normals.
Observation observe_with(const SignalRealization& signal, std::span<const double> efforts,
                         double nu2, std::span<const double> std_normals);

LikelihoodTriple likelihood_triple(double prob, double mean, double var, double lambda,
                                   double nu2, double y);

/// One step of the Bayesian recursion. Throws ConstraintError when the
/// allocation overdraws the remaining budget.
BeliefState update_state(const BeliefState& state, const Allocation& alloc,
                         const Observation& obs, double nu2);

}  // namespace adsense
