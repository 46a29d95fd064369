#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "adsense/model.hpp"

namespace adsense {

enum class CoefficientSource;

/// Per-component sensing effort for one stage.
struct Allocation {
  std::vector<double> efforts;
  double stage_budget = 0.0;

  std::size_t size() const { return efforts.size(); }
  double total() const;

  static Allocation uniform(std::size_t n, double per_component);
  static Allocation zeros(std::size_t n);
};

enum class FirstStageMethod { exact_mc, bound_based, asymptotic_fixed_p, asymptotic_vanishing_p };

enum class AsymptoticRegime { fixed_p, vanishing_p_low_r, vanishing_p_high_r };

struct FirstStageChoice {
  double lambda_frac = 0.0;
  FirstStageMethod method = FirstStageMethod::exact_mc;
  double objective_value = 0.0;
  /// Monte Carlo standard error of objective_value; 0 for analytic methods.
  double objective_se = 0.0;
  /// True when the objective could not separate any lambda from lambda = 0.
  bool undetermined = false;
};

/// Optimal second-stage effort for the given posterior state: rank components
/// by p_i^gamma sigma_i^2, fund the top k, and water-fill the budget over them.
/// Ties in the ranking go to the lower index.
Allocation second_stage_optimal(const BeliefState& state, double budget, double q, double nu2);

/// Effort proportional to p_i^gamma.
Allocation second_stage_proportional(const BeliefState& state, double budget, double gamma);

/// m_q nu^q sum_i p_i / (nu^2 / sigma_i^2 + lambda_i)^(q/2).
double stage_cost(const BeliefState& state, const Allocation& alloc, double q, double nu2);

/// Evenly spaced lambda grid on [0, 1].
std::vector<double> default_lambda_grid(int points = 41);

struct ExactSearchOptions {
  std::size_t mc_samples = 2000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  /// Golden-section pass around the grid optimum.
  bool refine = true;
  double refine_tol = 1e-4;
};

/// Expected optimal second-stage cost after a uniform first stage of effort
/// lambda, estimated with common random numbers across lambda.
struct ExactObjective {
  double mean;
  double std_error;
};

ExactObjective first_stage_objective(const ModelConfig& config, double lambda,
                                     const ExactSearchOptions& options);

/// Monte Carlo minimization of the expected two-stage cost over lambda. The
/// estimate does not depend on options.workers.
FirstStageChoice first_stage_exact(const ModelConfig& config, std::span<const double> grid,
                                   const ExactSearchOptions& options);

/// lambda maximizing the asymptotic gain bound with the chosen coefficient.
FirstStageChoice first_stage_bound(const ModelConfig& config, CoefficientSource source);

/// Same with a caller-supplied coefficient C(lambda).
FirstStageChoice first_stage_bound(const ModelConfig& config,
                                   const std::function<double(double)>& coefficient);

FirstStageChoice first_stage_asymptotic(const ModelConfig& config, AsymptoticRegime regime);

/// m_q sigma^q N p / (1 + r)^(q/2).
double nonadaptive_error(const ModelConfig& config);

/// ((1 + r/p) / (1 + r))^(q/2).
double oracle_gain_bound(const ModelConfig& config);

struct OracleOutcome {
  /// m_q sum over the support of sigma_i^q after the oracle stage.
  double posterior_risk;
  /// sum over the support of |mu_i - x_i|^q.
  double realized_error;
};

/// Spreads the whole budget evenly over the true support and observes once.
OracleOutcome oracle_policy_error(const ModelConfig& config, const SignalRealization& signal,
                                  std::uint64_t seed);

}  // namespace adsense
