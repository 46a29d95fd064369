#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adsense/bounds.hpp"
#include "adsense/model.hpp"

namespace adsense {

enum class Policy {
  optimal_two_stage,
  subopt_first_stage,
  subopt_second_stage,
  large_r_approx,
  nonadaptive,
  oracle,
};

std::string_view policy_name(Policy policy);
std::optional<Policy> parse_policy(std::string_view name);
std::vector<Policy> all_policies();

struct TrialOutcome {
  /// sum over the support of |mu_i(2) - x_i|^q.
  double error = 0.0;
  /// m_q sum over the support of sigma_i^q(2).
  double analytic_risk = 0.0;
  std::size_t support_size = 0;
  double lambda_used = 0.0;
  std::uint64_t seed = 0;
};

/// Stage-by-stage record kept by run_trial when asked.
struct TrialTrace {
  SignalRealization signal;
  std::vector<BeliefState> states;
  std::vector<std::vector<double>> allocations;
};

/// One seeded two-stage trial. The signal and the noise of each stage come
/// from fixed sub-streams of `seed`, so every policy run with the same seed
/// sees the same draws.
TrialOutcome run_trial(const ModelConfig& config, Policy policy, double lambda_frac,
                       std::uint64_t seed, TrialTrace* trace = nullptr);

struct ExperimentSpec {
  ModelConfig config;
  std::vector<double> r_grid;
  std::vector<Policy> policies;
  std::size_t trials = 2000;
  std::uint64_t base_seed = 1;
  std::size_t mc_samples_first_stage = 2000;
  unsigned workers = 1;
  CoefficientSource bound_source = CoefficientSource::automatic;

  void validate() const;
};

struct SummaryRow {
  Policy policy = Policy::optimal_two_stage;
  double p = 0.0;
  double q = 0.0;
  double s = 0.0;
  double r = 0.0;
  double r_db = 0.0;
  double lambda = 0.0;
  bool lambda_undetermined = false;
  double mean_error = 0.0;
  double std_error = 0.0;
  double mean_analytic = 0.0;
  double analytic_std_error = 0.0;
  double gain_db = 0.0;
  /// Standard error of gain_db by the delta method.
  double gain_db_se = 0.0;
  double bound_gain_db = 0.0;
  double nonadaptive_analytic = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

struct ExperimentSummary {
  std::vector<SummaryRow> rows;
  double wall_time = 0.0;

  const SummaryRow* find(Policy policy, double r_db) const;
};

/// First-stage fractions already chosen for some (policy, r index) pairs.
/// estimate_gain fills in anything missing.
using LambdaHint = std::function<std::optional<double>(Policy policy, std::size_t r_index)>;

/// Called after each finished row.
using RowSink = std::function<void(const SummaryRow&)>;

ExperimentSummary estimate_gain(const ExperimentSpec& spec, const RowSink& sink = {},
                                const LambdaHint& hint = {});

/// Seed used by the exact first-stage search at a given r index.
std::uint64_t first_stage_seed(std::uint64_t base_seed, std::size_t r_index);
/// Seed of trial `trial` at r index `r_index`; shared by all policies.
std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t r_index, std::size_t trial);

struct TailCheckResult {
  double empirical_freq = 0.0;
  double bound_freq = 0.0;
  double cp_gamma = 0.0;
  std::optional<double> cp_2gamma;
  double threshold = 0.0;
  std::size_t exceedances = 0;
  std::size_t trials = 0;
};

/// Frequency with which (1/N) sum_i p_i(1)^gamma exceeds (1 + eps) p^gamma C_p^gamma
/// next to the Bernstein bound on that frequency.
TailCheckResult tail_check_lemma1(const ModelConfig& config, double lambda_frac, double epsilon,
                                  std::size_t trials, std::uint64_t seed, unsigned workers = 1);

struct LambdaRow {
  double p = 0.0;
  double q = 0.0;
  double s = 0.0;
  double r_db = 0.0;
  double lambda_exact = 0.0;
  bool exact_undetermined = false;
  double exact_objective = 0.0;
  double lambda_bound = 0.0;
  bool bound_undetermined = false;
  double lambda_asymptotic = 0.0;
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
};

/// Exact, bound-based and large-r first-stage fractions over spec.r_grid.
std::vector<LambdaRow> lambda_sweep(const ExperimentSpec& spec,
                                    const std::function<void(const LambdaRow&)>& sink = {});

double to_db(double ratio);
double from_db(double db);
/// r values from min to max dB inclusive in `step` increments.
std::vector<double> db_grid(double min_db, double max_db, double step_db);

/// CSV layouts.
std::string gain_csv_header();
std::string gain_csv_row(const SummaryRow& row);
std::string lambda_csv_header();
std::string lambda_csv_row(const LambdaRow& row);

/// Sweeps every (p, q) pair over spec.r_grid, streaming rows to
/// out_dir/gain.csv and writing out_dir/manifest.json.
struct SweepPlan {
  ExperimentSpec spec;
  std::vector<double> p_values;
  std::vector<double> q_values;
};

std::vector<ExperimentSummary> sweep(const SweepPlan& plan, const std::filesystem::path& out_dir);

}  // namespace adsense
