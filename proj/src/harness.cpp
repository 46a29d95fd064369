#include "adsense/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include "adsense/allocation.hpp"
#include "adsense/error.hpp"
#include "adsense/manifest.hpp"
#include "adsense/rng.hpp"
#include "adsense/simd/kernels.hpp"

namespace adsense {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs fn(i) for i in [0, count) on contiguous blocks, one per worker.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (w == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = count * t / w; i < count * (t + 1) / w; ++i) fn(i);
    });
  }
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

ModelConfig at_r(const ModelConfig& base, double r) {
  ModelConfig c = base;
  c.nu2 = base.sigma2 / r;
  return c;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double support_risk(const BeliefState& state, const SignalRealization& signal, double q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (signal.support[i]) acc += std::pow(state.variances[i], 0.5 * q);
  }
  return gaussian_moment(q) * acc;
}

}  // namespace

std::string_view policy_name(Policy policy) {
  switch (policy) {
    case Policy::optimal_two_stage:
      return "optimal_two_stage";
    case Policy::subopt_first_stage:
      return "subopt_first_stage";
    case Policy::subopt_second_stage:
      return "subopt_second_stage";
    case Policy::large_r_approx:
      return "large_r_approx";
    case Policy::nonadaptive:
      return "nonadaptive";
    case Policy::oracle:
      return "oracle";
  }
  return "unknown";
}

std::optional<Policy> parse_policy(std::string_view name) {
  for (Policy p : all_policies()) {
    if (policy_name(p) == name) return p;
  }
  return std::nullopt;
}

std::vector<Policy> all_policies() {
  return {Policy::optimal_two_stage, Policy::subopt_first_stage, Policy::subopt_second_stage,
          Policy::large_r_approx,    Policy::nonadaptive,        Policy::oracle};
}

double to_db(double ratio) { return 10.0 * std::log10(ratio); }
double from_db(double db) { return std::pow(10.0, db / 10.0); }

std::vector<double> db_grid(double min_db, double max_db, double step_db) {
  if (!(step_db > 0.0)) throw DomainError("r_db_step must be positive");
  if (!(max_db >= min_db)) throw DomainError("r_db_max must be >= r_db_min");
  std::vector<double> out;
  const auto steps = static_cast<std::size_t>(std::floor((max_db - min_db) / step_db + 1e-9));
  for (std::size_t i = 0; i <= steps; ++i) out.push_back(from_db(min_db + static_cast<double>(i) * step_db));
  return out;
}

std::uint64_t first_stage_seed(std::uint64_t base_seed, std::size_t r_index) {
  return derive_seed(base_seed, {0xF157ULL, r_index, 0});
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t r_index, std::size_t trial) {
  return derive_seed(base_seed, {r_index, trial});
}

TrialOutcome run_trial(const ModelConfig& config, Policy policy, double lambda_frac,
                       std::uint64_t seed, TrialTrace* trace) {
  config.validate();
  if (!std::isfinite(config.nu2)) throw DomainError("nu2 must be finite for simulation (r > 0)");
  if (!(lambda_frac >= 0.0 && lambda_frac <= 1.0)) throw DomainError("lambda must be in [0, 1]");
  const std::size_t n = config.n_dim;
  const double nu2 = config.nu2;
  const SignalRealization signal = sample_signal(config, derive_seed(seed, {kSignalStream}));

  TrialOutcome out;
  out.seed = seed;
  out.support_size = signal.support_size();

  if (policy == Policy::oracle) {
    const OracleOutcome o = oracle_policy_error(config, signal, derive_seed(seed, {kStage2NoiseStream}));
    out.error = o.realized_error;
    out.analytic_risk = o.posterior_risk;
    if (trace) trace->signal = signal;
    return out;
  }

  const double lam = policy == Policy::nonadaptive ? 0.0 : lambda_frac;
  out.lambda_used = lam;
  BeliefState state = BeliefState::prior(config);
  if (trace) {
    trace->signal = signal;
    trace->states.push_back(state);
  }

  Allocation first = lam > 0.0 ? Allocation::uniform(n, lam) : Allocation::zeros(n);
  if (lam > 0.0) {
    const Observation y1 = observe(signal, first, nu2, derive_seed(seed, {kStage1NoiseStream}));
    state = update_state(state, first, y1, nu2);
  } else {
    state.budget_remaining = static_cast<double>(n);
  }
  if (trace) {
    trace->allocations.push_back(first.efforts);
    trace->states.push_back(state);
  }

  const double budget = static_cast<double>(n) * (1.0 - lam);
  Allocation second;
  switch (policy) {
    case Policy::nonadaptive:
      second = Allocation::uniform(n, budget / static_cast<double>(n));
      break;
    case Policy::subopt_second_stage:
      try {
        second = second_stage_proportional(state, budget, config.gamma());
      } catch (const DegenerateStateError&) {
        // no component can carry signal; spend the rest evenly
        second = Allocation::uniform(n, budget / static_cast<double>(n));
      }
      break;
    default:
      second = second_stage_optimal(state, budget, config.q, nu2);
      break;
  }
  const Observation y2 = observe(signal, second, nu2, derive_seed(seed, {kStage2NoiseStream}));
  state = update_state(state, second, y2, nu2);
  if (trace) {
    trace->allocations.push_back(second.efforts);
    trace->states.push_back(state);
  }

  out.error = simd::kernels().abs_power_error_sum(state.means, signal.amplitudes, signal.support, config.q);
  out.analytic_risk = support_risk(state, signal, config.q);
  return out;
}

void ExperimentSpec::validate() const {
  config.validate();
  if (trials < 1) throw DomainError("trials must be >= 1");
  if (r_grid.empty()) throw DomainError("r grid is empty");
  for (double r : r_grid) {
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("r grid values must be positive and finite");
  }
  if (policies.empty()) throw DomainError("no policies requested");
  if (mc_samples_first_stage < 1) throw DomainError("mc_samples must be >= 1");
  if (!(config.p > 0.0 && config.p < 1.0)) throw DomainError("p must be in (0, 1) for gain estimation");
}

const SummaryRow* ExperimentSummary::find(Policy policy, double r_db) const {
  for (const SummaryRow& row : rows) {
    if (row.policy == policy && std::abs(row.r_db - r_db) < 1e-9) return &row;
  }
  return nullptr;
}

ExperimentSummary estimate_gain(const ExperimentSpec& spec, const RowSink& sink, const LambdaHint& hint) {
  spec.validate();
  const auto t_all = Clock::now();
  ExperimentSummary summary;

  for (std::size_t ri = 0; ri < spec.r_grid.size(); ++ri) {
    const double r = spec.r_grid[ri];
    const ModelConfig cfg = at_r(spec.config, r);
    const double j_na = nonadaptive_error(cfg);
    const double bound_db = to_db(gain_lower_bound(cfg, spec.bound_source, false).gain_lower_bound);

    std::optional<FirstStageChoice> exact;
    auto exact_lambda = [&]() {
      if (!exact) {
        ExactSearchOptions opt;
        opt.mc_samples = spec.mc_samples_first_stage;
        opt.seed = first_stage_seed(spec.base_seed, ri);
        opt.workers = spec.workers;
        const std::vector<double> grid = default_lambda_grid();
        exact = first_stage_exact(cfg, grid, opt);
      }
      return *exact;
    };

    for (Policy policy : spec.policies) {
      const auto t0 = Clock::now();
      double lam = 0.0;
      bool undetermined = false;
      std::optional<double> hinted = hint ? hint(policy, ri) : std::nullopt;
      if (hinted) {
        lam = *hinted;
      } else {
        switch (policy) {
          case Policy::optimal_two_stage:
          case Policy::subopt_second_stage: {
            const FirstStageChoice c = exact_lambda();
            lam = c.lambda_frac;
            undetermined = c.undetermined;
            break;
          }
          case Policy::subopt_first_stage: {
            const FirstStageChoice c = first_stage_bound(cfg, spec.bound_source);
            lam = c.lambda_frac;
            undetermined = c.undetermined;
            break;
          }
          case Policy::large_r_approx:
            lam = theorem2_lambda_star(cfg);
            break;
          case Policy::nonadaptive:
          case Policy::oracle:
            break;
        }
      }

      std::vector<double> err(spec.trials), risk(spec.trials);
      parallel_for(spec.trials, spec.workers, [&](std::size_t t) {
        const TrialOutcome o = run_trial(cfg, policy, lam, trial_seed(spec.base_seed, ri, t));
        err[t] = o.error;
        risk[t] = o.analytic_risk;
      });
      const MeanSe e = mean_se(err);
      const MeanSe a = mean_se(risk);

      SummaryRow row;
      row.policy = policy;
      row.p = cfg.p;
      row.q = cfg.q;
      row.s = cfg.s();
      row.r = r;
      row.r_db = to_db(r);
      row.lambda = lam;
      row.lambda_undetermined = undetermined;
      row.mean_error = e.mean;
      row.std_error = e.se;
      row.mean_analytic = a.mean;
      row.analytic_std_error = a.se;
      row.gain_db = to_db(j_na / e.mean);
      row.gain_db_se = 10.0 / std::log(10.0) * e.se / e.mean;
      row.bound_gain_db = bound_db;
      row.nonadaptive_analytic = j_na;
      row.trials = spec.trials;
      row.seed = spec.base_seed;
      row.wall_time = seconds_since(t0);
      summary.rows.push_back(row);
      if (sink) sink(row);
    }
  }
  summary.wall_time = seconds_since(t_all);
  return summary;
}

TailCheckResult tail_check_lemma1(const ModelConfig& config, double lambda_frac, double epsilon,
                                  std::size_t trials, std::uint64_t seed, unsigned workers) {
  config.validate();
  if (!std::isfinite(config.nu2)) throw DomainError("nu2 must be finite for simulation (r > 0)");
  if (trials < 100) throw DomainError("tail check needs at least 100 trials");
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(lambda_frac > 0.0 && lambda_frac <= 1.0)) throw DomainError("lambda must be in (0, 1]");
  if (!(config.p > 0.0)) throw DomainError("p must be positive for the tail check");

  const double gamma = config.gamma();
  TailCheckResult res;
  res.trials = trials;
  ChernoffInputs in = ChernoffInputs::from_config(config, lambda_frac);
  res.cp_gamma = chernoff_exact(in);
  if (gamma <= 0.5) {
    ChernoffInputs in2 = in;
    in2.gamma = 2.0 * gamma;
    res.cp_2gamma = in2.gamma < 1.0 ? chernoff_exact(in2) : 1.0;
  }
  const double pg = std::pow(config.p, gamma);
  res.threshold = (1.0 + epsilon) * pg * res.cp_gamma;
  res.bound_freq = 1.0 - finite_n_probability(config.n_dim, config.p, gamma, epsilon, res.cp_gamma, res.cp_2gamma);

  const std::size_t n = config.n_dim;
  std::vector<std::uint8_t> exceeded(trials, 0);
  parallel_for(trials, workers, [&](std::size_t t) {
    const std::uint64_t ts = derive_seed(seed, {t});
    const SignalRealization sig = sample_signal(config, derive_seed(ts, {kSignalStream}));
    std::vector<double> z(n), y(n), probs(n), w(n);
    Engine noise = make_engine(derive_seed(ts, {kStage1NoiseStream}));
    fill_standard_normal(noise, z.data(), n);
    const double sd = std::sqrt(config.nu2 / lambda_frac);
    for (std::size_t i = 0; i < n; ++i) y[i] = sig.amplitudes[i] + sd * z[i];
    const auto& k = simd::kernels();
    if (config.p == 1.0) {
      std::fill(probs.begin(), probs.end(), 1.0);
    } else {
      k.uniform_posterior(y, simd::UniformPrior{config.p, config.mu, config.sigma2, lambda_frac, config.nu2}, probs);
    }
    k.power(probs, gamma, w);
    const double stat = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
    exceeded[t] = stat > res.threshold ? 1 : 0;
  });
  res.exceedances = static_cast<std::size_t>(std::count(exceeded.begin(), exceeded.end(), 1));
  res.empirical_freq = static_cast<double>(res.exceedances) / static_cast<double>(trials);
  return res;
}

std::vector<LambdaRow> lambda_sweep(const ExperimentSpec& spec, const std::function<void(const LambdaRow&)>& sink) {
  spec.validate();
  std::vector<LambdaRow> rows;
  for (std::size_t ri = 0; ri < spec.r_grid.size(); ++ri) {
    const ModelConfig cfg = at_r(spec.config, spec.r_grid[ri]);
    ExactSearchOptions opt;
    opt.mc_samples = spec.mc_samples_first_stage;
    opt.seed = first_stage_seed(spec.base_seed, ri);
    opt.workers = spec.workers;
    const std::vector<double> grid = default_lambda_grid();
    const FirstStageChoice ex = first_stage_exact(cfg, grid, opt);
    const FirstStageChoice bd = first_stage_bound(cfg, spec.bound_source);
    LambdaRow row;
    row.p = cfg.p;
    row.q = cfg.q;
    row.s = cfg.s();
    row.r_db = to_db(spec.r_grid[ri]);
    row.lambda_exact = ex.lambda_frac;
    row.exact_undetermined = ex.undetermined;
    row.exact_objective = ex.objective_value;
    row.lambda_bound = bd.lambda_frac;
    row.bound_undetermined = bd.undetermined;
    row.lambda_asymptotic = theorem2_lambda_star(cfg);
    row.mc_samples = spec.mc_samples_first_stage;
    row.seed = spec.base_seed;
    rows.push_back(row);
    if (sink) sink(row);
  }
  return rows;
}

std::string gain_csv_header() {
  return "policy,p,q,s,r_db,lambda,mean_error,std_error,gain_db,bound_gain_db,trials,seed";
}

std::string gain_csv_row(const SummaryRow& row) {
  const std::string se = row.trials < 2 ? std::string{"unreliable"} : fmt(row.std_error);
  return std::string{policy_name(row.policy)} + ',' + fmt(row.p) + ',' + fmt(row.q) + ',' + fmt(row.s) + ',' +
         fmt(row.r_db) + ',' + fmt(row.lambda) + ',' + fmt(row.mean_error) + ',' + se + ',' + fmt(row.gain_db) +
         ',' + fmt(row.bound_gain_db) + ',' + std::to_string(row.trials) + ',' + std::to_string(row.seed);
}

std::string lambda_csv_header() {
  return "p,q,s,r_db,lambda_exact,lambda_bound,lambda_asymptotic,exact_objective,bound_undetermined,mc_samples,"
         "seed";
}

std::string lambda_csv_row(const LambdaRow& row) {
  return fmt(row.p) + ',' + fmt(row.q) + ',' + fmt(row.s) + ',' + fmt(row.r_db) + ',' + fmt(row.lambda_exact) +
         ',' + fmt(row.lambda_bound) + ',' + fmt(row.lambda_asymptotic) + ',' + fmt(row.exact_objective) + ',' +
         (row.bound_undetermined ? "true" : "false") + ',' + std::to_string(row.mc_samples) + ',' +
         std::to_string(row.seed);
}

std::vector<ExperimentSummary> sweep(const SweepPlan& plan, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto t0 = Clock::now();
  const std::filesystem::path csv_path = out_dir / "gain.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
  csv << gain_csv_header() << '\n';

  nlohmann::json manifest;
  manifest["command"] = "sweep-gain";
  manifest["spec"] = to_json(plan.spec);
  manifest["p_values"] = plan.p_values;
  manifest["q_values"] = plan.q_values;
  manifest["outputs"] = {csv_path.filename().string()};
  nlohmann::json timings = nlohmann::json::array();

  std::vector<ExperimentSummary> out;
  std::size_t rows_written = 0;
  try {
    for (double p : plan.p_values) {
      for (double q : plan.q_values) {
        ExperimentSpec spec = plan.spec;
        spec.config.p = p;
        spec.config.q = q;
        out.push_back(estimate_gain(spec, [&](const SummaryRow& row) {
          csv << gain_csv_row(row) << '\n';
          csv.flush();
          if (!csv) throw std::runtime_error("failed writing " + csv_path.string());
          ++rows_written;
        }));
        timings.push_back({{"p", p}, {"q", q}, {"wall_time", out.back().wall_time}});
      }
    }
  } catch (const std::exception& e) {
    manifest["status"] = "partial";
    manifest["error"] = e.what();
    manifest["rows_written"] = rows_written;
    manifest["timings"] = timings;
    manifest["wall_time"] = seconds_since(t0);
    write_manifest(out_dir / "manifest.json", manifest);
    throw;
  }
  manifest["status"] = "complete";
  manifest["rows_written"] = rows_written;
  manifest["timings"] = timings;
  manifest["wall_time"] = seconds_since(t0);
  write_manifest(out_dir / "manifest.json", manifest);
  return out;
}

}  // namespace adsense
