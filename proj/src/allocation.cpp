#include "adsense/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "adsense/bounds.hpp"
#include "adsense/error.hpp"
#include "adsense/numerics.hpp"
#include "adsense/rng.hpp"
#include "adsense/simd/kernels.hpp"

namespace adsense {
namespace {

void check_budget(double budget) {
  if (!(budget >= 0.0) || !std::isfinite(budget)) {
    std::ostringstream os;
    os << "budget must be non-negative and finite (got " << budget << ")";
    throw DomainError(os.str());
  }
}

void check_nu2(double nu2) {
  if (!(nu2 > 0.0) || !std::isfinite(nu2)) throw DomainError("nu2 must be positive and finite");
}

// Water-filling over the components with key_i = w_i * var_i > 0: the funded
// set is the top k by key and lambda_i = C w_i - a_i there. The funded set is
// found by shrinking from "everyone with positive key", dropping components
// whose effort would be non-positive under the current multiplier C; C only
// decreases along the way, so nothing dropped ever comes back. The result is
// then checked against the breakpoint pair b(k-1) < budget <= b(k).
void water_fill(std::span<const double> w, std::span<const double> key, std::span<const double> a,
                double budget, double nu2, std::vector<std::uint32_t>& funded,
                std::span<double> out) {
  const std::size_t n = w.size();
  std::fill(out.begin(), out.end(), 0.0);
  if (budget == 0.0) return;

  funded.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (key[i] > 0.0) funded.push_back(static_cast<std::uint32_t>(i));
  }
  if (funded.empty()) {
    std::fill(out.begin(), out.end(), budget / static_cast<double>(n));
    return;
  }

  double w_sum = 0.0, a_sum = 0.0, c = 0.0;
  for (;;) {
    w_sum = 0.0;
    a_sum = 0.0;
    for (std::uint32_t i : funded) {
      w_sum += w[i];
      a_sum += a[i];
    }
    c = (budget + a_sum) / w_sum;
    const double cut = nu2 / c;
    const std::size_t before = funded.size();
    std::erase_if(funded, [&](std::uint32_t i) { return !(key[i] > cut); });
    if (funded.size() == before) break;
  }

  // Breakpoints on either side of k = |funded|.
  auto ranks_before = [&](std::uint32_t i, std::uint32_t j) {
    return key[i] > key[j] || (key[i] == key[j] && i < j);
  };
  std::uint32_t last = funded.front();
  for (std::uint32_t i : funded) {
    if (ranks_before(last, i)) last = i;
  }
  double next_key = 0.0;
  for (std::size_t i = 0, j = 0; i < n; ++i) {
    if (j < funded.size() && funded[j] == i) {
      ++j;
      continue;
    }
    next_key = std::max(next_key, key[i]);
  }
  const double b_k = next_key > 0.0 ? nu2 / next_key * w_sum - a_sum : std::numeric_limits<double>::infinity();
  const double b_prev = nu2 / key[last] * (w_sum - w[last]) - (a_sum - a[last]);
  const double slack = 1e-9 * std::max({std::abs(budget), std::abs(b_prev), 1.0});
  if (b_k < b_prev - slack || budget <= b_prev - slack || budget > b_k + slack) {
    throw NumericalError("budget is not bracketed by the breakpoint sequence", budget, b_k - b_prev);
  }

  double total = 0.0;
  for (std::uint32_t i : funded) {
    const double v = std::max(0.0, c * w[i] - a[i]);
    out[i] = v;
    total += v;
  }
  if (total > 0.0) {
    const double scale = budget / total;
    for (std::uint32_t i : funded) out[i] *= scale;
  }
}

struct Scratch {
  SignalRealization sig;
  std::vector<double> z, y, probs, w, key, a, efforts;
  std::vector<std::uint32_t> funded;
};

// Signal amplitudes and standard-normal noise of each Monte Carlo sample.
// Held in memory when small enough so that repeated lambda evaluations reuse
// them, otherwise regenerated from the per-sample seed on demand.
class SampleBank {
 public:
  static constexpr std::size_t kMaxCachedValues = std::size_t{1} << 22;

  SampleBank(const ModelConfig& config, std::uint64_t seed, std::size_t samples, unsigned workers,
             bool cache)
      : config_(config), seed_(seed), samples_(samples) {
    const std::size_t n = config.n_dim;
    cached_ = cache && samples * n <= kMaxCachedValues;
    if (!cached_) return;
    x_.resize(samples * n);
    z_.resize(samples * n);
    run_blocks(samples, workers, [&](std::size_t begin, std::size_t end) {
      Scratch sc;
      for (std::size_t j = begin; j < end; ++j) {
        generate(j, sc);
        std::copy(sc.sig.amplitudes.begin(), sc.sig.amplitudes.end(), x_.begin() + static_cast<std::ptrdiff_t>(j * n));
        std::copy(sc.z.begin(), sc.z.end(), z_.begin() + static_cast<std::ptrdiff_t>(j * n));
      }
    });
  }

  std::size_t size() const { return samples_; }

  void get(std::size_t j, Scratch& sc, std::span<const double>& x, std::span<const double>& z) const {
    const std::size_t n = config_.n_dim;
    if (cached_) {
      x = std::span<const double>(x_).subspan(j * n, n);
      z = std::span<const double>(z_).subspan(j * n, n);
      return;
    }
    generate(j, sc);
    x = sc.sig.amplitudes;
    z = sc.z;
  }

  template <class Fn>
  static void run_blocks(std::size_t count, unsigned workers, Fn&& fn) {
    const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (w == 1) {
      fn(std::size_t{0}, count);
      return;
    }
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < w; ++t) pool.emplace_back(fn, count * t / w, count * (t + 1) / w);
  }

 private:
  void generate(std::size_t j, Scratch& sc) const {
    const std::uint64_t s = derive_seed(seed_, {j});
    sc.sig = sample_signal(config_, derive_seed(s, {kSignalStream}));
    sc.z.resize(config_.n_dim);
    Engine noise = make_engine(derive_seed(s, {kStage1NoiseStream}));
    fill_standard_normal(noise, sc.z.data(), sc.z.size());
  }

  const ModelConfig& config_;
  std::uint64_t seed_;
  std::size_t samples_;
  bool cached_ = false;
  std::vector<double> x_, z_;
};

// Optimal second-stage cost of one Monte Carlo sample for each lambda.
void sample_costs(const ModelConfig& config, std::span<const double> x, std::span<const double> z,
                  std::span<const double> lambdas, Scratch& sc, std::span<double> costs) {
  const std::size_t n = config.n_dim;
  sc.y.resize(n);
  sc.probs.resize(n);
  sc.w.resize(n);
  sc.key.resize(n);
  sc.a.resize(n);
  sc.efforts.resize(n);

  const auto& kern = simd::kernels();
  const double gamma = config.gamma();
  const double half_q = 0.5 * config.q;
  const double scale = config.m_q() * std::pow(config.nu2, half_q);
  for (std::size_t g = 0; g < lambdas.size(); ++g) {
    const double lam = lambdas[g];
    if (lam == 0.0) {
      costs[g] = nonadaptive_error(config);
      continue;
    }
    const double noise_sd = std::sqrt(config.nu2 / lam);
    for (std::size_t i = 0; i < n; ++i) sc.y[i] = x[i] + noise_sd * z[i];
    kern.uniform_posterior(sc.y, simd::UniformPrior{config.p, config.mu, config.sigma2, lam, config.nu2},
                           sc.probs);
    const double var1 = config.nu2 * config.sigma2 / (config.nu2 + lam * config.sigma2);
    const double a1 = config.nu2 / var1;
    kern.power(sc.probs, gamma, sc.w);
    for (std::size_t i = 0; i < n; ++i) sc.key[i] = sc.w[i] * var1;
    std::fill(sc.a.begin(), sc.a.end(), a1);
    const double budget = static_cast<double>(n) * (1.0 - lam);
    water_fill(sc.w, sc.key, sc.a, budget, config.nu2, sc.funded, sc.efforts);
    costs[g] = scale * kern.cost_sum(sc.probs, sc.a, sc.efforts, half_q);
  }
}

// values[g * samples + j] for every lambda g and sample j. Samples are split
// into contiguous blocks per worker; the result does not depend on the split.
std::vector<double> sample_matrix(const ModelConfig& config, const SampleBank& bank,
                                  std::span<const double> lambdas, unsigned workers) {
  const std::size_t m = bank.size();
  const std::size_t g_count = lambdas.size();
  std::vector<double> values(g_count * m);
  SampleBank::run_blocks(m, workers, [&](std::size_t begin, std::size_t end) {
    Scratch sc;
    std::vector<double> costs(g_count);
    std::span<const double> x, z;
    for (std::size_t j = begin; j < end; ++j) {
      bank.get(j, sc, x, z);
      sample_costs(config, x, z, lambdas, sc, costs);
      for (std::size_t g = 0; g < g_count; ++g) values[g * m + j] = costs[g];
    }
  });
  return values;
}

ExactObjective summarize(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return ExactObjective{mean, se};
}

void check_simulatable(const ModelConfig& config) {
  config.validate();
  if (!std::isfinite(config.nu2)) throw DomainError("nu2 must be finite for simulation (r > 0)");
}

}  // namespace

double Allocation::total() const { return std::accumulate(efforts.begin(), efforts.end(), 0.0); }

Allocation Allocation::uniform(std::size_t n, double per_component) {
  return Allocation{std::vector<double>(n, per_component), per_component * static_cast<double>(n)};
}

Allocation Allocation::zeros(std::size_t n) { return Allocation{std::vector<double>(n, 0.0), 0.0}; }

Allocation second_stage_optimal(const BeliefState& state, double budget, double q, double nu2) {
  check_budget(budget);
  check_nu2(nu2);
  if (!(q > 0.0)) throw DomainError("q must be positive");
  const std::size_t n = state.size();
  Allocation out{std::vector<double>(n, 0.0), budget};
  if (n == 0) return out;
  std::vector<double> w(n), key(n), a(n);
  simd::kernels().power(state.probs, 2.0 / (q + 2.0), w);
  for (std::size_t i = 0; i < n; ++i) {
    key[i] = w[i] * state.variances[i];
    a[i] = nu2 / state.variances[i];
  }
  std::vector<std::uint32_t> order;
  water_fill(w, key, a, budget, nu2, order, out.efforts);
  return out;
}

Allocation second_stage_proportional(const BeliefState& state, double budget, double gamma) {
  check_budget(budget);
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must be in (0, 1)");
  const std::size_t n = state.size();
  Allocation out{std::vector<double>(n, 0.0), budget};
  simd::kernels().power(state.probs, gamma, out.efforts);
  const double total = std::accumulate(out.efforts.begin(), out.efforts.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateStateError("all posterior probabilities are zero");
  for (double& v : out.efforts) v *= budget / total;
  return out;
}

double stage_cost(const BeliefState& state, const Allocation& alloc, double q, double nu2) {
  check_nu2(nu2);
  const std::size_t n = state.size();
  if (alloc.size() != n) throw UsageError("stage_cost: allocation and state dimensions differ");
  std::vector<double> offsets(n);
  for (std::size_t i = 0; i < n; ++i) offsets[i] = nu2 / state.variances[i];
  return gaussian_moment(q) * std::pow(nu2, 0.5 * q) *
         simd::kernels().cost_sum(state.probs, offsets, alloc.efforts, 0.5 * q);
}

std::vector<double> default_lambda_grid(int points) {
  if (points < 2) throw DomainError("lambda grid needs at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
  return g;
}

ExactObjective first_stage_objective(const ModelConfig& config, double lambda,
                                     const ExactSearchOptions& options) {
  check_simulatable(config);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must be in [0, 1]");
  if (options.mc_samples < 1) throw DomainError("mc_samples must be >= 1");
  const double lams[1] = {lambda};
  const SampleBank bank(config, options.seed, options.mc_samples, options.workers, false);
  return summarize(sample_matrix(config, bank, lams, options.workers));
}

FirstStageChoice first_stage_exact(const ModelConfig& config, std::span<const double> grid,
                                   const ExactSearchOptions& options) {
  check_simulatable(config);
  if (grid.empty()) throw DomainError("lambda grid is empty");
  if (options.mc_samples < 1) throw DomainError("mc_samples must be >= 1");
  for (double g : grid) {
    if (!(g >= 0.0 && g <= 1.0)) throw DomainError("lambda grid values must be in [0, 1]");
  }
  std::vector<double> lams(grid.begin(), grid.end());
  std::sort(lams.begin(), lams.end());
  lams.erase(std::unique(lams.begin(), lams.end()), lams.end());

  const std::size_t m = options.mc_samples;
  const SampleBank bank(config, options.seed, m, options.workers, true);
  auto objective_at = [&](double lam) {
    const double one[1] = {lam};
    return summarize(sample_matrix(config, bank, one, options.workers));
  };
  const std::vector<double> values = sample_matrix(config, bank, lams, options.workers);
  auto column = [&](std::size_t g) { return std::span<const double>(values).subspan(g * m, m); };

  std::size_t best = 0, worst = 0;
  std::vector<ExactObjective> stats(lams.size());
  for (std::size_t g = 0; g < lams.size(); ++g) {
    stats[g] = summarize(column(g));
    if (stats[g].mean < stats[best].mean) best = g;
    if (stats[g].mean > stats[worst].mean) worst = g;
  }

  FirstStageChoice choice;
  choice.method = FirstStageMethod::exact_mc;

  // Flat objective: the spread across the grid is within noise.
  std::vector<double> diff(m);
  for (std::size_t j = 0; j < m; ++j) diff[j] = column(worst)[j] - column(best)[j];
  const double spread = stats[worst].mean - stats[best].mean;
  const double se_diff = summarize(diff).std_error;
  if (lams.size() > 1 && spread <= std::max(3.0 * se_diff, 1e-9 * stats[best].mean)) {
    choice.lambda_frac = 0.0;
    choice.undetermined = true;
    const auto zero = std::find(lams.begin(), lams.end(), 0.0);
    const ExactObjective at = zero != lams.end()
                                  ? stats[static_cast<std::size_t>(zero - lams.begin())]
                                  : objective_at(0.0);
    choice.objective_value = at.mean;
    choice.objective_se = at.std_error;
    return choice;
  }

  choice.lambda_frac = lams[best];
  choice.objective_value = stats[best].mean;
  choice.objective_se = stats[best].std_error;
  if (options.refine && lams.size() > 1) {
    const double lo = lams[best == 0 ? 0 : best - 1];
    const double hi = lams[std::min(best + 1, lams.size() - 1)];
    const num::ScalarOptimum refined = num::golden_section_max(
        [&](double lam) { return -objective_at(lam).mean; }, lo, hi, options.refine_tol);
    if (-refined.value < choice.objective_value) {
      choice.lambda_frac = refined.x;
      choice.objective_value = -refined.value;
      choice.objective_se = objective_at(refined.x).std_error;
    }
  }
  return choice;
}

FirstStageChoice first_stage_bound(const ModelConfig& config, CoefficientSource source) {
  config.validate();
  if (config.gamma() != 0.5 && source == CoefficientSource::prop2) {
    throw UsageError("coefficient source prop2 needs q = 2");
  }
  if (!(config.p > 0.0 && config.p < 1.0) || config.r() == 0.0) {
    return FirstStageChoice{0.0, FirstStageMethod::bound_based, 1.0 + config.r(), 0.0, true};
  }
  return first_stage_bound(config, coefficient_function(config, source));
}

FirstStageChoice first_stage_bound(const ModelConfig& config,
                                   const std::function<double(double)>& coefficient) {
  config.validate();
  const double r = config.r();
  const BoundMaximum best = maximize_bound_objective(coefficient, config.gamma());
  return FirstStageChoice{best.lambda, FirstStageMethod::bound_based, 1.0 + r + r * best.value, 0.0,
                          best.undetermined};
}

FirstStageChoice first_stage_asymptotic(const ModelConfig& config, AsymptoticRegime regime) {
  config.validate();
  switch (regime) {
    case AsymptoticRegime::fixed_p: {
      const Theorem2Rate t = theorem2_rate(config);
      return FirstStageChoice{t.lambda_star, FirstStageMethod::asymptotic_fixed_p, t.gain_leading, 0.0,
                              false};
    }
    case AsymptoticRegime::vanishing_p_low_r:
      return FirstStageChoice{0.5, FirstStageMethod::asymptotic_vanishing_p,
                              theorem3_gain(config, Theorem3Regime::low_r), 0.0, false};
    case AsymptoticRegime::vanishing_p_high_r:
      return FirstStageChoice{1.0 / (config.q + 1.0), FirstStageMethod::asymptotic_vanishing_p,
                              theorem3_gain(config, Theorem3Regime::high_r), 0.0, false};
  }
  throw UsageError("unknown asymptotic regime");
}

double nonadaptive_error(const ModelConfig& config) {
  config.validate();
  return config.m_q() * std::pow(config.sigma(), config.q) * static_cast<double>(config.n_dim) *
         config.p / std::pow(1.0 + config.r(), 0.5 * config.q);
}

double oracle_gain_bound(const ModelConfig& config) {
  config.validate();
  if (!(config.p > 0.0)) throw DomainError("oracle gain is unbounded at p = 0");
  const double r = config.r();
  return std::pow((1.0 + r / config.p) / (1.0 + r), 0.5 * config.q);
}

OracleOutcome oracle_policy_error(const ModelConfig& config, const SignalRealization& signal,
                                  std::uint64_t seed) {
  check_simulatable(config);
  const std::size_t n = signal.size();
  const std::size_t k = signal.support_size();
  if (k == 0) return OracleOutcome{0.0, 0.0};
  const double share = static_cast<double>(n) / static_cast<double>(k);
  Allocation alloc = Allocation::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (signal.support[i]) alloc.efforts[i] = share;
  }
  alloc.stage_budget = static_cast<double>(n);
  ModelConfig sized = config;
  sized.n_dim = n;
  const BeliefState post = update_state(BeliefState::prior(sized), alloc,
                                        observe(signal, alloc, config.nu2, seed), config.nu2);
  const double var1 = config.nu2 * config.sigma2 / (config.nu2 + share * config.sigma2);
  OracleOutcome out;
  out.posterior_risk = config.m_q() * static_cast<double>(k) * std::pow(var1, 0.5 * config.q);
  out.realized_error =
      simd::kernels().abs_power_error_sum(post.means, signal.amplitudes, signal.support, config.q);
  return out;
}

}  // namespace adsense
