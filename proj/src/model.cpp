#include "adsense/model.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/geometric_distribution.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adsense/allocation.hpp"
#include "adsense/error.hpp"
#include "adsense/numerics.hpp"
#include "adsense/rng.hpp"
#include "adsense/simd/kernels.hpp"

namespace adsense {
namespace {

[[noreturn]] void bad_field(const char* field, const char* range, double got) {
  std::ostringstream os;
  os << field << " must be " << range << " (got " << got << ")";
  throw DomainError(os.str());
}

}  // namespace

double gaussian_moment(double q) {
  if (!(q > 0.0) || !std::isfinite(q)) bad_field("q", "positive and finite", q);
  if (q == 2.0) return 1.0;
  return std::exp(0.5 * q * std::numbers::ln2 + std::lgamma(0.5 * (q + 1.0)) -
                  0.5 * std::log(std::numbers::pi));
}

double ModelConfig::m_q() const { return gaussian_moment(q); }

double ModelConfig::sigma() const { return std::sqrt(sigma2); }

void ModelConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) bad_field("p", "in [0, 1]", p);
  if (!std::isfinite(mu)) bad_field("mu", "finite", mu);
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) bad_field("sigma2", "positive and finite", sigma2);
  if (!(nu2 > 0.0)) bad_field("nu2", "positive", nu2);
  if (n_dim < 1) bad_field("n_dim", ">= 1", static_cast<double>(n_dim));
  if (!(q > 0.0) || !std::isfinite(q)) bad_field("q", "positive and finite", q);
}

ModelConfig ModelConfig::from_ratios(double p, double q, double s, double r, std::size_t n_dim,
                                     double sigma) {
  if (!(s >= 0.0)) bad_field("s", "non-negative", s);
  if (!(r >= 0.0)) bad_field("r", "non-negative", r);
  ModelConfig c;
  c.p = p;
  c.q = q;
  c.sigma2 = sigma * sigma;
  c.mu = std::sqrt(s) * sigma;
  c.nu2 = r > 0.0 ? c.sigma2 / r : std::numeric_limits<double>::infinity();
  c.n_dim = n_dim;
  c.validate();
  return c;
}

std::size_t SignalRealization::support_size() const {
  return static_cast<std::size_t>(std::count_if(support.begin(), support.end(), [](auto b) { return b != 0; }));
}

BeliefState BeliefState::prior(const ModelConfig& config) {
  config.validate();
  const std::size_t n = config.n_dim;
  return BeliefState{std::vector<double>(n, config.p), std::vector<double>(n, config.mu),
                     std::vector<double>(n, config.sigma2), static_cast<double>(n)};
}

double LikelihoodTriple::f0() const { return std::exp(log_f0); }
double LikelihoodTriple::f1() const { return std::exp(log_f1); }
double LikelihoodTriple::fp() const { return std::exp(log_fp); }

// Support positions are drawn as geometric gaps between successive nonzero
// components, which is the same law as i.i.d. Bernoulli(p) indicators but
// costs O(Np) draws. Amplitudes follow in support order.
SignalRealization sample_signal(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Engine engine = make_engine(seed);
  const std::size_t n = config.n_dim;
  SignalRealization sig;
  sig.support.assign(n, 0);
  sig.amplitudes.assign(n, 0.0);
  if (config.p == 0.0) return sig;
  boost::random::normal_distribution<double> normal{config.mu, config.sigma()};
  if (config.p == 1.0) {
    std::fill(sig.support.begin(), sig.support.end(), 1);
    for (double& a : sig.amplitudes) a = normal(engine);
    return sig;
  }
  boost::random::geometric_distribution<std::uint64_t> gap{config.p};
  for (std::uint64_t i = gap(engine); i < n; i += 1 + gap(engine)) {
    sig.support[i] = 1;
    sig.amplitudes[i] = normal(engine);
  }
  return sig;
}

Observation observe_with(const SignalRealization& signal, std::span<const double> efforts,
                         double nu2, std::span<const double> std_normals) {
  const std::size_t n = signal.size();
  if (efforts.size() != n || std_normals.size() < n) {
    throw UsageError("observe: allocation and signal dimensions differ");
  }
  if (!(nu2 >= 0.0)) bad_field("nu2", "non-negative", nu2);
  const double nu = std::sqrt(nu2);
  Observation obs;
  obs.values.assign(n, std::numeric_limits<double>::quiet_NaN());
  obs.observed.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = efforts[i];
    if (lam < 0.0 || std::isnan(lam)) bad_field("allocation entry", "non-negative", lam);
    if (lam == 0.0) continue;
    obs.values[i] = signal.amplitudes[i] + nu * std_normals[i] / std::sqrt(lam);
    obs.observed[i] = 1;
  }
  return obs;
}

Observation observe(const SignalRealization& signal, const Allocation& alloc, double nu2,
                    std::uint64_t seed) {
  Engine engine = make_engine(seed);
  std::vector<double> z(signal.size());
  fill_standard_normal(engine, z.data(), z.size());
  return observe_with(signal, alloc.efforts, nu2, z);
}

LikelihoodTriple likelihood_triple(double prob, double mean, double var, double lambda,
                                   double nu2, double y) {
  if (!(lambda > 0.0)) bad_field("lambda", "positive (mask unobserved components instead)", lambda);
  if (!(nu2 > 0.0)) bad_field("nu2", "positive", nu2);
  if (!(var > 0.0)) bad_field("var", "positive", var);
  if (!(prob >= 0.0 && prob <= 1.0)) bad_field("prob", "in [0, 1]", prob);
  const double v0 = nu2 / lambda;
  LikelihoodTriple t;
  t.log_f0 = num::log_normal_pdf(y, 0.0, v0);
  t.log_f1 = num::log_normal_pdf(y, mean, var + v0);
  t.log_fp = num::log_add_exp(std::log(prob) + t.log_f1, std::log1p(-prob) + t.log_f0);
  return t;
}

BeliefState update_state(const BeliefState& state, const Allocation& alloc,
                         const Observation& obs, double nu2) {
  const std::size_t n = state.size();
  if (alloc.size() != n || obs.size() != n) {
    throw UsageError("update_state: state, allocation and observation dimensions differ");
  }
  if (!(nu2 > 0.0) || !std::isfinite(nu2)) bad_field("nu2", "positive and finite", nu2);
  double spent = 0.0;
  for (double lam : alloc.efforts) {
    if (lam < 0.0 || std::isnan(lam)) bad_field("allocation entry", "non-negative", lam);
    spent += lam;
  }
  const double tol = 1e-9 * std::max(state.budget_remaining, 1.0);
  if (spent > state.budget_remaining + tol) {
    std::ostringstream os;
    os << "allocation spends " << spent << " but only " << state.budget_remaining << " remains";
    throw ConstraintError(os.str());
  }
  BeliefState next;
  next.probs.resize(n);
  next.means.resize(n);
  next.variances.resize(n);
  simd::kernels().posterior_update(simd::PosteriorBatch{
      state.probs, state.means, state.variances, alloc.efforts, obs.values, next.probs,
      next.means, next.variances, nu2});
  next.budget_remaining = std::max(0.0, state.budget_remaining - spent);
  return next;
}

}  // namespace adsense
