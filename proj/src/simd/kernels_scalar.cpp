#include <algorithm>
#include <cmath>

#include "adsense/simd/kernels.hpp"

namespace adsense::simd::scalar {
namespace {

double clamp_posterior(double prior, double post) {
  if (prior <= 0.0 || prior >= 1.0) return prior;
  return std::clamp(post, kProbFloor, kProbCeil);
}

double posterior_prob(double prior, double llr) {
  const double t = std::log(prior) - std::log(1.0 - prior) + llr;
  return clamp_posterior(prior, 1.0 / (1.0 + std::exp(-t)));
}

// log f1(y) - log f0(y) with f0 = N(0, nu2/lam), f1 = N(mean, var + nu2/lam).
// `inv` is 1 / (nu2 + lam var).
double log_likelihood_ratio(double y, double mean, double var, double lam, double nu2, double inv) {
  const double d = y - mean;
  return -0.5 * std::log1p(var * lam / nu2) - 0.5 * d * d * lam * inv + 0.5 * y * y * lam / nu2;
}

void posterior_update(const PosteriorBatch& b) {
  const std::size_t n = b.probs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = b.efforts[i];
    const double p = b.probs[i];
    const double mu = b.means[i];
    const double var = b.variances[i];
    if (lam <= 0.0) {
      b.probs_out[i] = p;
      b.means_out[i] = mu;
      b.variances_out[i] = var;
      continue;
    }
    const double y = b.y[i];
    const double inv = 1.0 / (b.nu2 + lam * var);
    b.probs_out[i] = posterior_prob(p, log_likelihood_ratio(y, mu, var, lam, b.nu2, inv));
    b.means_out[i] = (b.nu2 * mu + lam * var * y) * inv;
    b.variances_out[i] = b.nu2 * var * inv;
  }
}

void uniform_posterior(std::span<const double> y, const UniformPrior& pr, std::span<double> out) {
  const double inv = 1.0 / (pr.nu2 + pr.effort * pr.var);
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = posterior_prob(pr.prob, log_likelihood_ratio(y[i], pr.mean, pr.var, pr.effort, pr.nu2, inv));
  }
}

void power(std::span<const double> x, double e, std::span<double> out) {
  if (e == 1.0) {
    std::copy(x.begin(), x.end(), out.begin());
  } else if (e == 0.5) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::sqrt(x[i]);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = x[i] > 0.0 ? std::exp(e * std::log(x[i])) : 0.0;
    }
  }
}

double cost_sum(std::span<const double> probs, std::span<const double> offsets,
                std::span<const double> efforts, double half_q) {
  double acc = 0.0;
  const std::size_t n = probs.size();
  if (half_q == 1.0) {
    for (std::size_t i = 0; i < n; ++i) acc += probs[i] / (offsets[i] + efforts[i]);
  } else if (half_q == 0.5) {
    for (std::size_t i = 0; i < n; ++i) acc += probs[i] / std::sqrt(offsets[i] + efforts[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      acc += probs[i] * std::exp(-half_q * std::log(offsets[i] + efforts[i]));
    }
  }
  return acc;
}

double abs_power_error_sum(std::span<const double> est, std::span<const double> truth,
                           std::span<const std::uint8_t> mask, double q) {
  double acc = 0.0;
  const std::size_t n = est.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double d = est[i] - truth[i];
    if (q == 2.0) {
      acc += d * d;
    } else if (q == 1.0) {
      acc += std::abs(d);
    } else {
      const double dd = d * d;
      acc += dd > 0.0 ? std::exp(0.5 * q * std::log(dd)) : 0.0;
    }
  }
  return acc;
}

}  // namespace

const KernelTable table{Isa::scalar, &posterior_update, &uniform_posterior,
                        &power,      &cost_sum,         &abs_power_error_sum};

}  // namespace adsense::simd::scalar
