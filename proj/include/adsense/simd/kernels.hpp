#pragma once

// Data-parallel inner loops of the sensing pipeline. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2+FMA variant; the variant is
// picked once at startup from the CPU feature bits and can be overridden with
// ADSENSE_ISA=scalar|avx2 or force_isa(). Variants agree to a few ulp, not
// bit-for-bit, because exp/log are evaluated with different polynomials.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace adsense::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Posterior probabilities are kept inside [kProbFloor, kProbCeil] unless the
// prior was exactly 0 or 1.
inline constexpr double kProbFloor = 1e-300;
inline constexpr double kProbCeil = 1.0 - 1e-16;

/// Component-wise inputs/outputs of one Bayesian update. Components with zero
/// effort are copied through.
struct PosteriorBatch {
  std::span<const double> probs;
  std::span<const double> means;
  std::span<const double> variances;
  std::span<const double> efforts;
  std::span<const double> y;
  std::span<double> probs_out;
  std::span<double> means_out;
  std::span<double> variances_out;
  double nu2;
};

/// Homogeneous prior observed with the same effort everywhere (first stage).
struct UniformPrior {
  double prob;
  double mean;
  double var;
  double effort;
  double nu2;
};

struct KernelTable {
  Isa isa;
  void (*posterior_update)(const PosteriorBatch& batch);
  /// out[i] = P(I_i = 1 | y_i) under a UniformPrior.
  void (*uniform_posterior)(std::span<const double> y, const UniformPrior& prior,
                            std::span<double> out);
  /// out[i] = x[i]^exponent for x[i] >= 0, exponent > 0.
  void (*power)(std::span<const double> x, double exponent, std::span<double> out);
  /// sum_i probs[i] * (offsets[i] + efforts[i])^(-half_q).
  double (*cost_sum)(std::span<const double> probs, std::span<const double> offsets,
                     std::span<const double> efforts, double half_q);
  /// sum over mask[i] != 0 of |estimate[i] - truth[i]|^q.
  double (*abs_power_error_sum)(std::span<const double> estimate, std::span<const double> truth,
                                std::span<const std::uint8_t> mask, double q);
};

/// Kernels for the active ISA.
const KernelTable& kernels();
/// Kernels for a specific ISA; throws UsageError when it is unavailable.
const KernelTable& kernels(Isa isa);

bool isa_available(Isa isa);
Isa active_isa();
/// Process-wide override, used by tests and the --isa CLI flag.
void force_isa(Isa isa);

namespace scalar {
extern const KernelTable table;
}
#if defined(ADSENSE_HAVE_AVX2)
namespace avx2 {
extern const KernelTable table;
// Exposed for the equivalence tests.
void exp_batch(std::span<const double> x, std::span<double> out);
void log_batch(std::span<const double> x, std::span<double> out);
}  // namespace avx2
#endif

}  // namespace adsense::simd
