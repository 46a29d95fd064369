// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may be called unless the dispatcher has seen the
// feature bits.

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>

#include "adsense/simd/kernels.hpp"

namespace adsense::simd::avx2 {
namespace {

constexpr std::size_t kLanes = 4;

inline __m256d set1(double v) { return _mm256_set1_pd(v); }

// exp with Cephes range reduction and Pade form; |rel err| ~ 1 ulp on
// [-708, 709]. Arguments below the normal range flush to 0.
inline __m256d exp_pd(__m256d x) {
  constexpr double kHi = 709.78271289338397;
  constexpr double kLo = -708.39641853226408;
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, set1(kLo)), set1(kHi));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, set1(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, set1(6.93145751953125E-1), xc);
  r = _mm256_fnmadd_pd(n, set1(1.42860682030941723212E-6), r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d px = _mm256_fmadd_pd(set1(1.26177193074810590878E-4), rr, set1(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, rr, set1(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(set1(3.00198505138664455042E-6), rr, set1(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, rr, set1(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, rr, set1(2.00000000000000000009E0));
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(set1(2.0), e, set1(1.0));

  // 2^n split in two factors so n = 1024 does not overflow the exponent field.
  const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(n, set1(0.5)));
  const __m256d n2 = _mm256_sub_pd(n, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256i k1 = _mm256_add_epi64(_mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n1)), bias);
  const __m256i k2 = _mm256_add_epi64(_mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n2)), bias);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(_mm256_slli_epi64(k1, 52)));
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(_mm256_slli_epi64(k2, 52)));

  e = _mm256_blendv_pd(e, set1(INFINITY), _mm256_cmp_pd(x, set1(kHi), _CMP_GT_OQ));
  e = _mm256_blendv_pd(e, _mm256_setzero_pd(), _mm256_cmp_pd(x, set1(kLo), _CMP_LT_OQ));
  e = _mm256_blendv_pd(e, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  return e;
}

// log following the fdlibm reduction: x = 2^k m, m in [sqrt(1/2), sqrt(2)),
// log(m) = f - (hfsq - s (hfsq + R(s^2))) with s = f / (2 + f).
inline __m256d log_pd(__m256d x) {
  const __m256d sub = _mm256_and_pd(_mm256_cmp_pd(x, set1(DBL_MIN), _CMP_LT_OQ),
                                    _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ));
  const __m256d xs = _mm256_blendv_pd(x, _mm256_mul_pd(x, set1(18014398509481984.0)), sub);  // 2^54
  const __m256d kadj = _mm256_blendv_pd(_mm256_setzero_pd(), set1(-54.0), sub);

  const __m256i bits = _mm256_castpd_si256(xs);
  const __m256i expo = _mm256_srli_epi64(bits, 52);
  const __m256d magic = set1(4503599627370496.0);  // 2^52
  const __m256d expo_d = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(expo, _mm256_castpd_si256(magic))), magic);
  __m256d k = _mm256_add_pd(_mm256_sub_pd(expo_d, set1(1023.0)), kadj);

  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
  const __m256d big = _mm256_cmp_pd(m, set1(1.41421356237309504880), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, set1(0.5)), big);
  k = _mm256_add_pd(k, _mm256_and_pd(big, set1(1.0)));

  const __m256d f = _mm256_sub_pd(m, set1(1.0));
  const __m256d hfsq = _mm256_mul_pd(_mm256_mul_pd(set1(0.5), f), f);
  const __m256d s = _mm256_div_pd(f, _mm256_add_pd(set1(2.0), f));
  const __m256d z = _mm256_mul_pd(s, s);
  const __m256d w = _mm256_mul_pd(z, z);
  __m256d t1 = _mm256_fmadd_pd(w, set1(1.531383769920937332e-01), set1(2.222219843214978396e-01));
  t1 = _mm256_fmadd_pd(w, t1, set1(3.999999999940941908e-01));
  t1 = _mm256_mul_pd(w, t1);
  __m256d t2 = _mm256_fmadd_pd(w, set1(1.479819860511658591e-01), set1(1.818357216161805012e-01));
  t2 = _mm256_fmadd_pd(w, t2, set1(2.857142874366239149e-01));
  t2 = _mm256_fmadd_pd(w, t2, set1(6.666666666666735130e-01));
  t2 = _mm256_mul_pd(z, t2);
  const __m256d R = _mm256_add_pd(t2, t1);

  const __m256d ln2_hi = set1(6.93147180369123816490e-01);
  const __m256d ln2_lo = set1(1.90821492927058770002e-10);
  const __m256d inner = _mm256_fmadd_pd(k, ln2_lo, _mm256_mul_pd(s, _mm256_add_pd(hfsq, R)));
  __m256d res = _mm256_fmsub_pd(k, ln2_hi, _mm256_sub_pd(_mm256_sub_pd(hfsq, inner), f));

  res = _mm256_blendv_pd(res, set1(-INFINITY), _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_EQ_OQ));
  res = _mm256_blendv_pd(res, set1(INFINITY), _mm256_cmp_pd(x, set1(INFINITY), _CMP_EQ_OQ));
  res = _mm256_blendv_pd(res, set1(NAN), _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_NGE_UQ));
  return res;
}

inline __m256d clamp_posterior(__m256d prior, __m256d post) {
  const __m256d clamped = _mm256_min_pd(_mm256_max_pd(post, set1(kProbFloor)), set1(kProbCeil));
  const __m256d interior = _mm256_and_pd(_mm256_cmp_pd(prior, _mm256_setzero_pd(), _CMP_GT_OQ),
                                         _mm256_cmp_pd(prior, set1(1.0), _CMP_LT_OQ));
  return _mm256_blendv_pd(prior, clamped, interior);
}

inline __m256d posterior_prob(__m256d prior, __m256d llr) {
  const __m256d logit = _mm256_sub_pd(log_pd(prior), log_pd(_mm256_sub_pd(set1(1.0), prior)));
  const __m256d t = _mm256_add_pd(logit, llr);
  const __m256d neg_t = _mm256_sub_pd(_mm256_setzero_pd(), t);
  const __m256d post = _mm256_div_pd(set1(1.0), _mm256_add_pd(set1(1.0), exp_pd(neg_t)));
  return clamp_posterior(prior, post);
}

// Same algebra as the scalar reference; inv = 1 / (nu2 + lam var). log1p is
// taken as log(1 + t), which differs by at most an ulp of the result's scale.
inline __m256d log_likelihood_ratio(__m256d y, __m256d mean, __m256d var, __m256d lam, __m256d nu2,
                                    __m256d inv) {
  const __m256d d = _mm256_sub_pd(y, mean);
  const __m256d half_lam = _mm256_mul_pd(set1(0.5), lam);
  const __m256d t = _mm256_div_pd(_mm256_mul_pd(var, lam), nu2);
  const __m256d a = _mm256_mul_pd(set1(-0.5), log_pd(_mm256_add_pd(set1(1.0), t)));
  const __m256d b = _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(d, d), half_lam), inv);
  const __m256d c = _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(y, y), half_lam), nu2);
  return _mm256_add_pd(_mm256_sub_pd(a, b), c);
}

inline double hsum(__m256d v) {
  alignas(32) std::array<double, kLanes> lanes;
  _mm256_store_pd(lanes.data(), v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

// Loads up to four doubles, padding the remainder with `fill`.
inline __m256d load_tail(const double* src, std::size_t count, double fill) {
  alignas(32) std::array<double, kLanes> buf;
  buf.fill(fill);
  std::copy_n(src, count, buf.begin());
  return _mm256_load_pd(buf.data());
}

inline void store_tail(double* dst, std::size_t count, __m256d v) {
  alignas(32) std::array<double, kLanes> buf;
  _mm256_store_pd(buf.data(), v);
  std::copy_n(buf.begin(), count, dst);
}

void posterior_update(const PosteriorBatch& b) {
  const std::size_t n = b.probs.size();
  const __m256d nu2 = set1(b.nu2);
  auto body = [&](__m256d p, __m256d mu, __m256d var, __m256d lam, __m256d y, __m256d& po,
                  __m256d& muo, __m256d& varo) {
    const __m256d active = _mm256_cmp_pd(lam, _mm256_setzero_pd(), _CMP_GT_OQ);
    const __m256d lv = _mm256_mul_pd(lam, var);
    const __m256d inv = _mm256_div_pd(set1(1.0), _mm256_add_pd(nu2, lv));
    const __m256d pnew = posterior_prob(p, log_likelihood_ratio(y, mu, var, lam, nu2, inv));
    const __m256d mnew = _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(nu2, mu), _mm256_mul_pd(lv, y)), inv);
    const __m256d vnew = _mm256_mul_pd(_mm256_mul_pd(nu2, var), inv);
    po = _mm256_blendv_pd(p, pnew, active);
    muo = _mm256_blendv_pd(mu, mnew, active);
    varo = _mm256_blendv_pd(var, vnew, active);
  };
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d po, muo, varo;
    body(_mm256_loadu_pd(&b.probs[i]), _mm256_loadu_pd(&b.means[i]), _mm256_loadu_pd(&b.variances[i]),
         _mm256_loadu_pd(&b.efforts[i]), _mm256_loadu_pd(&b.y[i]), po, muo, varo);
    _mm256_storeu_pd(&b.probs_out[i], po);
    _mm256_storeu_pd(&b.means_out[i], muo);
    _mm256_storeu_pd(&b.variances_out[i], varo);
  }
  if (i < n) {
    const std::size_t c = n - i;
    __m256d po, muo, varo;
    body(load_tail(&b.probs[i], c, 0.5), load_tail(&b.means[i], c, 0.0),
         load_tail(&b.variances[i], c, 1.0), load_tail(&b.efforts[i], c, 0.0),
         load_tail(&b.y[i], c, 0.0), po, muo, varo);
    store_tail(&b.probs_out[i], c, po);
    store_tail(&b.means_out[i], c, muo);
    store_tail(&b.variances_out[i], c, varo);
  }
}

void uniform_posterior(std::span<const double> y, const UniformPrior& pr, std::span<double> out) {
  const std::size_t n = y.size();
  const __m256d p = set1(pr.prob);
  const __m256d mean = set1(pr.mean);
  const __m256d var = set1(pr.var);
  const __m256d lam = set1(pr.effort);
  const __m256d nu2 = set1(pr.nu2);
  const __m256d inv = set1(1.0 / (pr.nu2 + pr.effort * pr.var));
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(&out[i],
                     posterior_prob(p, log_likelihood_ratio(_mm256_loadu_pd(&y[i]), mean, var, lam, nu2, inv)));
  }
  if (i < n) {
    const std::size_t c = n - i;
    store_tail(&out[i], c,
               posterior_prob(p, log_likelihood_ratio(load_tail(&y[i], c, 0.0), mean, var, lam, nu2, inv)));
  }
}

inline __m256d power_pd(__m256d x, double e) {
  if (e == 1.0) return x;
  if (e == 0.5) return _mm256_sqrt_pd(x);
  const __m256d v = exp_pd(_mm256_mul_pd(set1(e), log_pd(x)));
  return _mm256_blendv_pd(_mm256_setzero_pd(), v, _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ));
}

void power(std::span<const double> x, double e, std::span<double> out) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) _mm256_storeu_pd(&out[i], power_pd(_mm256_loadu_pd(&x[i]), e));
  if (i < n) store_tail(&out[i], n - i, power_pd(load_tail(&x[i], n - i, 1.0), e));
}

inline __m256d inv_power_pd(__m256d x, double half_q) {
  if (half_q == 1.0) return _mm256_div_pd(set1(1.0), x);
  if (half_q == 0.5) return _mm256_div_pd(set1(1.0), _mm256_sqrt_pd(x));
  return exp_pd(_mm256_mul_pd(set1(-half_q), log_pd(x)));
}

double cost_sum(std::span<const double> probs, std::span<const double> offsets,
                std::span<const double> efforts, double half_q) {
  const std::size_t n = probs.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d base = _mm256_add_pd(_mm256_loadu_pd(&offsets[i]), _mm256_loadu_pd(&efforts[i]));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(&probs[i]), inv_power_pd(base, half_q)));
  }
  if (i < n) {
    const std::size_t c = n - i;
    const __m256d base = _mm256_add_pd(load_tail(&offsets[i], c, 1.0), load_tail(&efforts[i], c, 0.0));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(load_tail(&probs[i], c, 0.0), inv_power_pd(base, half_q)));
  }
  return hsum(acc);
}

inline __m256d abs_power_pd(__m256d d, double q) {
  if (q == 2.0) return _mm256_mul_pd(d, d);
  if (q == 1.0) return _mm256_andnot_pd(set1(-0.0), d);
  const __m256d dd = _mm256_mul_pd(d, d);
  const __m256d v = exp_pd(_mm256_mul_pd(set1(0.5 * q), log_pd(dd)));
  return _mm256_blendv_pd(_mm256_setzero_pd(), v, _mm256_cmp_pd(dd, _mm256_setzero_pd(), _CMP_GT_OQ));
}

inline __m256d mask_from_bytes(const std::uint8_t* m, std::size_t count) {
  std::uint32_t packed = 0;
  for (std::size_t j = 0; j < count; ++j) packed |= static_cast<std::uint32_t>(m[j] != 0) << (8 * j);
  const __m256i wide = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(static_cast<int>(packed)));
  return _mm256_castsi256_pd(_mm256_cmpgt_epi64(wide, _mm256_setzero_si256()));
}

double abs_power_error_sum(std::span<const double> est, std::span<const double> truth,
                           std::span<const std::uint8_t> mask, double q) {
  const std::size_t n = est.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(&est[i]), _mm256_loadu_pd(&truth[i]));
    acc = _mm256_add_pd(acc, _mm256_and_pd(mask_from_bytes(&mask[i], kLanes), abs_power_pd(d, q)));
  }
  if (i < n) {
    const std::size_t c = n - i;
    const __m256d d = _mm256_sub_pd(load_tail(&est[i], c, 0.0), load_tail(&truth[i], c, 0.0));
    acc = _mm256_add_pd(acc, _mm256_and_pd(mask_from_bytes(&mask[i], c), abs_power_pd(d, q)));
  }
  return hsum(acc);
}

}  // namespace

void exp_batch(std::span<const double> x, std::span<double> out) {
  std::size_t i = 0;
  for (; i + kLanes <= x.size(); i += kLanes) _mm256_storeu_pd(&out[i], exp_pd(_mm256_loadu_pd(&x[i])));
  if (i < x.size()) store_tail(&out[i], x.size() - i, exp_pd(load_tail(&x[i], x.size() - i, 0.0)));
}

void log_batch(std::span<const double> x, std::span<double> out) {
  std::size_t i = 0;
  for (; i + kLanes <= x.size(); i += kLanes) _mm256_storeu_pd(&out[i], log_pd(_mm256_loadu_pd(&x[i])));
  if (i < x.size()) store_tail(&out[i], x.size() - i, log_pd(load_tail(&x[i], x.size() - i, 1.0)));
}

const KernelTable table{Isa::avx2, &posterior_update, &uniform_posterior,
                        &power,    &cost_sum,         &abs_power_error_sum};

}  // namespace adsense::simd::avx2
