#include "adsense/numerics.hpp"

#include <algorithm>
#include <vector>

namespace adsense::num {

double normal_interval(double a, double b) {
  if (!(b > a)) return 0.0;
  // Work in the upper tail, where erfc keeps relative accuracy.
  if (a >= 0.0) return normal_cdf(-a) - normal_cdf(-b);
  if (b <= 0.0) return normal_cdf(b) - normal_cdf(a);
  return 1.0 - normal_cdf(a) - normal_cdf(-b);
}

ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double tol) {
  constexpr double kInvPhi = 0.61803398874989484820;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? ScalarOptimum{c, fc} : ScalarOptimum{d, fd};
}

ScalarOptimum scan_then_refine_max(const std::function<double(double)>& f, int scan_points,
                                   double tol) {
  const int n = std::max(scan_points, 2);
  std::vector<double> values(static_cast<std::size_t>(n));
  int best = 0;
  for (int i = 0; i < n; ++i) {
    values[i] = f(static_cast<double>(i) / (n - 1));
    if (values[i] > values[best]) best = i;
  }
  const double step = 1.0 / (n - 1);
  const double lo = std::max(0.0, (best - 1) * step);
  const double hi = std::min(1.0, (best + 1) * step);
  ScalarOptimum refined = golden_section_max(f, lo, hi, tol);
  const ScalarOptimum scanned{best * step, values[best]};
  return refined.value > scanned.value ? refined : scanned;
}

}  // namespace adsense::num
