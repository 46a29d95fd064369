#include "adsense/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace adsense {
namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

void fill_standard_normal(Engine& engine, double* out, std::size_t n) {
  boost::random::normal_distribution<double> normal{0.0, 1.0};
  for (std::size_t i = 0; i < n; ++i) out[i] = normal(engine);
}

}  // namespace adsense
