#include <atomic>
#include <cstdlib>
#include <string>

#include "adsense/error.hpp"
#include "adsense/simd/kernels.hpp"

namespace adsense::simd {
namespace {

bool cpu_has_avx2() {
#if defined(ADSENSE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const bool avx2 = cpu_has_avx2();
  if (const char* env = std::getenv("ADSENSE_ISA")) {
    const std::string want{env};
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && avx2) return Isa::avx2;
  }
  return avx2 ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool avx2 = cpu_has_avx2();
  return avx2;
}

const KernelTable& kernels(Isa isa) {
  if (!isa_available(isa)) {
    throw UsageError("instruction set '" + std::string{isa_name(isa)} + "' is not available");
  }
#if defined(ADSENSE_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2::table;
#endif
  return scalar::table;
}

const KernelTable& kernels() { return kernels(current().load(std::memory_order_relaxed)); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw UsageError("instruction set '" + std::string{isa_name(isa)} + "' is not available");
  }
  current().store(isa, std::memory_order_relaxed);
}

}  // namespace adsense::simd
