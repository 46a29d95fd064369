#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace adsense {

using Engine = std::mt19937_64;

/// Mixes a base seed with a path of integer keys into an independent stream
/// seed. The mapping is a pure function, so any (base, keys...) tuple names the
/// same stream regardless of which worker draws from it.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept;

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

// Stream labels under a trial seed.
inline constexpr std::uint64_t kSignalStream = 0;
inline constexpr std::uint64_t kStage1NoiseStream = 1;
inline constexpr std::uint64_t kStage2NoiseStream = 2;

/// Fills `out` with i.i.d. standard normals from `engine`.
void fill_standard_normal(Engine& engine, double* out, std::size_t n);

}  // namespace adsense
