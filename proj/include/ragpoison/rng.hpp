#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ragpoison {

/// Seeded random stream with platform-independent output.
///
/// std::mt19937_64 has a standardized sequence, but the std distributions do
/// not, so the conversions to uniform reals, integers and normals live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives an independent seed from a base seed and a list of tags, e.g.
/// derive_seed(seed, {"query", query_id, "poison", "3"}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> tags);

}  // namespace ragpoison
