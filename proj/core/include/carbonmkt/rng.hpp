#pragma once

#include <cmath>
#include <cstdint>

namespace carbonmkt {

// Counter-based Gaussian draws: every increment is a pure function of
// (seed, path, particle, channel, step), so any slice of the noise can be
// regenerated in isolation and execution order never changes results.
namespace rng {

inline constexpr std::uint64_t kCommonParticle = ~std::uint64_t{0};

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t path,
                                  std::uint64_t particle, std::uint64_t channel,
                                  std::uint64_t step) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ path);
  h = mix64(h ^ particle);
  h = mix64(h ^ channel);
  h = mix64(h ^ step);
  return h;
}

inline double to_open_unit(std::uint64_t bits) {
  // (0, 1): top 53 bits, shifted away from zero.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw for one noise increment.
inline double gaussian(std::uint64_t seed, std::uint64_t path,
                       std::uint64_t particle, std::uint64_t channel,
                       std::uint64_t step) {
  const std::uint64_t h = counter_hash(seed, path, particle, channel, step);
  const double u1 = to_open_unit(h);
  const double u2 = to_open_unit(mix64(h ^ 0x5851f42d4c957f2dULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace rng
}  // namespace carbonmkt
