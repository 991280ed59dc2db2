#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sceneprior {

// SplitMix64 finalizer. Used to fan a master seed out into independent
// per-purpose streams keyed by counters (epoch, scene, ...), so that any
// stream can be reconstructed without replaying the ones before it.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(master ^ mix_seed(a)) ^ b) ^ mix_seed(c + 0x51ed27ULL));
}

using Rng = std::mt19937_64;

inline std::vector<double> gaussian_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = normal(rng);
  return out;
}

}  // namespace sceneprior
