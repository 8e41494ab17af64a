#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tsctl {

// splitmix64 mixing step; used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic per-stream seed: results do not depend on the order in
// which streams are consumed, so parallel work can be split freely.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

// Seeded random stream. All mappings from raw 64-bit output to doubles and
// integers are written out explicitly (std::uniform_real_distribution and
// friends are implementation-defined, which would break bit-reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform double in [0, 1), 53-bit resolution
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // exponential waiting time with the given rate; rate must be > 0
  double exponential(double rate) {
    return -std::log1p(-uniform01()) / rate;
  }

  // uniform integer in [0, n); n must be >= 1
  int uniform_below(int n) {
    auto wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<int>((wide * static_cast<unsigned __int128>(n)) >> 64);
  }

  // true with probability p
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tsctl
