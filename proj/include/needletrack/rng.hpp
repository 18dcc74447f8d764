#pragma once

#include <cstdint>
#include <limits>

namespace needletrack {

/// Counter-seeded 64-bit generator (splitmix64). Cheap to construct, which
/// lets every (trial, step, particle) tuple own an independent stream; that
/// keeps parallel sampling deterministic regardless of thread scheduling.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Mix a seed with stream identifiers into a new seed. Order-sensitive.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) {
  SplitMix64 g(seed ^ (0x6a09e667f3bcc909ULL + a * 0x9e3779b97f4a7c15ULL));
  return g();
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(seed, a, b), c);
}

}  // namespace needletrack
