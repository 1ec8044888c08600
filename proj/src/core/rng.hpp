#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace metalora {

// Deterministic, platform-independent PRNG (xoshiro256++) seeded through
// splitmix64.  All randomness in the toolkit flows through streams derived
// from a root seed plus a purpose tag and counters, so any point in a run
// can be reproduced without replaying a global stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller (no cached spare; fully stateless per call pair).
  double normal();
  double normal(double mean, double stddev);

  // Fisher-Yates shuffle of indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t s_[4];
};

// Derives a child seed from (root, tag, counters...).  FNV-1a over the tag
// bytes and counter words, then mixed with splitmix64.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0, std::uint64_t c1);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0, std::uint64_t c1,
                          std::uint64_t c2);

}  // namespace metalora
