#include "core/rng.hpp"

#include <cmath>

#include "core/common.hpp"

namespace metalora {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw ArgError("uniform_index: n must be > 0");
  return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

double Rng::normal() {
  // Box-Muller; u1 kept away from 0 so the log stays finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

namespace {
std::uint64_t mix_tag(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = fnv1a(0xcbf29ce484222325ULL, tag.data(), tag.size());
  h = fnv1a(h, &root, sizeof(root));
  return h;
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t x = mix_tag(root, tag);
  return splitmix64(x);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0) {
  std::uint64_t h = fnv1a(mix_tag(root, tag), &c0, sizeof(c0));
  return splitmix64(h);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0, std::uint64_t c1) {
  std::uint64_t h = fnv1a(mix_tag(root, tag), &c0, sizeof(c0));
  h = fnv1a(h, &c1, sizeof(c1));
  return splitmix64(h);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t c0, std::uint64_t c1,
                          std::uint64_t c2) {
  std::uint64_t h = fnv1a(mix_tag(root, tag), &c0, sizeof(c0));
  h = fnv1a(h, &c1, sizeof(c1));
  h = fnv1a(h, &c2, sizeof(c2));
  return splitmix64(h);
}

}  // namespace metalora
