#include "faceparse/tensor/rng.hpp"

#include <cmath>
#include <numbers>

#include "faceparse/error.hpp"

namespace faceparse {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t st = seed;
  for (auto& word : s_) word = splitmix64(st);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = (0 - bound) % bound;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = next();
    if (r >= limit) return static_cast<std::size_t>(r % bound);
  }
}

double Rng::normal() {
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t st = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  splitmix64(st);
  return splitmix64(st);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
  return derive_seed(derive_seed(seed, stream), sub);
}

}  // namespace faceparse
