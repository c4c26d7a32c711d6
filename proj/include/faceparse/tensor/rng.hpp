#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace faceparse {

/// xoshiro256** 1.0, state seeded by four successive splitmix64 outputs.
///
/// Every random draw in the project goes through this generator so that all
/// implementations produce identical streams. Derived quantities:
///   uniform01()  = (next() >> 11) * 2^-53
///   below(n)     = rejection sampling on next() against 2^64 - (2^64 mod n)
///   normal()     = Box-Muller using u1 = 1 - uniform01(), u2 = uniform01()
///   shuffle(xs)  = Fisher-Yates from the back, j = below(i + 1)
class Rng {
 public:
  static constexpr const char* kName = "xoshiro256**/splitmix64";
  static constexpr int kVersion = 1;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform01();
  double uniform(double lo, double hi);
  std::size_t below(std::size_t n);
  double normal();

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for an independent sub-stream, e.g. derive_seed(run_seed, tree_index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub);

}  // namespace faceparse
