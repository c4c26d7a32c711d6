#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace faceparse {

/// 64-bit FNV-1a. Used for file digests, block checksums and version tokens.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      h_ ^= static_cast<std::uint64_t>(b);
      h_ *= kPrime;
    }
  }
  void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = kOffset;
};

inline std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

inline std::uint64_t fnv1a64(std::string_view s) {
  Fnv1a64 h;
  h.update(s);
  return h.digest();
}

}  // namespace faceparse
