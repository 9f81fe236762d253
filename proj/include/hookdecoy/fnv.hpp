#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace hookdecoy {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// Incremental FNV-1a/64.
class Fnv1a {
 public:
  constexpr Fnv1a& add(std::uint8_t b) {
    h_ ^= b;
    h_ *= kFnvPrime;
    return *this;
  }
  constexpr Fnv1a& add(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) add(b);
    return *this;
  }
  constexpr Fnv1a& add(std::string_view s) {
    for (char c : s) add(static_cast<std::uint8_t>(c));
    return *this;
  }
  constexpr Fnv1a& add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) add(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }
  constexpr std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = kFnvOffset;
};

constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  return Fnv1a{}.add(bytes).digest();
}

}  // namespace hookdecoy
