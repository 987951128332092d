#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace feddti {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Incremental 64-bit FNV-1a. Integers are fed as 8 little-endian bytes so the
/// digest does not depend on host byte order.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xCBF29CE484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001B3ULL;

  Fnv1a& bytes(std::span<const unsigned char> data) noexcept;
  Fnv1a& u64(std::uint64_t v) noexcept;
  Fnv1a& f64(double v) noexcept;
  // Length-prefixed, so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& str(std::string_view s) noexcept;

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffsetBasis;
};

std::uint64_t fnv1a64(std::string_view s) noexcept;

// Stream-key derivation: folds a path of labels into a seed.
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label) noexcept;
std::uint64_t derive_key(std::uint64_t seed, std::string_view label) noexcept;

template <class First, class... Labels>
  requires(sizeof...(Labels) > 0)
std::uint64_t derive_key(std::uint64_t seed, First first, Labels... rest) noexcept {
  return derive_key(derive_key(seed, first), rest...);
}

/// Counter-based generator: the i-th draw is a pure function of (key, i), so
/// any stream can be reproduced independently of every other stream.
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t at(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }
  std::uint64_t next() noexcept { return at(counter_++); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Uniform integer in [0, n); n must be positive. Unbiased (Lemire).
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept;

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace feddti
