#include "feddti/random.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace feddti {

namespace {
__extension__ using u128 = unsigned __int128;
}  // namespace

Fnv1a& Fnv1a::bytes(std::span<const unsigned char> data) noexcept {
  for (unsigned char b : data) {
    state_ ^= b;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::u64(std::uint64_t v) noexcept {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  return bytes(buf);
}

Fnv1a& Fnv1a::f64(double v) noexcept { return u64(std::bit_cast<std::uint64_t>(v)); }

Fnv1a& Fnv1a::str(std::string_view s) noexcept {
  u64(s.size());
  return bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
  Fnv1a h;
  h.bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
  return h.digest();
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label) noexcept {
  return splitmix64(seed ^ splitmix64(label ^ 0xD6E8FEB86659FD93ULL));
}

std::uint64_t derive_key(std::uint64_t seed, std::string_view label) noexcept {
  return derive_key(seed, fnv1a64(label));
}

double KeyedStream::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t KeyedStream::below(std::uint64_t n) noexcept {
  std::uint64_t x = next();
  auto m = static_cast<u128>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next();
      m = static_cast<u128>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double KeyedStream::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace feddti
