#include "redus/rng.hpp"

#include <cassert>
#include <cmath>
#include <numbers>

namespace redus {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : seed_(seed), label_(label), engine_(mix64(seed ^ mix64(fnv1a64(label)))) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  assert(bound > 0);
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % bound;
  }
}

std::uint64_t derive_client_seed(std::uint64_t master, std::uint64_t client_id,
                                 std::uint64_t round) noexcept {
  const std::uint64_t key = (round << 32) ^ client_id;
  return master + 0x9e3779b97f4a7c15ULL * key;
}

std::uint64_t derive_repeat_seed(std::uint64_t base, std::uint64_t repeat) noexcept {
  return base + 0xd1b54a32d192ed03ULL * repeat;
}

}  // namespace redus
