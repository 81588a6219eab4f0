#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace redus {

/// Named, seeded random stream.
///
/// The stream is keyed by (seed, label) so that independent consumers
/// (weight init, dropout masks, shuffling, partitioning, synthetic data)
/// never share draws. All derived quantities use hand-written transforms
/// on top of std::mt19937_64, whose output sequence is fixed by the
/// standard; the std:: distributions are implementation-defined and are
/// deliberately not used.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller, no cached second value).
  double normal();

  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Fisher-Yates shuffle driven by below().
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used for seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Seed for client `client_id` in federated round `round` (both 0-based).
/// Client 0 of round 0 receives the master seed unchanged, so a single-client
/// single-round federation replays a centralized run with the same seed.
std::uint64_t derive_client_seed(std::uint64_t master, std::uint64_t client_id,
                                 std::uint64_t round) noexcept;

/// Seed for repeat `repeat` of a sweep cell; repeat 0 keeps the base seed.
std::uint64_t derive_repeat_seed(std::uint64_t base, std::uint64_t repeat) noexcept;

}  // namespace redus
