#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace dslr {

/// Identifier recorded in configs so other implementations can reproduce
/// random modes: mt19937_64 output, bounded by rejection sampling, consumed
/// by a descending Fisher-Yates shuffle.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64/rejection/fisher-yates-desc";

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Per-query seed: splitmix64(run_seed ^ fnv1a64(query_id)).
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view query_id) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// 0..n-1 in a seeded random order.
std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed);

}  // namespace dslr
