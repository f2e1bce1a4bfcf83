#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace msrl {

/// xoshiro256** seeded through splitmix64.
///
/// Every draw is defined bit-for-bit by this header so that a seed means the
/// same stream on every platform. Independent streams are derived with
/// `Rng(seed, stream)`, which hashes the pair through splitmix64 instead of
/// jumping, so stream indices can be arbitrary (restart index, fold index...).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }
  result_type next();

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Unbiased integer in [0, n) by rejection (Lemire's method is avoided to
  /// keep the sequence trivially portable).
  std::size_t below(std::size_t n);

  /// Fisher-Yates shuffle driven by `below`.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t s_[4];
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace msrl
