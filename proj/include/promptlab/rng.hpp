#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "promptlab/errors.hpp"
#include "promptlab/matrix.hpp"

namespace promptlab {

// splitmix64 finalizer. Also used to fold tags into seeds when deriving
// sub-streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// Deterministic generator: splitmix64 for the integer stream, Box-Muller for
// gaussians. The integer/uniform stream is bit-exact on every platform; the
// gaussian mapping goes through libm (sqrt, log, cos) so its last ulp follows
// the platform's libm. std::mt19937 distributions are avoided entirely since
// the standard does not pin their output.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform in [0, 1), 53 usable bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_gaussian() {
    // u1 in (0, 1] so the log stays finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw PreconditionError("next_below: n must be positive");
    std::uint64_t threshold = (UINT64_MAX / n) * n;
    std::uint64_t x = next_u64();
    while (x >= threshold) x = next_u64();
    return x % n;
  }

  // Child stream keyed off the original seed, not the current state, so the
  // derivation tree is independent of how much the parent has consumed.
  SeededRng derive(std::uint64_t tag) const {
    return SeededRng(mix64(seed_ + kGolden * (tag + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k entries of a Fisher-Yates pass over 0..n-1, i.e. a uniform sample
  // without replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw PreconditionError("sample_indices: k exceeds n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Derive a seed value (rather than a generator) from a seed and a tag chain.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + kGolden * (tag + 1));
}

// Fills row-major, one gaussian per entry.
inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev,
                              SeededRng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = stddev * rng.next_gaussian();
  return m;
}

// Sub-stream tags. Every consumer of world-level randomness derives its
// stream from the world seed with one of these, so adding a consumer never
// shifts another consumer's draws.
namespace seed_tags {
inline constexpr std::uint64_t kVocab = 1;
inline constexpr std::uint64_t kTruthPrompt = 2;
inline constexpr std::uint64_t kTemplatePrompt = 3;
inline constexpr std::uint64_t kTrainSplit = 4;
inline constexpr std::uint64_t kTestSplit = 5;
inline constexpr std::uint64_t kUnlabeledSplit = 6;
inline constexpr std::uint64_t kNoise = 7;
inline constexpr std::uint64_t kMethodInit = 8;
inline constexpr std::uint64_t kTrainLoop = 9;
inline constexpr std::uint64_t kProbe = 10;
inline constexpr std::uint64_t kConfusionRuns = 11;
inline constexpr std::uint64_t kSelection = 12;
}  // namespace seed_tags

}  // namespace promptlab
