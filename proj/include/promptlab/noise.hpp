#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/rng.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

enum class NoiseKind { Random, Confusion };

inline std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::Random: return "random";
    case NoiseKind::Confusion: return "confusion";
  }
  throw UnsupportedOpError("noise_kind_name: bad kind");
}

inline NoiseKind noise_kind_from_name(const std::string& name) {
  for (NoiseKind k : {NoiseKind::Random, NoiseKind::Confusion})
    if (name == noise_kind_name(k)) return k;
  throw InvalidValueError("noise: unknown kind '" + name + "'");
}

// One corruption recipe. A confusion entry may leave the matrix empty; the
// sweep fills it per world from the random-prompt confusion estimate before
// injection, which requires it.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Random;
  double rate = 0.0;
  Matrix confusion;  // K x K row-stochastic when kind == Confusion

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

namespace detail {

// Exactly floor(rate * N) rows get corrupted, chosen without replacement and
// then visited in ascending order so the relabel draws are reproducible.
inline std::vector<std::size_t> corruption_targets(std::size_t n, double rate,
                                                   SeededRng& rng) {
  if (rate < 0.0 || rate > 1.0)
    throw InvalidValueError("noise: rate must lie in [0, 1], got " + std::to_string(rate));
  auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  auto targets = rng.sample_indices(n, count);
  std::sort(targets.begin(), targets.end());
  return targets;
}

}  // namespace detail

// Uniform label noise: each corrupted row draws a wrong class uniformly from
// the other K-1.
inline EmbeddingDataset inject_random_noise(EmbeddingDataset ds, double rate,
                                            std::uint64_t seed) {
  if (ds.num_classes < 2)
    throw PreconditionError("inject_random_noise: need at least 2 classes");
  SeededRng rng(seed);
  for (std::size_t idx : detail::corruption_targets(ds.size(), rate, rng)) {
    std::size_t truth = ds.true_labels[idx];
    std::size_t wrong = rng.next_below(ds.num_classes - 1);
    if (wrong >= truth) ++wrong;
    ds.observed_labels[idx] = wrong;
    ds.clean_flags[idx] = 0;
  }
  return ds;
}

// Row-stochastic matrix of zero-shot prediction rates under random prompts:
// entry (c, j) is how often class-c samples get predicted as j, averaged over
// `runs` independently drawn prompts.
inline Matrix zero_shot_confusion(const World& world, const EmbeddingDataset& ds,
                                  std::size_t runs, std::uint64_t seed) {
  if (runs == 0) throw PreconditionError("zero_shot_confusion: runs must be positive");
  const std::size_t k = world.config.class_count;
  std::vector<std::size_t> class_counts(k, 0);
  for (std::size_t label : ds.true_labels) ++class_counts[label];
  for (std::size_t c = 0; c < k; ++c)
    if (class_counts[c] == 0)
      throw PreconditionError("zero_shot_confusion: class " + std::to_string(c) +
                              " has no samples");

  SeededRng base(seed);
  Matrix acc(k, k);
  const std::size_t m = world.config.encoder.context_len;
  const std::size_t d = world.config.encoder.token_dim;
  for (std::size_t r = 0; r < runs; ++r) {
    SeededRng rng = base.derive(r);
    // Probe prompts share the scale of the world's own prompts.
    Matrix prompt = gaussian_matrix(m, d, 1.0, rng);
    auto preds = zero_shot_predictions(world, prompt, ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::size_t truth = ds.true_labels[i];
      acc.at(truth, preds[i]) +=
          1.0 / (static_cast<double>(class_counts[truth]) * static_cast<double>(runs));
    }
  }
  return acc;
}

// Structured noise: a corrupted row of class c becomes the class most often
// confused with c, i.e. the off-diagonal argmax of row c (lowest index wins
// ties). Uses the same target selection as the uniform injector.
inline EmbeddingDataset inject_confusion_noise(EmbeddingDataset ds, double rate,
                                               const Matrix& confusion,
                                               std::uint64_t seed) {
  const std::size_t k = ds.num_classes;
  if (k < 2) throw PreconditionError("inject_confusion_noise: need at least 2 classes");
  if (confusion.rows() != k || confusion.cols() != k)
    throw DimMismatchError("inject_confusion_noise: matrix is " + shape_str(confusion) +
                           ", expected " + std::to_string(k) + "x" + std::to_string(k));
  for (std::size_t r = 0; r < k; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (confusion.at(r, c) < 0.0)
        throw InvalidValueError("inject_confusion_noise: negative entry");
      sum += confusion.at(r, c);
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw InvalidValueError("inject_confusion_noise: row " + std::to_string(r) +
                              " sums to " + std::to_string(sum));
  }

  // Precompute each class's most-confused partner.
  std::vector<std::size_t> partner(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = c == 0 ? 1 : 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      if (confusion.at(c, j) > confusion.at(c, best)) best = j;
    }
    partner[c] = best;
  }

  SeededRng rng(seed);
  for (std::size_t idx : detail::corruption_targets(ds.size(), rate, rng)) {
    ds.observed_labels[idx] = partner[ds.true_labels[idx]];
    ds.clean_flags[idx] = 0;
  }
  return ds;
}

// Prompt draws used to estimate the confusion matrix when a spec leaves it empty.
constexpr std::size_t kConfusionRuns = 100;

inline EmbeddingDataset apply_noise(EmbeddingDataset ds, const NoiseSpec& spec,
                                    std::uint64_t seed) {
  if (spec.kind == NoiseKind::Random)
    return inject_random_noise(std::move(ds), spec.rate, seed);
  if (spec.confusion.rows() == 0)
    throw InvalidValueError("apply_noise: confusion kind requires a matrix");
  return inject_confusion_noise(std::move(ds), spec.rate, spec.confusion, seed);
}

}  // namespace promptlab
