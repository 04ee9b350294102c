#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "promptlab/noise.hpp"

using namespace promptlab;

namespace {

WorldConfig small_world_config() {
  WorldConfig cfg;
  cfg.class_count = 4;
  cfg.shots_per_class = 40;
  cfg.test_per_class = 5;
  cfg.unlabeled_per_class = 5;
  cfg.seed = 11;
  cfg.encoder.token_dim = 4;
  cfg.encoder.embed_dim = 4;
  cfg.encoder.context_len = 2;
  return cfg;
}

// A synthetic dataset with trivial images; label plumbing is all the noise
// injectors look at.
EmbeddingDataset label_only_dataset(std::size_t n, std::size_t k) {
  EmbeddingDataset ds;
  ds.num_classes = k;
  ds.images = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.at(i, 0) = 1.0;
    ds.true_labels.push_back(i % k);
    ds.observed_labels.push_back(i % k);
    ds.clean_flags.push_back(1);
  }
  return ds;
}

std::size_t count_corrupted(const EmbeddingDataset& ds) {
  std::size_t n = 0;
  for (auto f : ds.clean_flags)
    if (!f) ++n;
  return n;
}

}  // namespace

TEST_CASE("random noise corrupts exactly floor(rate * N) rows") {
  auto ds = label_only_dataset(160, 4);
  for (double rate : {0.0, 0.125, 0.25, 0.5, 1.0}) {
    auto noisy = inject_random_noise(ds, rate, 99);
    noisy.validate();
    REQUIRE(count_corrupted(noisy) ==
            static_cast<std::size_t>(std::floor(rate * 160.0)));
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (!noisy.clean_flags[i]) {
        REQUIRE(noisy.observed_labels[i] != noisy.true_labels[i]);
        REQUIRE(noisy.observed_labels[i] < 4);
      } else {
        REQUIRE(noisy.observed_labels[i] == noisy.true_labels[i]);
      }
    }
  }
}

TEST_CASE("rate zero is the identity") {
  auto ds = label_only_dataset(50, 3);
  auto out = inject_random_noise(ds, 0.0, 5);
  REQUIRE(out.observed_labels == ds.observed_labels);
  REQUIRE(out.clean_flags == ds.clean_flags);
  REQUIRE(out.images == ds.images);
}

TEST_CASE("full corruption with two classes flips every label") {
  auto ds = label_only_dataset(20, 2);
  auto out = inject_random_noise(ds, 1.0, 7);
  for (std::size_t i = 0; i < out.size(); ++i)
    REQUIRE(out.observed_labels[i] == 1 - out.true_labels[i]);
}

TEST_CASE("wrong labels are drawn uniformly over the other classes") {
  auto ds = label_only_dataset(10000, 10);
  auto out = inject_random_noise(ds, 1.0, 123);
  std::vector<std::size_t> hits(10, 0);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.true_labels[i] != 0) continue;
    ++zeros;
    ++hits[out.observed_labels[i]];
  }
  REQUIRE(hits[0] == 0);
  for (std::size_t j = 1; j < 10; ++j) {
    double frac = static_cast<double>(hits[j]) / static_cast<double>(zeros);
    REQUIRE(frac > 0.09 - 0.03);
    REQUIRE(frac < 0.13 + 0.03);
  }
}

TEST_CASE("noise injection is deterministic in its seed") {
  auto ds = label_only_dataset(64, 5);
  auto a = inject_random_noise(ds, 0.5, 42);
  auto b = inject_random_noise(ds, 0.5, 42);
  REQUIRE(a.observed_labels == b.observed_labels);
  REQUIRE(a.clean_flags == b.clean_flags);
  auto c = inject_random_noise(ds, 0.5, 43);
  REQUIRE(a.observed_labels != c.observed_labels);
}

TEST_CASE("rates outside the unit interval are rejected") {
  auto ds = label_only_dataset(10, 3);
  REQUIRE_THROWS_AS(inject_random_noise(ds, -0.1, 1), InvalidValueError);
  REQUIRE_THROWS_AS(inject_random_noise(ds, 1.5, 1), InvalidValueError);
}

TEST_CASE("confusion noise follows the off-diagonal argmax, ties to low index") {
  auto ds = label_only_dataset(30, 3);
  Matrix conf = Matrix::from_rows({{0.2, 0.5, 0.3},
                                   {0.4, 0.4, 0.2},
                                   {0.3, 0.3, 0.4}});
  auto out = inject_confusion_noise(ds, 1.0, conf, 9);
  out.validate();
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (out.true_labels[i]) {
      case 0: REQUIRE(out.observed_labels[i] == 1); break;
      case 1: REQUIRE(out.observed_labels[i] == 0); break;  // 0.4 beats 0.2
      case 2: REQUIRE(out.observed_labels[i] == 0); break;  // tie, lowest wins
    }
  }

  // The identity matrix has a flat off-diagonal, so everything ties low.
  auto id = inject_confusion_noise(ds, 1.0, Matrix::identity(3), 9);
  for (std::size_t i = 0; i < id.size(); ++i)
    REQUIRE(id.observed_labels[i] == (id.true_labels[i] == 0 ? 1 : 0));
}

TEST_CASE("confusion noise validates its matrix") {
  auto ds = label_only_dataset(12, 3);
  REQUIRE_THROWS_AS(inject_confusion_noise(ds, 0.5, Matrix(2, 2), 1),
                    DimMismatchError);
  Matrix bad = Matrix::from_rows({{0.5, 0.2, 0.1}, {0, 1, 0}, {0, 0, 1}});
  REQUIRE_THROWS_AS(inject_confusion_noise(ds, 0.5, bad, 1), InvalidValueError);
  Matrix neg = Matrix::from_rows({{1.5, -0.5, 0.0}, {0, 1, 0}, {0, 0, 1}});
  REQUIRE_THROWS_AS(inject_confusion_noise(ds, 0.5, neg, 1), InvalidValueError);
}

TEST_CASE("confusion and random noise share the target selection") {
  auto ds = label_only_dataset(40, 4);
  auto r = inject_random_noise(ds, 0.25, 77);
  auto c = inject_confusion_noise(ds, 0.25, Matrix::identity(4), 77);
  REQUIRE(r.clean_flags == c.clean_flags);
}

TEST_CASE("zero-shot confusion rows are probability distributions") {
  World w = generate_world(small_world_config());
  auto ds = sample_dataset(w, Split::Train);
  Matrix conf = zero_shot_confusion(w, ds, 5, 31);
  REQUIRE(conf.rows() == 4);
  REQUIRE(conf.cols() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      REQUIRE(conf.at(r, c) >= 0.0);
      sum += conf.at(r, c);
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-9);
  }

  Matrix again = zero_shot_confusion(w, ds, 5, 31);
  REQUIRE(conf == again);
  Matrix other = zero_shot_confusion(w, ds, 5, 32);
  REQUIRE_FALSE(conf == other);
}

TEST_CASE("zero-shot confusion demands runs and full class coverage") {
  World w = generate_world(small_world_config());
  auto ds = sample_dataset(w, Split::Train);
  REQUIRE_THROWS_AS(zero_shot_confusion(w, ds, 0, 1), PreconditionError);

  // Drop every class-3 sample.
  EmbeddingDataset partial;
  partial.num_classes = ds.num_classes;
  std::size_t keep = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.true_labels[i] != 3) ++keep;
  partial.images = Matrix(keep, ds.images.cols());
  std::size_t r = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.true_labels[i] == 3) continue;
    for (std::size_t j = 0; j < ds.images.cols(); ++j)
      partial.images.at(r, j) = ds.images.at(i, j);
    partial.true_labels.push_back(ds.true_labels[i]);
    partial.observed_labels.push_back(ds.observed_labels[i]);
    partial.clean_flags.push_back(ds.clean_flags[i]);
    ++r;
  }
  REQUIRE_THROWS_AS(zero_shot_confusion(w, partial, 2, 1), PreconditionError);
}
