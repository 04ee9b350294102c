#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/encoder.hpp"
#include "promptlab/errors.hpp"
#include "promptlab/matrix.hpp"
#include "promptlab/rng.hpp"

namespace promptlab {

// Image-noise scale, frozen after sweeping it on default worlds. Template
// zero-shot tops out near 0.37 as sigma -> 0 (the template prompt shares only
// the classname token with the truth prompt, so their class embeddings align
// weakly), so the sweep picked the value where few-shot prompt tuning still
// recovers to within a few points of the truth prompt while every label-noise
// trend keeps a visible margin.
inline constexpr double kDefaultImageNoiseStd = 0.22;

struct WorldConfig {
  std::size_t class_count = 10;
  std::size_t shots_per_class = 16;
  std::size_t test_per_class = 100;
  std::size_t unlabeled_per_class = 64;
  double image_noise_std = kDefaultImageNoiseStd;
  std::uint64_t seed = 1;
  EncoderConfig encoder;

  void validate() const {
    if (class_count < 2) throw InvalidValueError("world: need at least 2 classes");
    if (shots_per_class == 0 || test_per_class == 0 || unlabeled_per_class == 0)
      throw InvalidValueError("world: per-class sample counts must be positive");
    if (image_noise_std < 0.0)
      throw InvalidValueError("world: image_noise_std must be nonnegative");
    encoder.validate();
  }

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

// A frozen encoder, the hidden truth prompt that defines the data, a visible
// template prompt, the classname vocabulary, and the resulting class
// prototypes in embedding space.
struct World {
  WorldConfig config;
  EncoderWeights weights;
  Matrix truth_prompt;     // hidden; generates the image distribution
  Matrix template_prompt;  // visible; what zero-shot methods start from
  ClassVocabulary vocab;
  Matrix prototypes;  // class_count x embed_dim, unit rows
};

inline World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.config = cfg;
  w.weights = init_encoder(cfg.encoder, cfg.seed);

  SeededRng base(cfg.seed);
  const std::size_t d = cfg.encoder.token_dim, m = cfg.encoder.context_len;
  SeededRng vocab_rng = base.derive(seed_tags::kVocab);
  w.vocab.tokens = gaussian_matrix(cfg.class_count, d,
                                   1.0 / std::sqrt(static_cast<double>(d)), vocab_rng);
  SeededRng truth_rng = base.derive(seed_tags::kTruthPrompt);
  w.truth_prompt = gaussian_matrix(m, d, 1.0, truth_rng);
  SeededRng tmpl_rng = base.derive(seed_tags::kTemplatePrompt);
  w.template_prompt = gaussian_matrix(m, d, 1.0, tmpl_rng);

  w.prototypes = class_embeddings(w.weights, w.truth_prompt, w.vocab);
  return w;
}

enum class Split { Train, Test, Unlabeled };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unlabeled: return "unlabeled";
  }
  throw UnsupportedOpError("split_name: bad split");
}

struct EmbeddingDataset {
  Matrix images;  // N x embed_dim, unit rows
  std::vector<std::size_t> true_labels;
  std::vector<std::size_t> observed_labels;
  // 1 while observed == true; injectors clear it on the rows they corrupt.
  std::vector<std::uint8_t> clean_flags;
  std::size_t num_classes = 0;

  std::size_t size() const { return true_labels.size(); }

  void validate() const {
    if (images.rows() != true_labels.size() ||
        true_labels.size() != observed_labels.size() ||
        observed_labels.size() != clean_flags.size())
      throw PreconditionError("dataset: column lengths disagree");
    for (std::size_t i = 0; i < size(); ++i) {
      if (true_labels[i] >= num_classes || observed_labels[i] >= num_classes)
        throw PreconditionError("dataset: label out of range");
      bool clean = observed_labels[i] == true_labels[i];
      if (clean != static_cast<bool>(clean_flags[i]))
        throw PreconditionError("dataset: clean flag contradicts labels");
    }
  }
};

// Images are the truth-prompt class prototype plus isotropic gaussian noise,
// pushed back onto the unit sphere. Each split draws from its own sub-stream
// of the world seed, so splits never alias.
inline EmbeddingDataset sample_dataset(const World& world, Split split) {
  const WorldConfig& cfg = world.config;
  std::size_t per_class = 0;
  std::uint64_t tag = 0;
  switch (split) {
    case Split::Train:
      per_class = cfg.shots_per_class;
      tag = seed_tags::kTrainSplit;
      break;
    case Split::Test:
      per_class = cfg.test_per_class;
      tag = seed_tags::kTestSplit;
      break;
    case Split::Unlabeled:
      per_class = cfg.unlabeled_per_class;
      tag = seed_tags::kUnlabeledSplit;
      break;
  }

  SeededRng rng = SeededRng(cfg.seed).derive(tag);
  const std::size_t e = cfg.encoder.embed_dim;
  EmbeddingDataset ds;
  ds.num_classes = cfg.class_count;
  ds.images = Matrix(cfg.class_count * per_class, e);
  std::size_t row = 0;
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      std::vector<double> v(e);
      for (std::size_t j = 0; j < e; ++j)
        v[j] = world.prototypes.at(c, j) + cfg.image_noise_std * rng.next_gaussian();
      l2_normalize_row_core(v.data(), ds.images.row(row), e);
      ds.true_labels.push_back(c);
      ds.observed_labels.push_back(c);
      ds.clean_flags.push_back(1);
    }
  }
  return ds;
}

// Zero-shot predictions of a fixed prompt over a dataset; the shared
// primitive under accuracy, confusion estimation, and pseudo-labeling.
inline std::vector<std::size_t> zero_shot_predictions(const World& world,
                                                      const Matrix& prompt,
                                                      const EmbeddingDataset& ds) {
  Matrix embs = class_embeddings(world.weights, prompt, world.vocab);
  std::vector<std::size_t> preds(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto p = posterior(ds.images.row_as_vector(i), embs, world.config.encoder.temperature);
    preds[i] = argmax(p);
  }
  return preds;
}

inline double zero_shot_accuracy(const World& world, const Matrix& prompt,
                                 const EmbeddingDataset& ds) {
  if (ds.size() == 0) throw PreconditionError("zero_shot_accuracy: empty dataset");
  auto preds = zero_shot_predictions(world, prompt, ds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (preds[i] == ds.true_labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

}  // namespace promptlab
