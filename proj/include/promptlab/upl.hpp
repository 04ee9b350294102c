#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptlab/encoder.hpp"
#include "promptlab/errors.hpp"
#include "promptlab/losses.hpp"
#include "promptlab/methods.hpp"
#include "promptlab/rng.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

enum class SelectionStrategy { TopK, Random };

inline const char* selection_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::TopK: return "topk";
    case SelectionStrategy::Random: return "random";
  }
  throw PreconditionError("selection_name: bad strategy");
}

inline SelectionStrategy selection_from_name(const std::string& name) {
  for (SelectionStrategy s : {SelectionStrategy::TopK, SelectionStrategy::Random})
    if (name == selection_name(s)) return s;
  throw InvalidValueError("selection: unknown strategy '" + name + "'");
}

struct UplConfig {
  std::size_t k = 16;
  SelectionStrategy selection = SelectionStrategy::TopK;
  LossSpec loss = LossSpec::ce();
  std::size_t ensemble_size = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (k < 1) throw InvalidValueError("upl: k must be >= 1");
    if (ensemble_size < 1) throw InvalidValueError("upl: ensemble_size must be >= 1");
    if (loss.kind != LossKind::CE && loss.kind != LossKind::GCE)
      throw InvalidValueError("upl: loss must be ce or gce, got " +
                              loss_kind_name(loss.kind));
    loss.validate();
  }

  friend bool operator==(const UplConfig&, const UplConfig&) = default;
};

// Zero-shot labels over an unlabeled pool. True labels ride along strictly for
// precision reporting; nothing downstream selects or trains on them.
struct PseudoLabelSet {
  std::vector<std::size_t> indices;  // rows of the pool dataset
  std::vector<std::size_t> pseudo_labels;
  std::vector<double> confidences;  // max posterior entry per sample
  std::vector<std::size_t> true_labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return indices.size(); }
};

inline PseudoLabelSet pseudo_label(const World& world, const EmbeddingDataset& pool,
                                   const Matrix& prompt) {
  if (pool.size() == 0) throw PreconditionError("pseudo_label: empty pool");
  PseudoLabelSet out;
  out.num_classes = pool.num_classes;
  const Matrix embs = class_embeddings(world.weights, prompt, world.vocab);
  const double tau = world.config.encoder.temperature;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto probs = posterior(pool.images.row_as_vector(i), embs, tau);
    std::size_t label = argmax(probs);
    out.indices.push_back(i);
    out.pseudo_labels.push_back(label);
    out.confidences.push_back(probs[label]);
    out.true_labels.push_back(pool.true_labels[i]);
  }
  return out;
}

inline PseudoLabelSet pseudo_label(const World& world, const EmbeddingDataset& pool) {
  return pseudo_label(world, pool, world.template_prompt);
}

struct SelectedSamples {
  EmbeddingDataset data;
  std::vector<std::string> warnings;  // shortfall and empty-class notes
};

inline SelectedSamples select_samples(const EmbeddingDataset& pool,
                                      const PseudoLabelSet& labels, std::size_t k,
                                      SelectionStrategy strategy, std::uint64_t seed) {
  if (labels.size() == 0) throw PreconditionError("select_samples: empty pseudo-label set");
  if (k < 1) throw InvalidValueError("select_samples: k must be >= 1");

  std::vector<std::vector<std::size_t>> members(labels.num_classes);
  for (std::size_t pos = 0; pos < labels.size(); ++pos)
    members[labels.pseudo_labels[pos]].push_back(pos);

  SelectedSamples out;
  std::vector<std::size_t> chosen;
  SeededRng selection_root = SeededRng(seed).derive(seed_tags::kSelection);
  for (std::size_t c = 0; c < labels.num_classes; ++c) {
    const auto& group = members[c];
    if (group.empty()) {
      out.warnings.push_back("class " + std::to_string(c) +
                             " has no pseudo-labeled samples");
      continue;
    }
    std::vector<std::size_t> picks;
    if (group.size() <= k) {
      picks = group;
      if (group.size() < k)
        out.warnings.push_back("class " + std::to_string(c) + " has only " +
                               std::to_string(group.size()) + " of " +
                               std::to_string(k) + " requested samples");
    } else if (strategy == SelectionStrategy::TopK) {
      picks = group;
      std::sort(picks.begin(), picks.end(), [&](std::size_t a, std::size_t b) {
        if (labels.confidences[a] != labels.confidences[b])
          return labels.confidences[a] > labels.confidences[b];
        return a < b;
      });
      picks.resize(k);
    } else {
      SeededRng rng = selection_root.derive(c);
      for (std::size_t slot : rng.sample_indices(group.size(), k))
        picks.push_back(group[slot]);
    }
    // Canonical row order regardless of strategy.
    std::sort(picks.begin(), picks.end());
    chosen.insert(chosen.end(), picks.begin(), picks.end());
  }

  EmbeddingDataset& ds = out.data;
  ds.num_classes = labels.num_classes;
  ds.images = Matrix(chosen.size(), pool.images.cols());
  for (std::size_t row = 0; row < chosen.size(); ++row) {
    const std::size_t pos = chosen[row];
    const std::size_t src = labels.indices[pos];
    for (std::size_t col = 0; col < pool.images.cols(); ++col)
      ds.images.at(row, col) = pool.images.at(src, col);
    ds.true_labels.push_back(labels.true_labels[pos]);
    ds.observed_labels.push_back(labels.pseudo_labels[pos]);
    ds.clean_flags.push_back(
        labels.pseudo_labels[pos] == labels.true_labels[pos] ? 1 : 0);
  }
  ds.validate();
  return out;
}

inline double pseudo_precision(const PseudoLabelSet& labels) {
  if (labels.size() == 0) throw PreconditionError("pseudo_precision: empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels.pseudo_labels[i] == labels.true_labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double pseudo_precision(const EmbeddingDataset& selected) {
  if (selected.size() == 0) throw PreconditionError("pseudo_precision: empty set");
  std::size_t hits = 0;
  for (std::uint8_t f : selected.clean_flags) hits += f ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(selected.size());
}

// Four prompts by default, each seeded base + index, trained on the same
// pseudo-labeled selection.
inline std::vector<MethodState> train_ensemble(const World& world,
                                               const EmbeddingDataset& selected,
                                               const UplConfig& config,
                                               const TrainConfig& train_cfg) {
  config.validate();
  if (selected.size() == 0) throw PreconditionError("train_ensemble: empty selection");
  const MethodSpec spec{MethodKind::PromptTuning, kContextFromWorld};
  std::vector<MethodState> models;
  for (std::size_t i = 0; i < config.ensemble_size; ++i) {
    const std::uint64_t model_seed = config.seed + i;
    MethodState state = build_method_state(spec, world, model_seed);
    TrainConfig tc = train_cfg;
    tc.loss = config.loss;
    tc.seed = model_seed;
    train(state, spec, world, selected, tc);
    models.push_back(std::move(state));
  }
  return models;
}

inline std::vector<double> ensemble_predict(const std::vector<MethodState>& models,
                                            const World& world,
                                            const std::vector<double>& image) {
  if (models.empty()) throw PreconditionError("ensemble_predict: no models");
  const double tau = world.config.encoder.temperature;
  std::vector<double> mean;
  for (const MethodState& m : models) {
    auto p = posterior(image, method_class_matrix(m, world), tau);
    if (mean.empty()) mean.assign(p.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) mean[j] += p[j];
  }
  for (double& v : mean) v /= static_cast<double>(models.size());
  return mean;
}

inline double evaluate_ensemble_accuracy(const std::vector<MethodState>& models,
                                         const World& world,
                                         const EmbeddingDataset& test) {
  if (models.empty()) throw PreconditionError("evaluate_ensemble_accuracy: no models");
  if (test.size() == 0)
    throw PreconditionError("evaluate_ensemble_accuracy: empty dataset");
  const double tau = world.config.encoder.temperature;
  std::vector<Matrix> rows;
  for (const MethodState& m : models) rows.push_back(method_class_matrix(m, world));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto image = test.images.row_as_vector(i);
    std::vector<double> mean(test.num_classes, 0.0);
    for (const Matrix& r : rows) {
      auto p = posterior(image, r, tau);
      for (std::size_t j = 0; j < p.size(); ++j) mean[j] += p[j];
    }
    for (double& v : mean) v /= static_cast<double>(models.size());
    if (argmax(mean) == test.true_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace promptlab
