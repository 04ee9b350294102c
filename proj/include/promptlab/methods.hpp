#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "promptlab/encoder.hpp"
#include "promptlab/errors.hpp"
#include "promptlab/losses.hpp"
#include "promptlab/matrix.hpp"
#include "promptlab/rng.hpp"
#include "promptlab/tape.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

enum class MethodKind {
  PromptTuning,
  ClassifierR,
  ClassifierC,
  TEncFT,
  FullPromptTuning,
  CLSTuning,
  ZeroShot,
};

inline const char* method_kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::PromptTuning: return "prompt_tuning";
    case MethodKind::ClassifierR: return "classifier_r";
    case MethodKind::ClassifierC: return "classifier_c";
    case MethodKind::TEncFT: return "tenc_ft";
    case MethodKind::FullPromptTuning: return "full_prompt_tuning";
    case MethodKind::CLSTuning: return "cls_tuning";
    case MethodKind::ZeroShot: return "zero_shot";
  }
  throw PreconditionError("method_kind_name: unknown kind");
}

inline MethodKind method_kind_from_name(const std::string& name) {
  for (MethodKind k : {MethodKind::PromptTuning, MethodKind::ClassifierR,
                       MethodKind::ClassifierC, MethodKind::TEncFT,
                       MethodKind::FullPromptTuning, MethodKind::CLSTuning,
                       MethodKind::ZeroShot})
    if (name == method_kind_name(k)) return k;
  throw InvalidValueError("method: unknown kind '" + name + "'");
}

// context_len sentinel: use the world's configured context length.
constexpr int kContextFromWorld = -1;

struct MethodSpec {
  MethodKind kind = MethodKind::PromptTuning;
  int context_len = kContextFromWorld;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

inline bool method_trains_prompt(MethodKind k) {
  return k == MethodKind::PromptTuning || k == MethodKind::FullPromptTuning;
}

inline bool method_trains_vocab(MethodKind k) {
  return k == MethodKind::FullPromptTuning || k == MethodKind::CLSTuning;
}

inline bool method_is_classifier(MethodKind k) {
  return k == MethodKind::ClassifierR || k == MethodKind::ClassifierC;
}

// Classifier kinds never feed a prompt through the encoder, so their context
// resolves to 0 regardless of the requested value.
inline std::size_t resolve_context(const MethodSpec& spec, std::size_t world_context) {
  if (method_is_classifier(spec.kind)) return 0;
  const int m = spec.context_len == kContextFromWorld
                    ? static_cast<int>(world_context)
                    : spec.context_len;
  if (m < 0)
    throw InvalidValueError("context_len: must be nonnegative, got " + std::to_string(m));
  if (m == 0 && method_trains_prompt(spec.kind))
    throw InvalidCombinationError(std::string("context_len 0 with ") +
                                  method_kind_name(spec.kind) +
                                  ": no prompt rows to train");
  if (static_cast<std::size_t>(m) > world_context)
    throw InvalidValueError("context_len " + std::to_string(m) +
                            " exceeds world context " + std::to_string(world_context));
  return static_cast<std::size_t>(m);
}

// Parameter tensors plus momentum buffers for whatever the method trains.
// Anything not listed by trainable_tensors stays bitwise frozen through train().
struct MethodState {
  MethodKind kind = MethodKind::ZeroShot;
  std::size_t context_len = 0;
  Matrix prompt;           // context rows; fixed template copy unless the kind trains it
  Matrix vocab_copy;       // K x d, present when the kind trains classname tokens
  Matrix classifier_rows;  // K x e, classifier kinds only
  EncoderWeights encoder_copy;
  bool has_encoder_copy = false;
  std::vector<Matrix> momentum;  // parallel to trainable_tensors order
};

struct NamedTensor {
  const char* name;
  Matrix* value;
};

struct NamedTensorView {
  const char* name;
  const Matrix* value;
};

inline std::vector<NamedTensor> trainable_tensors(MethodState& s) {
  switch (s.kind) {
    case MethodKind::PromptTuning:
      return {{"prompt", &s.prompt}};
    case MethodKind::ClassifierR:
    case MethodKind::ClassifierC:
      return {{"classifier_rows", &s.classifier_rows}};
    case MethodKind::TEncFT:
      return {{"w_q", &s.encoder_copy.w_q}, {"w_k", &s.encoder_copy.w_k},
              {"w_v", &s.encoder_copy.w_v}, {"w1", &s.encoder_copy.w1},
              {"b1", &s.encoder_copy.b1},   {"w2", &s.encoder_copy.w2},
              {"b2", &s.encoder_copy.b2},   {"w_out", &s.encoder_copy.w_out}};
    case MethodKind::FullPromptTuning:
      return {{"prompt", &s.prompt}, {"vocab", &s.vocab_copy}};
    case MethodKind::CLSTuning:
      return {{"vocab", &s.vocab_copy}};
    case MethodKind::ZeroShot:
      return {};
  }
  throw PreconditionError("trainable_tensors: unknown kind");
}

inline std::vector<NamedTensorView> trainable_tensors(const MethodState& s) {
  std::vector<NamedTensorView> out;
  for (const NamedTensor& t : trainable_tensors(const_cast<MethodState&>(s)))
    out.push_back({t.name, t.value});
  return out;
}

namespace detail {

inline Matrix first_rows(const Matrix& m, std::size_t rows) {
  Matrix out(rows, m.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(r, c);
  return out;
}

}  // namespace detail

inline MethodState build_method_state(const MethodSpec& spec, const World& world,
                                      std::uint64_t seed) {
  const std::size_t d = world.config.encoder.token_dim;
  const std::size_t e = world.config.encoder.embed_dim;
  const std::size_t kclasses = world.config.class_count;

  MethodState s;
  s.kind = spec.kind;
  s.context_len = resolve_context(spec, world.config.encoder.context_len);
  SeededRng rng = SeededRng(seed).derive(seed_tags::kMethodInit);

  switch (spec.kind) {
    case MethodKind::PromptTuning:
      s.prompt = gaussian_matrix(s.context_len, d, 0.02, rng);
      break;
    case MethodKind::ClassifierR:
      s.classifier_rows =
          gaussian_matrix(kclasses, e, 1.0 / std::sqrt(static_cast<double>(e)), rng);
      break;
    case MethodKind::ClassifierC:
      s.classifier_rows =
          class_embeddings(world.weights, world.template_prompt, world.vocab);
      break;
    case MethodKind::TEncFT:
      s.encoder_copy = world.weights;
      s.has_encoder_copy = true;
      s.prompt = detail::first_rows(world.template_prompt, s.context_len);
      break;
    case MethodKind::FullPromptTuning:
      s.prompt = gaussian_matrix(s.context_len, d, 0.02, rng);
      s.vocab_copy = world.vocab.tokens;
      break;
    case MethodKind::CLSTuning:
      s.vocab_copy = world.vocab.tokens;
      s.prompt = detail::first_rows(world.template_prompt, s.context_len);
      break;
    case MethodKind::ZeroShot:
      s.prompt = detail::first_rows(world.template_prompt, s.context_len);
      break;
  }

  for (const NamedTensor& t : trainable_tensors(s))
    s.momentum.emplace_back(t.value->rows(), t.value->cols());
  return s;
}

// Class rows the posterior is taken against: encoder output for prompt-family
// kinds, row-normalized free weights for classifier kinds.
inline Matrix method_class_matrix(const MethodState& s, const World& world) {
  if (method_is_classifier(s.kind)) return l2_normalize_rows(s.classifier_rows);
  const EncoderWeights& weights = s.has_encoder_copy ? s.encoder_copy : world.weights;
  if (method_trains_vocab(s.kind)) {
    ClassVocabulary vocab;
    vocab.tokens = s.vocab_copy;
    return class_embeddings(weights, s.prompt, vocab);
  }
  return class_embeddings(weights, s.prompt, world.vocab);
}

inline void check_kind(const MethodState& s, const MethodSpec& spec, const char* where) {
  if (s.kind != spec.kind)
    throw PreconditionError(std::string(where) + ": state built for " +
                            method_kind_name(s.kind) + " used with spec " +
                            method_kind_name(spec.kind));
}

inline std::vector<double> forward_posterior(const MethodState& s, const MethodSpec& spec,
                                             const World& world,
                                             const std::vector<double>& image) {
  check_kind(s, spec, "forward_posterior");
  return posterior(image, method_class_matrix(s, world),
                   world.config.encoder.temperature);
}

inline double evaluate_accuracy(const MethodState& s, const MethodSpec& spec,
                                const World& world, const EmbeddingDataset& test) {
  check_kind(s, spec, "evaluate_accuracy");
  if (test.size() == 0) throw PreconditionError("evaluate_accuracy: empty dataset");
  const Matrix rows = method_class_matrix(s, world);
  const double tau = world.config.encoder.temperature;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto probs = posterior(test.images.row_as_vector(i), rows, tau);
    if (argmax(probs) == test.true_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

inline double cosine_lr(int epoch, int total_epochs, double lr0) {
  if (epoch < 0 || epoch >= total_epochs)
    throw PreconditionError("cosine_lr: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(total_epochs) + ")");
  const double phase = std::numbers::pi * static_cast<double>(epoch) /
                       static_cast<double>(total_epochs);
  return lr0 * 0.5 * (1.0 + std::cos(phase));
}

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr0 = 0.002;
  double momentum = 0.9;
  LossSpec loss = LossSpec::ce();
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 0)
      throw InvalidValueError("epochs: must be >= 0, got " + std::to_string(epochs));
    if (batch_size < 1)
      throw InvalidValueError("batch_size: must be >= 1, got " +
                              std::to_string(batch_size));
    if (!(lr0 >= 0.0))
      throw InvalidValueError("lr0: must be >= 0, got " + std::to_string(lr0));
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw InvalidValueError("momentum: must lie in [0, 1), got " +
                              std::to_string(momentum));
    loss.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

// One mini-batch as a differentiable graph: mean loss over the batch at the
// output, one leaf per trainable tensor (same order as trainable_tensors).
struct BatchGraph {
  Tape tape;
  NodeId output = kNoNode;
  std::vector<NodeId> trainable_leaves;
};

inline BatchGraph build_batch_graph(const MethodState& s, const World& world,
                                    const EmbeddingDataset& data,
                                    const std::vector<std::size_t>& batch,
                                    const LossSpec& loss) {
  if (batch.empty()) throw PreconditionError("build_batch_graph: empty batch");
  for (std::size_t idx : batch)
    if (idx >= data.size())
      throw PreconditionError("build_batch_graph: sample index out of range");

  BatchGraph g;
  Tape& t = g.tape;
  NodeId class_rows = kNoNode;

  if (method_is_classifier(s.kind)) {
    NodeId rows = t.leaf(s.classifier_rows);
    g.trainable_leaves.push_back(rows);
    class_rows = t.l2_normalize_rows_op(rows);
  } else {
    const EncoderWeights& weights = s.has_encoder_copy ? s.encoder_copy : world.weights;
    EncoderLeaves enc = add_encoder_leaves(t, weights);
    NodeId prompt = s.prompt.rows() == 0 ? kNoNode : t.leaf(s.prompt);
    NodeId vocab =
        t.leaf(method_trains_vocab(s.kind) ? s.vocab_copy : world.vocab.tokens);
    if (method_trains_prompt(s.kind)) g.trainable_leaves.push_back(prompt);
    if (method_trains_vocab(s.kind)) g.trainable_leaves.push_back(vocab);
    if (s.kind == MethodKind::TEncFT)
      g.trainable_leaves.assign(
          {enc.w_q, enc.w_k, enc.w_v, enc.w1, enc.b1, enc.w2, enc.b2, enc.w_out});
    class_rows = class_embeddings_node(t, enc, prompt, vocab, weights.pos);
  }

  NodeId rows_t = t.transpose_op(class_rows);
  const double tau = world.config.encoder.temperature;
  NodeId total = kNoNode;
  for (std::size_t idx : batch) {
    NodeId img = t.leaf(Matrix::row_vector(data.images.row_as_vector(idx)));
    NodeId probs = t.softmax_rows_op(t.scale_op(t.matmul(img, rows_t), 1.0 / tau));
    NodeId sample_loss = t.loss_head(probs, loss, data.observed_labels[idx]);
    total = total == kNoNode ? sample_loss : t.add(total, sample_loss);
  }
  g.output = t.scale_op(total, 1.0 / static_cast<double>(batch.size()));
  t.set_output(g.output);
  return g;
}

// Called at the top of each epoch, before that epoch's updates.
using EpochHook = std::function<void(int epoch, const MethodState& state)>;

inline std::vector<EpochStats> train(MethodState& s, const MethodSpec& spec,
                                     const World& world, const EmbeddingDataset& data,
                                     const TrainConfig& cfg,
                                     const EpochHook& hook = EpochHook()) {
  check_kind(s, spec, "train");
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw PreconditionError("train: empty dataset");
  auto params = trainable_tensors(s);
  if (params.size() != s.momentum.size())
    throw PreconditionError("train: momentum buffers do not match trainable tensors");

  const std::size_t n = data.size();
  const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (hook) hook(epoch, s);
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SeededRng(cfg.seed)
        .derive(seed_tags::kTrainLoop)
        .derive(static_cast<std::uint64_t>(epoch))
        .shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bsz) {
      const std::size_t stop = std::min(n, start + bsz);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      try {
        BatchGraph g = build_batch_graph(s, world, data, batch, cfg.loss);
        loss_sum += g.tape.scalar_value(g.output) * static_cast<double>(batch.size());
        g.tape.backward_all();
        for (std::size_t p = 0; p < params.size(); ++p) {
          const Matrix& grad = g.tape.grad(g.trainable_leaves[p]);
          Matrix& vel = s.momentum[p];
          Matrix& theta = *params[p].value;
          const std::size_t count = theta.rows() * theta.cols();
          for (std::size_t i = 0; i < count; ++i) {
            vel.data()[i] = cfg.momentum * vel.data()[i] + grad.data()[i];
            theta.data()[i] -= lr * vel.data()[i];
          }
        }
      } catch (const DegenerateProbabilityError& err) {
        throw DegenerateProbabilityError(
            std::string(err.what()) + " (epoch " + std::to_string(epoch) +
            ", batch starting at shuffled position " + std::to_string(start) + ")");
      }
    }
    history.push_back(
        {epoch, lr, loss_sum / static_cast<double>(n)});
  }
  return history;
}

}  // namespace promptlab
