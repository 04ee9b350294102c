#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/errors.hpp"
#include "promptlab/matrix.hpp"
#include "promptlab/rng.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

struct EncoderConfig {
  std::size_t token_dim = 16;
  std::size_t embed_dim = 16;
  std::size_t context_len = 16;  // longest supported prompt, in tokens
  // 0 means the conventional 2 * token_dim expansion.
  std::size_t hidden_width = 0;
  double temperature = 0.01;

  std::size_t hidden() const { return hidden_width == 0 ? 2 * token_dim : hidden_width; }

  void validate() const {
    if (token_dim == 0 || embed_dim == 0)
      throw InvalidValueError("encoder: dimensions must be positive");
    if (context_len == 0)
      throw InvalidValueError("encoder: context_len must be positive");
    if (!(temperature > 0.0))
      throw TemperatureError("encoder: temperature must be positive");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// One attention block plus a tanh MLP, both residual, then a linear readout
// of the final token position projected onto the unit sphere. Frozen after
// generation except where an adaptation method explicitly copies it.
struct EncoderWeights {
  Matrix w_q, w_k, w_v;  // token_dim x token_dim
  Matrix w1;             // token_dim x hidden
  Matrix b1;             // 1 x hidden
  Matrix w2;             // hidden x token_dim
  Matrix b2;             // 1 x token_dim
  Matrix w_out;          // token_dim x embed_dim
  Matrix pos;            // (context_len + 1) x token_dim, fixed sinusoid table

  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

// Fixed sine/cosine table; even columns sine, odd columns cosine, classic
// 10000^(2i/d) frequency ladder.
inline Matrix sinusoidal_positions(std::size_t count, std::size_t dim) {
  Matrix pos(count, dim);
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      double freq = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) /
                                          static_cast<double>(dim));
      double angle = static_cast<double>(p) * freq;
      pos.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

// Weight draws happen in a fixed order (w_q, w_k, w_v, w1, w2, w_out) from a
// single stream so the layout is stable across versions of the callers.
inline EncoderWeights init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.token_dim, h = cfg.hidden(), e = cfg.embed_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  SeededRng rng(seed);
  EncoderWeights w;
  w.w_q = gaussian_matrix(d, d, stddev, rng);
  w.w_k = gaussian_matrix(d, d, stddev, rng);
  w.w_v = gaussian_matrix(d, d, stddev, rng);
  w.w1 = gaussian_matrix(d, h, stddev, rng);
  w.b1 = Matrix(1, h);
  w.w2 = gaussian_matrix(h, d, stddev, rng);
  w.b2 = Matrix(1, d);
  w.w_out = gaussian_matrix(d, e, stddev, rng);
  w.pos = sinusoidal_positions(cfg.context_len + 1, d);
  return w;
}

// Prompt rows first, classname row last; the readout looks at the last row,
// so the classname always sits in the read position.
inline Matrix assemble_prompt(const Matrix& prompt, const Matrix& classname) {
  if (classname.rows() != 1)
    throw DimMismatchError("assemble_prompt: classname must be a single row");
  if (prompt.rows() > 0 && prompt.cols() != classname.cols())
    throw DimMismatchError("assemble_prompt: prompt width " + shape_str(prompt) +
                           " vs classname " + shape_str(classname));
  Matrix out(prompt.rows() + 1, classname.cols());
  for (std::size_t r = 0; r < prompt.rows(); ++r)
    for (std::size_t c = 0; c < prompt.cols(); ++c) out.at(r, c) = prompt.at(r, c);
  for (std::size_t c = 0; c < classname.cols(); ++c)
    out.at(prompt.rows(), c) = classname.at(0, c);
  return out;
}

struct ClassVocabulary {
  Matrix tokens;  // one classname token row per class

  std::size_t class_count() const { return tokens.rows(); }
  friend bool operator==(const ClassVocabulary&, const ClassVocabulary&) = default;
};

// Leaf handles for one encoder's weights on a tape. Whether they are updated
// afterwards is the caller's business; the tape differentiates through all of
// them either way.
struct EncoderLeaves {
  NodeId w_q, w_k, w_v, w1, b1, w2, b2, w_out;
  std::size_t token_dim;
};

inline EncoderLeaves add_encoder_leaves(Tape& t, const EncoderWeights& w) {
  EncoderLeaves l;
  l.w_q = t.leaf(w.w_q);
  l.w_k = t.leaf(w.w_k);
  l.w_v = t.leaf(w.w_v);
  l.w1 = t.leaf(w.w1);
  l.b1 = t.leaf(w.b1);
  l.w2 = t.leaf(w.w2);
  l.b2 = t.leaf(w.b2);
  l.w_out = t.leaf(w.w_out);
  l.token_dim = w.w_q.rows();
  return l;
}

// Token rows through the block: add positions, one softmax attention layer
// with residual, one tanh MLP with residual, read the last row, project,
// normalize. Biases broadcast over rows via a ones-column matmul so the whole
// graph stays inside the tape's op vocabulary.
inline NodeId encode_text_node(Tape& t, const EncoderLeaves& enc, NodeId tokens,
                               const Matrix& pos_table) {
  const Matrix& tok = t.value(tokens);
  const std::size_t len = tok.rows();
  if (len == 0) throw DimMismatchError("encode_text: empty token sequence");
  if (len > pos_table.rows())
    throw DimMismatchError("encode_text: sequence of " + std::to_string(len) +
                           " exceeds positional table of " +
                           std::to_string(pos_table.rows()));

  Matrix pos_slice(len, pos_table.cols());
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t c = 0; c < pos_table.cols(); ++c)
      pos_slice.at(r, c) = pos_table.at(r, c);

  NodeId x0 = t.add(tokens, t.leaf(std::move(pos_slice)));
  NodeId q = t.matmul(x0, enc.w_q);
  NodeId k = t.matmul(x0, enc.w_k);
  NodeId v = t.matmul(x0, enc.w_v);
  NodeId scores = t.scale_op(t.matmul(q, t.transpose_op(k)),
                             1.0 / std::sqrt(static_cast<double>(enc.token_dim)));
  NodeId attn = t.matmul(t.softmax_rows_op(scores), v);
  NodeId x1 = t.add(x0, attn);

  NodeId ones = t.leaf(Matrix(len, 1, 1.0));
  NodeId pre = t.add(t.matmul(x1, enc.w1), t.matmul(ones, enc.b1));
  NodeId mlp = t.add(t.matmul(t.tanh_op(pre), enc.w2), t.matmul(ones, enc.b2));
  NodeId x2 = t.add(x1, mlp);

  NodeId last = t.row_select_op(x2, len - 1);
  return t.l2_normalize_rows_op(t.matmul(last, enc.w_out));
}

// One embedding row per class, stacked K x e. Concatenation of prompt and
// classname is expressed with constant selector matrices so it, too, lives on
// the tape: [prompt; w_c] = S_p * prompt + S_c * w_c.
inline NodeId class_embeddings_node(Tape& t, const EncoderLeaves& enc, NodeId prompt,
                                    NodeId vocab, const Matrix& pos_table) {
  const Matrix& voc = t.value(vocab);
  const std::size_t kclasses = voc.rows();
  if (kclasses == 0) throw DimMismatchError("class_embeddings: empty vocabulary");

  std::size_t m = prompt == kNoNode ? 0 : t.value(prompt).rows();
  NodeId sel_prompt = kNoNode, sel_class = kNoNode;
  if (m > 0) {
    Matrix sp(m + 1, m);
    for (std::size_t i = 0; i < m; ++i) sp.at(i, i) = 1.0;
    Matrix sc(m + 1, 1);
    sc.at(m, 0) = 1.0;
    sel_prompt = t.leaf(std::move(sp));
    sel_class = t.leaf(std::move(sc));
  }

  NodeId acc = kNoNode;
  for (std::size_t c = 0; c < kclasses; ++c) {
    NodeId wc = t.row_select_op(vocab, c);
    NodeId tokens = m > 0
                        ? t.add(t.matmul(sel_prompt, prompt), t.matmul(sel_class, wc))
                        : wc;
    NodeId emb = encode_text_node(t, enc, tokens, pos_table);
    Matrix onehot(kclasses, 1);
    onehot.at(c, 0) = 1.0;
    NodeId placed = t.matmul(t.leaf(std::move(onehot)), emb);
    acc = c == 0 ? placed : t.add(acc, placed);
  }
  return acc;
}

inline NodeId posterior_node(Tape& t, NodeId image, NodeId class_embs, double tau) {
  if (!(tau > 0.0)) throw TemperatureError("posterior: temperature must be positive");
  NodeId sims = t.matmul(image, t.transpose_op(class_embs));
  return t.softmax_rows_op(t.scale_op(sims, 1.0 / tau));
}

// Tape-free wrappers. They run the identical graph on a scratch tape, so the
// evaluation path and the training path cannot drift apart numerically.
inline Matrix encode_text(const EncoderWeights& w, const Matrix& tokens) {
  Tape t;
  EncoderLeaves enc = add_encoder_leaves(t, w);
  return t.value(encode_text_node(t, enc, t.leaf(tokens), w.pos));
}

inline Matrix class_embeddings(const EncoderWeights& w, const Matrix& prompt,
                               const ClassVocabulary& vocab) {
  Tape t;
  EncoderLeaves enc = add_encoder_leaves(t, w);
  NodeId prompt_node = prompt.rows() == 0 ? kNoNode : t.leaf(prompt);
  return t.value(class_embeddings_node(t, enc, prompt_node, t.leaf(vocab.tokens), w.pos));
}

inline std::vector<double> posterior(const std::vector<double>& image,
                                     const Matrix& class_embs, double tau) {
  if (!(tau > 0.0)) throw TemperatureError("posterior: temperature must be positive");
  if (image.size() != class_embs.cols())
    throw DimMismatchError("posterior: image dim " + std::to_string(image.size()) +
                           " vs embeddings " + shape_str(class_embs));
  Matrix sims = matmul(Matrix::row_vector(image), transpose(class_embs));
  Matrix probs = softmax_rows(scale(sims, 1.0 / tau));
  return probs.row_as_vector(0);
}

}  // namespace promptlab
