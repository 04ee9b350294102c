#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptlab/errors.hpp"
#include "promptlab/losses.hpp"
#include "promptlab/matrix.hpp"

namespace promptlab {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

// The complete op vocabulary. Anything else on a tape is a hard error, which
// keeps the reverse pass a closed checklist instead of an extensible visitor.
enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Tanh,
  Scale,
  SoftmaxRows,
  L2NormalizeRows,
  RowSelect,
  Transpose,
  Dot,
  LossHead,
};

struct TapeNode {
  OpKind kind = OpKind::Leaf;
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  double scalar = 0.0;     // Scale factor
  std::uint32_t row = 0;   // RowSelect row index, LossHead label
  LossSpec loss;           // LossHead only
  Matrix value;            // cached forward value
};

// Append-only computation record. Forward values are computed eagerly at push
// so shape errors surface at the push site; replay() recomputes them after a
// leaf edit, and backward_all() runs one reverse sweep from the scalar output.
class Tape {
 public:
  NodeId leaf(Matrix m) {
    TapeNode n;
    n.kind = OpKind::Leaf;
    n.value = std::move(m);
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) { return push_binary(OpKind::MatMul, a, b); }
  NodeId add(NodeId a, NodeId b) { return push_binary(OpKind::Add, a, b); }
  NodeId dot(NodeId a, NodeId b) { return push_binary(OpKind::Dot, a, b); }

  NodeId tanh_op(NodeId a) { return push_unary(OpKind::Tanh, a); }
  NodeId softmax_rows_op(NodeId a) { return push_unary(OpKind::SoftmaxRows, a); }
  NodeId l2_normalize_rows_op(NodeId a) { return push_unary(OpKind::L2NormalizeRows, a); }
  NodeId transpose_op(NodeId a) { return push_unary(OpKind::Transpose, a); }

  NodeId scale_op(NodeId a, double s) {
    TapeNode n;
    n.kind = OpKind::Scale;
    n.a = check_id(a);
    n.scalar = s;
    return push(std::move(n));
  }

  NodeId row_select_op(NodeId a, std::size_t row) {
    TapeNode n;
    n.kind = OpKind::RowSelect;
    n.a = check_id(a);
    n.row = static_cast<std::uint32_t>(row);
    return push(std::move(n));
  }

  NodeId loss_head(NodeId probs, const LossSpec& spec, std::size_t label) {
    const Matrix& p = value(probs);
    if (p.rows() != 1)
      throw DimMismatchError("loss_head: probs must be a row vector, got " + shape_str(p));
    if (label >= p.cols()) throw PreconditionError("loss_head: label out of range");
    spec.validate();
    TapeNode n;
    n.kind = OpKind::LossHead;
    n.a = check_id(probs);
    n.row = static_cast<std::uint32_t>(label);
    n.loss = spec;
    return push(std::move(n));
  }

  void set_output(NodeId id) { output_ = check_id(id); }
  NodeId output() const { return output_; }

  const Matrix& value(NodeId id) const { return nodes_[check_id(id)].value; }

  double scalar_value(NodeId id) const {
    const Matrix& v = value(id);
    if (v.rows() != 1 || v.cols() != 1)
      throw PreconditionError("scalar_value: node is " + shape_str(v));
    return v[0];
  }

  bool is_leaf(NodeId id) const { return nodes_[check_id(id)].kind == OpKind::Leaf; }

  void set_leaf_value(NodeId id, Matrix m) {
    TapeNode& n = nodes_[check_id(id)];
    if (n.kind != OpKind::Leaf) throw PreconditionError("set_leaf_value: not a leaf");
    if (!n.value.same_shape(m))
      throw DimMismatchError("set_leaf_value: shape changed from " + shape_str(n.value) +
                             " to " + shape_str(m));
    n.value = std::move(m);
  }

  // Recompute every non-leaf value in push order. Uses the same primitives as
  // the eager pass, so replayed values are bitwise identical.
  void replay() {
    for (TapeNode& n : nodes_)
      if (n.kind != OpKind::Leaf) n.value = eval(n);
  }

  // One reverse sweep; returns an adjoint per node, shaped like its value.
  std::vector<Matrix> backward_all() const {
    if (output_ == kNoNode) throw PreconditionError("backward_all: no output set");
    const Matrix& out = nodes_[output_].value;
    if (out.rows() != 1 || out.cols() != 1)
      throw PreconditionError("backward_all: output is " + shape_str(out) + ", not scalar");

    std::vector<Matrix> adj(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      adj[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
    adj[output_][0] = 1.0;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const TapeNode& n = nodes_[i];
      const Matrix& g = adj[i];
      switch (n.kind) {
        case OpKind::Leaf:
          break;
        case OpKind::MatMul: {
          accumulate(adj[n.a], promptlab::matmul(g, transpose(nodes_[n.b].value)));
          accumulate(adj[n.b], promptlab::matmul(transpose(nodes_[n.a].value), g));
          break;
        }
        case OpKind::Add:
          accumulate(adj[n.a], g);
          accumulate(adj[n.b], g);
          break;
        case OpKind::Tanh: {
          Matrix d = g;
          for (std::size_t k = 0; k < d.size(); ++k)
            d[k] *= 1.0 - n.value[k] * n.value[k];
          accumulate(adj[n.a], d);
          break;
        }
        case OpKind::Scale:
          accumulate(adj[n.a], scale(g, n.scalar));
          break;
        case OpKind::SoftmaxRows: {
          // dz_j = y_j * (g_j - sum_k g_k y_k), row by row.
          Matrix d(n.value.rows(), n.value.cols());
          for (std::size_t r = 0; r < n.value.rows(); ++r) {
            const double* y = n.value.row(r);
            const double* gr = g.row(r);
            double inner = 0.0;
            for (std::size_t k = 0; k < n.value.cols(); ++k) inner += gr[k] * y[k];
            for (std::size_t k = 0; k < n.value.cols(); ++k)
              d.row(r)[k] = y[k] * (gr[k] - inner);
          }
          accumulate(adj[n.a], d);
          break;
        }
        case OpKind::L2NormalizeRows: {
          // dz = (g - y (g . y)) / ||x||, row by row.
          const Matrix& x = nodes_[n.a].value;
          Matrix d(x.rows(), x.cols());
          for (std::size_t r = 0; r < x.rows(); ++r) {
            const double* y = n.value.row(r);
            const double* gr = g.row(r);
            double norm = l2_norm(x.row(r), x.cols());
            double inner = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) inner += gr[k] * y[k];
            for (std::size_t k = 0; k < x.cols(); ++k)
              d.row(r)[k] = (gr[k] - y[k] * inner) / norm;
          }
          accumulate(adj[n.a], d);
          break;
        }
        case OpKind::RowSelect: {
          Matrix d(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
          for (std::size_t k = 0; k < d.cols(); ++k) d.at(n.row, k) = g[k];
          accumulate(adj[n.a], d);
          break;
        }
        case OpKind::Transpose:
          accumulate(adj[n.a], transpose(g));
          break;
        case OpKind::Dot: {
          double gs = g[0];
          accumulate(adj[n.a], scale(nodes_[n.b].value, gs));
          accumulate(adj[n.b], scale(nodes_[n.a].value, gs));
          break;
        }
        case OpKind::LossHead: {
          const Matrix& p = nodes_[n.a].value;
          std::vector<double> lg = loss_grad_probs(n.loss, p.data(), p.cols(), n.row);
          Matrix d(1, p.cols());
          for (std::size_t k = 0; k < p.cols(); ++k) d[k] = g[0] * lg[k];
          accumulate(adj[n.a], d);
          break;
        }
        default:
          throw UnsupportedOpError("backward_all: op tag " +
                                   std::to_string(static_cast<int>(n.kind)));
      }
    }
    return adj;
  }

  Matrix grad(NodeId leaf_id) const {
    if (nodes_[check_id(leaf_id)].kind != OpKind::Leaf)
      throw PreconditionError("grad: node is not a leaf");
    return backward_all()[leaf_id];
  }

  std::size_t size() const { return nodes_.size(); }
  std::vector<TapeNode>& nodes() { return nodes_; }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

 private:
  NodeId check_id(NodeId id) const {
    if (id >= nodes_.size()) throw PreconditionError("tape: node id out of range");
    return id;
  }

  NodeId push_unary(OpKind k, NodeId a) {
    TapeNode n;
    n.kind = k;
    n.a = check_id(a);
    return push(std::move(n));
  }

  NodeId push_binary(OpKind k, NodeId a, NodeId b) {
    TapeNode n;
    n.kind = k;
    n.a = check_id(a);
    n.b = check_id(b);
    return push(std::move(n));
  }

  NodeId push(TapeNode n) {
    if (n.kind != OpKind::Leaf) n.value = eval(n);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  // Single forward evaluator shared by push and replay. Delegates to the
  // matrix primitives, which are also what the direct (tape-free) evaluation
  // paths call, so both routes produce identical bits.
  Matrix eval(const TapeNode& n) const {
    switch (n.kind) {
      case OpKind::MatMul: return promptlab::matmul(nodes_[n.a].value, nodes_[n.b].value);
      case OpKind::Add: return promptlab::add(nodes_[n.a].value, nodes_[n.b].value);
      case OpKind::Tanh: return tanh_map(nodes_[n.a].value);
      case OpKind::Scale: return scale(nodes_[n.a].value, n.scalar);
      case OpKind::SoftmaxRows: return softmax_rows(nodes_[n.a].value);
      case OpKind::L2NormalizeRows: return l2_normalize_rows(nodes_[n.a].value);
      case OpKind::RowSelect: return row_select(nodes_[n.a].value, n.row);
      case OpKind::Transpose: return transpose(nodes_[n.a].value);
      case OpKind::Dot: return promptlab::dot(nodes_[n.a].value, nodes_[n.b].value);
      case OpKind::LossHead: {
        const Matrix& p = nodes_[n.a].value;
        Matrix v(1, 1);
        v[0] = loss_value(n.loss, p.data(), p.cols(), n.row);
        return v;
      }
      case OpKind::Leaf:
        break;
      default:
        throw UnsupportedOpError("tape eval: op tag " +
                                 std::to_string(static_cast<int>(n.kind)));
    }
    throw UnsupportedOpError("tape eval: leaf has no evaluator");
  }

  static void accumulate(Matrix& into, const Matrix& g) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
  }

  std::vector<TapeNode> nodes_;
  NodeId output_ = kNoNode;
};

}  // namespace promptlab
