#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "promptlab/errors.hpp"

namespace promptlab {

// Probabilities at or below this are treated as numerically degenerate
// wherever a logarithm or reciprocal of them is required.
inline constexpr double kProbFloor = 1e-300;

enum class LossKind { CE, GCE, SCE, NCERCE };

inline std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::CE: return "ce";
    case LossKind::GCE: return "gce";
    case LossKind::SCE: return "sce";
    case LossKind::NCERCE: return "nce_rce";
  }
  throw UnsupportedOpError("loss_kind_name: bad kind");
}

inline LossKind loss_kind_from_name(const std::string& name) {
  for (LossKind k : {LossKind::CE, LossKind::GCE, LossKind::SCE, LossKind::NCERCE})
    if (name == loss_kind_name(k)) return k;
  throw InvalidValueError("loss: unknown kind '" + name + "'");
}

struct LossSpec {
  LossKind kind = LossKind::CE;
  // GCE exponent; 1 recovers mean absolute error, the q->0 limit recovers CE.
  double q = 0.7;
  // Mixing weights. SCE pairs a small CE term with reverse CE; the NCE+RCE
  // pair defaults to an even mix.
  double alpha = 1.0;
  double beta = 1.0;
  // Stand-in for log(0) inside reverse CE; must stay negative.
  double log_zero = -4.0;

  static LossSpec ce() { return LossSpec{LossKind::CE, 0.7, 1.0, 0.0, -4.0}; }
  static LossSpec gce(double q = 0.7) { return LossSpec{LossKind::GCE, q, 1.0, 0.0, -4.0}; }
  static LossSpec sce(double alpha = 0.1, double beta = 1.0, double log_zero = -4.0) {
    return LossSpec{LossKind::SCE, 0.7, alpha, beta, log_zero};
  }
  static LossSpec nce_rce(double alpha = 1.0, double beta = 1.0, double log_zero = -4.0) {
    return LossSpec{LossKind::NCERCE, 0.7, alpha, beta, log_zero};
  }

  void validate() const {
    if (kind == LossKind::GCE && (q <= 0.0 || q > 1.0))
      throw InvalidQError("gce: q must lie in (0, 1], got " + std::to_string(q));
    if (kind == LossKind::SCE || kind == LossKind::NCERCE) {
      if (log_zero >= 0.0)
        throw InvalidValueError("loss: log_zero clip must be negative");
      if (alpha < 0.0 || beta < 0.0)
        throw InvalidValueError("loss: alpha and beta must be nonnegative");
      if (alpha == 0.0 && beta == 0.0)
        throw InvalidValueError("loss: alpha and beta cannot both be zero");
    }
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

namespace detail {
inline void check_label(std::size_t n, std::size_t label) {
  if (label >= n) throw PreconditionError("loss: label out of range");
}
}  // namespace detail

inline double ce_loss(const double* probs, std::size_t n, std::size_t label) {
  detail::check_label(n, label);
  if (probs[label] <= kProbFloor)
    throw DegenerateProbabilityError("ce_loss: probability at label underflows");
  return -std::log(probs[label]);
}

inline double gce_loss(const double* probs, std::size_t n, std::size_t label, double q) {
  detail::check_label(n, label);
  if (q <= 0.0 || q > 1.0)
    throw InvalidQError("gce_loss: q must lie in (0, 1], got " + std::to_string(q));
  double p = probs[label];
  // q == 1 is exactly mean absolute error; keep it bit-exact rather than
  // routing through pow.
  if (q == 1.0) return 1.0 - p;
  return (1.0 - std::pow(p, q)) / q;
}

// Reverse cross entropy with log(0) clipped to a finite negative constant:
// -sum_j p_true(j) log p(j) collapses to -log_zero * (1 - p_label) for a
// one-hot target.
inline double rce_loss(const double* probs, std::size_t n, std::size_t label,
                       double log_zero) {
  detail::check_label(n, label);
  return -log_zero * (1.0 - probs[label]);
}

inline double sce_loss(const double* probs, std::size_t n, std::size_t label,
                       double alpha, double beta, double log_zero) {
  return alpha * ce_loss(probs, n, label) + beta * rce_loss(probs, n, label, log_zero);
}

inline double nce_rce_loss(const double* probs, std::size_t n, std::size_t label,
                           double alpha, double beta, double log_zero) {
  detail::check_label(n, label);
  double sum_log = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (probs[j] <= kProbFloor)
      throw DegenerateProbabilityError("nce_rce_loss: probability underflows");
    sum_log += std::log(probs[j]);
  }
  double nce = std::log(probs[label]) / sum_log;
  return alpha * nce + beta * rce_loss(probs, n, label, log_zero);
}

inline double loss_value(const LossSpec& spec, const double* probs, std::size_t n,
                         std::size_t label) {
  switch (spec.kind) {
    case LossKind::CE: return ce_loss(probs, n, label);
    case LossKind::GCE: return gce_loss(probs, n, label, spec.q);
    case LossKind::SCE: return sce_loss(probs, n, label, spec.alpha, spec.beta, spec.log_zero);
    case LossKind::NCERCE:
      return nce_rce_loss(probs, n, label, spec.alpha, spec.beta, spec.log_zero);
  }
  throw UnsupportedOpError("loss_value: bad kind");
}

// Analytic d(loss)/d(probs). Only NCE needs the full vector; the others touch
// the label coordinate alone. Composed with the softmax Jacobian by the tape.
inline std::vector<double> loss_grad_probs(const LossSpec& spec, const double* probs,
                                           std::size_t n, std::size_t label) {
  detail::check_label(n, label);
  std::vector<double> g(n, 0.0);
  double p = probs[label];
  switch (spec.kind) {
    case LossKind::CE:
      if (p <= kProbFloor)
        throw DegenerateProbabilityError("loss_grad_probs: probability underflows");
      g[label] = -1.0 / p;
      break;
    case LossKind::GCE:
      if (spec.q <= 0.0 || spec.q > 1.0)
        throw InvalidQError("loss_grad_probs: q must lie in (0, 1]");
      g[label] = spec.q == 1.0 ? -1.0 : -std::pow(p, spec.q - 1.0);
      break;
    case LossKind::SCE:
      if (p <= kProbFloor)
        throw DegenerateProbabilityError("loss_grad_probs: probability underflows");
      g[label] = -spec.alpha / p + spec.beta * spec.log_zero;
      break;
    case LossKind::NCERCE: {
      double sum_log = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (probs[j] <= kProbFloor)
          throw DegenerateProbabilityError("loss_grad_probs: probability underflows");
        sum_log += std::log(probs[j]);
      }
      double s2 = sum_log * sum_log;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == label) {
          g[j] = spec.alpha * (sum_log - std::log(p)) / (p * s2) + spec.beta * spec.log_zero;
        } else {
          g[j] = -spec.alpha * std::log(p) / (probs[j] * s2);
        }
      }
      break;
    }
    default:
      throw UnsupportedOpError("loss_grad_probs: bad kind");
  }
  return g;
}

inline double loss_value(const LossSpec& spec, const std::vector<double>& probs,
                         std::size_t label) {
  return loss_value(spec, probs.data(), probs.size(), label);
}

inline std::vector<double> loss_grad_probs(const LossSpec& spec,
                                           const std::vector<double>& probs,
                                           std::size_t label) {
  return loss_grad_probs(spec, probs.data(), probs.size(), label);
}

}  // namespace promptlab
