#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "promptlab/errors.hpp"
#include "promptlab/methods.hpp"
#include "promptlab/rng.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

constexpr std::size_t kProbeSize = 64;

struct GradRatioPoint {
  int epoch = 0;
  double noisy_norm = 0.0;
  double clean_norm = 0.0;
  double ratio = 0.0;

  friend bool operator==(const GradRatioPoint&, const GradRatioPoint&) = default;
};

namespace detail {

// Mean-loss gradient over one sample group, L2 norm across every trainable
// tensor concatenated. Read-only: leaves copy the state's values.
inline double probe_group_norm(const MethodState& s, const World& world,
                               const EmbeddingDataset& data,
                               const std::vector<std::size_t>& group,
                               const LossSpec& loss) {
  BatchGraph g = build_batch_graph(s, world, data, group, loss);
  g.tape.backward_all();
  double sum_sq = 0.0;
  for (NodeId leaf : g.trainable_leaves) {
    const Matrix& grad = g.tape.grad(leaf);
    const std::size_t count = grad.rows() * grad.cols();
    for (std::size_t i = 0; i < count; ++i) sum_sq += grad.data()[i] * grad.data()[i];
  }
  return std::sqrt(sum_sq);
}

inline std::vector<std::size_t> probe_subset(const std::vector<std::size_t>& pool,
                                             std::size_t k, SeededRng rng) {
  std::vector<std::size_t> picks = rng.sample_indices(pool.size(), k);
  std::sort(picks.begin(), picks.end());
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t p : picks) out.push_back(pool[p]);
  return out;
}

}  // namespace detail

// Noisy-to-clean gradient norm ratio at the state's current parameters.
// Draws min(probe_size, available) samples per flag group, same count each
// side, and never updates the state. ratio = noisy/clean when clean > 0;
// 0 when both norms vanish; +inf when only the clean norm vanishes.
inline GradRatioPoint gradient_ratio_probe(const MethodState& s, const MethodSpec& spec,
                                           const World& world,
                                           const EmbeddingDataset& data,
                                           const LossSpec& loss,
                                           std::size_t probe_size = kProbeSize,
                                           std::uint64_t seed = 0) {
  check_kind(s, spec, "gradient_ratio_probe");
  if (probe_size == 0)
    throw PreconditionError("gradient_ratio_probe: probe_size must be positive");
  data.validate();

  std::vector<std::size_t> clean, noisy;
  for (std::size_t i = 0; i < data.size(); ++i)
    (data.clean_flags[i] ? clean : noisy).push_back(i);
  if (noisy.empty())
    throw NoNoisySamplesError("gradient_ratio_probe: no noisy-flagged samples");
  if (clean.empty())
    throw NoCleanSamplesError("gradient_ratio_probe: no clean-flagged samples");

  const std::size_t k = std::min({probe_size, clean.size(), noisy.size()});
  SeededRng root = SeededRng(seed).derive(seed_tags::kProbe);
  auto clean_picks = detail::probe_subset(clean, k, root.derive(0));
  auto noisy_picks = detail::probe_subset(noisy, k, root.derive(1));

  GradRatioPoint pt;
  pt.clean_norm = detail::probe_group_norm(s, world, data, clean_picks, loss);
  pt.noisy_norm = detail::probe_group_norm(s, world, data, noisy_picks, loss);
  if (pt.clean_norm > 0.0)
    pt.ratio = pt.noisy_norm / pt.clean_norm;
  else
    pt.ratio = pt.noisy_norm == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return pt;
}

}  // namespace promptlab
