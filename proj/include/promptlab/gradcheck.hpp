#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "promptlab/rng.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

// Central-difference check of the reverse pass for one leaf. Perturbs up to
// `samples` coordinates (all of them when the leaf is small), replays the
// tape, and compares against the analytic gradient. Returns the worst
// relative error; coordinates whose analytic gradient is below 1e-8 in
// magnitude are compared absolutely instead, since relative error is
// meaningless against zero.
inline double finite_diff_check(Tape& tape, NodeId leaf, std::size_t samples,
                                double step, std::uint64_t seed = 0xF1D1FFu) {
  if (samples == 0) throw PreconditionError("finite_diff_check: samples must be positive");
  if (!(step > 0.0)) throw PreconditionError("finite_diff_check: step must be positive");
  if (!tape.is_leaf(leaf)) throw PreconditionError("finite_diff_check: node is not a leaf");

  Matrix analytic = tape.grad(leaf);
  const std::size_t n = analytic.size();
  if (n == 0) return 0.0;

  std::vector<std::size_t> coords;
  if (samples >= n) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  } else {
    SeededRng rng(seed);
    coords = rng.sample_indices(n, samples);
  }

  Matrix original = tape.value(leaf);
  NodeId out = tape.output();
  double worst = 0.0;
  for (std::size_t c : coords) {
    Matrix bumped = original;
    bumped[c] = original[c] + step;
    tape.set_leaf_value(leaf, bumped);
    tape.replay();
    double f_plus = tape.scalar_value(out);

    bumped[c] = original[c] - step;
    tape.set_leaf_value(leaf, std::move(bumped));
    tape.replay();
    double f_minus = tape.scalar_value(out);

    double numeric = (f_plus - f_minus) / (2.0 * step);
    double a = analytic[c];
    double err = std::abs(numeric - a);
    if (std::abs(a) >= 1e-8) err /= std::abs(a);
    worst = std::max(worst, err);
  }

  // Leave the tape exactly as it was found.
  tape.set_leaf_value(leaf, std::move(original));
  tape.replay();
  return worst;
}

}  // namespace promptlab
