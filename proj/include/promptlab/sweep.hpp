#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptlab/methods.hpp"
#include "promptlab/noise.hpp"
#include "promptlab/probe.hpp"
#include "promptlab/report.hpp"
#include "promptlab/upl.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

struct SweepOptions {
  bool attach_trace = false;
  std::size_t probe_size = kProbeSize;
};

namespace detail {

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

// Sample standard deviation; a single observation has spread zero.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  out.count = xs.size();
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

struct CellKey {
  std::string method;
  std::size_t context_len;
  NoiseKind noise_kind;
  double noise_rate;
  LossSpec loss;

  friend bool operator==(const CellKey&, const CellKey&) = default;
};

}  // namespace detail

// Collapses runs over seeds into one row per (method, context, noise, loss)
// group, in first-appearance order. Failed runs are left out; the optional
// columns aggregate only the runs that produced them.
inline std::vector<SummaryRow> summarize_runs(const std::vector<RunReport>& runs) {
  std::vector<detail::CellKey> keys;
  std::vector<std::vector<const RunReport*>> groups;
  for (const RunReport& r : runs) {
    if (r.failed()) continue;
    detail::CellKey key{r.method, r.context_len, r.noise_kind, r.noise_rate, r.loss};
    std::size_t g = keys.size();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i] == key) {
        g = i;
        break;
      }
    }
    if (g == keys.size()) {
      keys.push_back(key);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }

  std::vector<SummaryRow> rows;
  rows.reserve(keys.size());
  for (std::size_t g = 0; g < keys.size(); ++g) {
    SummaryRow row;
    row.method = keys[g].method;
    row.context_len = keys[g].context_len;
    row.noise_kind = keys[g].noise_kind;
    row.noise_rate = keys[g].noise_rate;
    row.loss = keys[g].loss;

    std::vector<double> acc, ratio, prec;
    for (const RunReport* r : groups[g]) {
      acc.push_back(r->accuracy);
      if (auto mr = trace_mean_ratio(*r)) ratio.push_back(*mr);
      if (r->pseudo_precision) prec.push_back(*r->pseudo_precision);
    }
    const auto a = detail::mean_std(acc);
    row.count = a.count;
    row.mean_accuracy = a.mean;
    row.std_accuracy = a.std;
    if (!ratio.empty()) {
      const auto m = detail::mean_std(ratio);
      row.mean_grad_ratio = m.mean;
      row.std_grad_ratio = m.std;
    }
    if (!prec.empty()) {
      const auto m = detail::mean_std(prec);
      row.mean_pseudo_precision = m.mean;
      row.std_pseudo_precision = m.std;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

// One (world, method, noise, loss) cell. Any module error is captured into the
// report so the surrounding sweep keeps going.
inline RunReport run_sweep_cell(const World& world, std::uint64_t seed,
                                const MethodSpec& mspec, const NoiseSpec& nspec,
                                const std::string& noise_error,
                                const EmbeddingDataset& train_data,
                                const EmbeddingDataset& test_data, const LossSpec& loss,
                                const TrainConfig& base_train, const SweepOptions& opt) {
  RunReport r;
  r.world_seed = seed;
  r.method = method_kind_name(mspec.kind);
  r.noise_kind = nspec.kind;
  r.noise_rate = nspec.rate;
  r.loss = loss;

  const WallTimer timer;
  try {
    if (!noise_error.empty()) throw PreconditionError(noise_error);
    r.context_len = resolve_context(mspec, world.config.encoder.context_len);

    MethodState state = build_method_state(mspec, world, seed);
    TrainConfig tc = base_train;
    tc.loss = loss;
    tc.seed = seed;

    bool has_clean = false, has_noisy = false;
    for (bool f : train_data.clean_flags) (f ? has_clean : has_noisy) = true;

    EpochHook hook;
    std::vector<GradRatioPoint>* trace = &r.trace;
    if (opt.attach_trace && has_clean && has_noisy && !trainable_tensors(state).empty()) {
      hook = [&world, &mspec, &train_data, loss, &opt, seed, trace](
                 int epoch, const MethodState& snapshot) {
        GradRatioPoint pt = gradient_ratio_probe(snapshot, mspec, world, train_data, loss,
                                                 opt.probe_size, seed);
        pt.epoch = epoch;
        trace->push_back(pt);
      };
    }

    if (trainable_tensors(state).empty()) {
      // nothing to train; evaluation below is the whole run
    } else {
      r.history = train(state, mspec, world, train_data, tc, hook);
    }
    r.accuracy = evaluate_accuracy(state, mspec, world, test_data);
  } catch (const Error& e) {
    r.error = e.what();
  }
  r.wall_ms = timer.elapsed_ms();
  return r;
}

}  // namespace detail

// Full noise-robustness grid: seeds x methods x noise specs x losses. Each
// seed gets its own world; the same corrupted training set is shared by every
// method and loss at that coordinate. Confusion specs without an explicit
// matrix get the world's own estimated confusion.
inline SweepReport run_noise_sweep(const std::vector<std::uint64_t>& seeds,
                                   const std::vector<MethodSpec>& methods,
                                   const std::vector<NoiseSpec>& noise,
                                   const std::vector<LossSpec>& losses,
                                   const WorldConfig& base_world, const TrainConfig& base_train,
                                   const SweepOptions& opt = {}) {
  if (seeds.empty()) throw PreconditionError("run_noise_sweep: need at least one seed");
  if (methods.empty()) throw PreconditionError("run_noise_sweep: need at least one method");
  if (noise.empty()) throw PreconditionError("run_noise_sweep: need at least one noise spec");
  if (losses.empty()) throw PreconditionError("run_noise_sweep: need at least one loss");
  base_train.validate();
  for (const LossSpec& l : losses) l.validate();

  SweepReport report;
  report.world = base_world;
  report.train = base_train;
  report.methods = methods;
  report.noise = noise;
  report.losses = losses;
  report.seeds = seeds;
  report.trace_attached = opt.attach_trace;
  report.probe_size = opt.probe_size;

  for (std::uint64_t s : seeds) {
    WorldConfig wc = base_world;
    wc.seed = s;
    const World world = generate_world(wc);
    const EmbeddingDataset train_clean = sample_dataset(world, Split::Train);
    const EmbeddingDataset test_data = sample_dataset(world, Split::Test);

    // Corrupt once per noise spec, reused across methods and losses. The
    // world's confusion matrix is estimated lazily, only if some spec needs it.
    Matrix world_confusion;
    std::vector<EmbeddingDataset> noisy_sets(noise.size());
    std::vector<std::string> noise_errors(noise.size());
    for (std::size_t i = 0; i < noise.size(); ++i) {
      try {
        NoiseSpec resolved = noise[i];
        if (resolved.kind == NoiseKind::Confusion && resolved.confusion.rows() == 0) {
          if (world_confusion.rows() == 0)
            world_confusion = zero_shot_confusion(world, train_clean, kConfusionRuns,
                                                  derive_seed(s, seed_tags::kConfusionRuns));
          resolved.confusion = world_confusion;
        }
        noisy_sets[i] = apply_noise(train_clean, resolved, derive_seed(s, seed_tags::kNoise));
      } catch (const Error& e) {
        noise_errors[i] = e.what();
      }
    }

    for (const MethodSpec& m : methods)
      for (std::size_t i = 0; i < noise.size(); ++i)
        for (const LossSpec& loss : losses)
          report.runs.push_back(detail::run_sweep_cell(world, s, m, noise[i], noise_errors[i],
                                                       noisy_sets[i], test_data, loss,
                                                       base_train, opt));
  }

  report.summaries = summarize_runs(report.runs);
  return report;
}

// The three pseudo-label training arms compared by the `upl` command, plus a
// zero-shot reference row. Arm rows carry the precision of their selected
// subset; the reference row carries the precision of the whole pool.
inline SweepReport run_upl_comparison(const std::vector<std::uint64_t>& seeds,
                                      const WorldConfig& base_world,
                                      const TrainConfig& base_train, const UplConfig& base_upl) {
  if (seeds.empty()) throw PreconditionError("run_upl_comparison: need at least one seed");
  base_train.validate();
  base_upl.validate();

  struct Arm {
    const char* name;
    SelectionStrategy selection;
    LossSpec loss;
  };
  const Arm arms[] = {
      {"upl_topk", SelectionStrategy::TopK, LossSpec::ce()},
      {"upl_random", SelectionStrategy::Random, LossSpec::ce()},
      {"upl_random", SelectionStrategy::Random, LossSpec::gce(base_upl.loss.q)},
  };

  SweepReport report;
  report.world = base_world;
  report.train = base_train;
  report.methods = {MethodSpec{MethodKind::PromptTuning}};
  report.losses = {LossSpec::ce(), LossSpec::gce(base_upl.loss.q)};
  report.seeds = seeds;

  for (std::uint64_t s : seeds) {
    WorldConfig wc = base_world;
    wc.seed = s;
    const World world = generate_world(wc);
    const EmbeddingDataset unlabeled = sample_dataset(world, Split::Unlabeled);
    const EmbeddingDataset test_data = sample_dataset(world, Split::Test);
    const std::size_t full_context = world.config.encoder.context_len;
    const PseudoLabelSet pool = pseudo_label(world, unlabeled);

    {
      RunReport r;
      r.world_seed = s;
      r.method = "zero_shot";
      r.context_len = full_context;
      r.loss = LossSpec::ce();
      const detail::WallTimer timer;
      const MethodSpec zs{MethodKind::ZeroShot};
      MethodState state = build_method_state(zs, world, s);
      r.accuracy = evaluate_accuracy(state, zs, world, test_data);
      r.pseudo_precision = pseudo_precision(pool);
      r.wall_ms = timer.elapsed_ms();
      report.runs.push_back(std::move(r));
    }

    for (const Arm& arm : arms) {
      RunReport r;
      r.world_seed = s;
      r.method = arm.name;
      r.context_len = full_context;
      r.loss = arm.loss;
      const detail::WallTimer timer;
      try {
        UplConfig uc = base_upl;
        uc.selection = arm.selection;
        uc.loss = arm.loss;
        uc.seed = s;
        SelectedSamples sel = select_samples(unlabeled, pool, uc.k, uc.selection, s);
        r.notes = sel.warnings;
        r.pseudo_precision = pseudo_precision(sel.data);
        const std::vector<MethodState> models = train_ensemble(world, sel.data, uc, base_train);
        r.accuracy = evaluate_ensemble_accuracy(models, world, test_data);
      } catch (const Error& e) {
        r.error = e.what();
      }
      r.wall_ms = timer.elapsed_ms();
      report.runs.push_back(std::move(r));
    }
  }

  report.summaries = summarize_runs(report.runs);
  return report;
}

}  // namespace promptlab
