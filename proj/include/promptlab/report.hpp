#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptlab/losses.hpp"
#include "promptlab/methods.hpp"
#include "promptlab/noise.hpp"
#include "promptlab/probe.hpp"
#include "promptlab/world.hpp"

namespace promptlab {

constexpr int kReportSchemaVersion = 1;

// One sweep cell: a (world seed, method, noise, loss) coordinate with whatever
// that run produced. A failed cell keeps its coordinates and carries the error
// text instead of results.
struct RunReport {
  std::uint64_t world_seed = 0;
  std::string method;
  std::size_t context_len = 0;
  NoiseKind noise_kind = NoiseKind::Random;
  double noise_rate = 0.0;
  LossSpec loss;
  double accuracy = 0.0;
  std::vector<EpochStats> history;
  std::vector<GradRatioPoint> trace;
  std::optional<double> pseudo_precision;
  std::vector<std::string> notes;
  double wall_ms = 0.0;
  std::string error;

  bool failed() const { return !error.empty(); }

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

// Seed-averaged view of one (method, noise, loss) cell group. std fields hold
// the sample standard deviation (zero when only one seed contributed).
struct SummaryRow {
  std::string method;
  std::size_t context_len = 0;
  NoiseKind noise_kind = NoiseKind::Random;
  double noise_rate = 0.0;
  LossSpec loss;
  std::size_t count = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::optional<double> mean_grad_ratio;
  std::optional<double> std_grad_ratio;
  std::optional<double> mean_pseudo_precision;
  std::optional<double> std_pseudo_precision;

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct SweepReport {
  int schema_version = kReportSchemaVersion;
  WorldConfig world;
  TrainConfig train;
  std::vector<MethodSpec> methods;
  std::vector<NoiseSpec> noise;
  std::vector<LossSpec> losses;
  std::vector<std::uint64_t> seeds;
  bool trace_attached = false;
  std::size_t probe_size = kProbeSize;
  std::string config_echo;  // full CLI config as a JSON document, when run via the CLI
  std::vector<RunReport> runs;
  std::vector<SummaryRow> summaries;

  friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

// Epoch-averaged noisy-to-clean ratio of one run's trace.
inline std::optional<double> trace_mean_ratio(const RunReport& r) {
  if (r.trace.empty()) return std::nullopt;
  double sum = 0.0;
  for (const GradRatioPoint& p : r.trace) sum += p.ratio;
  return sum / static_cast<double>(r.trace.size());
}

}  // namespace promptlab
