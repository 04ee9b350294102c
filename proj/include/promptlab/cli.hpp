#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptlab/config.hpp"
#include "promptlab/sweep.hpp"

namespace promptlab {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  bool quiet = false;
};

namespace cli {

inline void log(const CliOptions& opt, const std::string& msg) {
  if (!opt.quiet) std::cout << msg << "\n";
}

inline ExperimentConfig load_effective_config(const CliOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty()) cfg = parse_config(read_text_file(opt.config_path));
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  if (opt.has_seed) cfg.seeds = {opt.seed};
  cfg.validate();
  return cfg;
}

// Canonical compact dump; embedded into every file the CLI writes.
inline std::string config_echo_string(const ExperimentConfig& cfg) {
  return encode_experiment_config(cfg).dump();
}

inline std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  return dir;
}

inline void write_json_file(const std::string& path, Json j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Prints every failed cell with its coordinates. The command only counts as
// failed when nothing succeeded at all.
inline int finish_report_command(const CliOptions& opt, SweepReport& rep,
                                 const ExperimentConfig& cfg, const std::string& base) {
  rep.config_echo = config_echo_string(cfg);
  const std::filesystem::path dir = prepare_out_dir(cfg);
  const std::string json_path = (dir / (base + ".json")).string();
  const std::string csv_path = (dir / (base + ".csv")).string();
  emit_report(rep, ReportFormat::Json, json_path);
  emit_report(rep, ReportFormat::Csv, csv_path);
  log(opt, "wrote " + json_path);
  log(opt, "wrote " + csv_path);

  std::size_t failed = 0;
  for (const RunReport& r : rep.runs) {
    if (!r.failed()) continue;
    ++failed;
    std::cerr << "cell failed: seed=" << r.world_seed << " method=" << r.method
              << " noise=" << noise_kind_name(r.noise_kind) << " rate=" << fmt_double(r.noise_rate)
              << " loss=" << loss_kind_name(r.loss.kind) << ": " << r.error << "\n";
  }
  if (!rep.runs.empty() && failed == rep.runs.size()) {
    std::cerr << "error: every sweep cell failed\n";
    return 2;
  }
  return 0;
}

inline int cmd_gen(const CliOptions& opt) {
  const ExperimentConfig cfg = load_effective_config(opt);
  const std::string echo = config_echo_string(cfg);
  const std::filesystem::path dir = prepare_out_dir(cfg);
  for (std::uint64_t s : cfg.seeds) {
    WorldConfig wc = cfg.world;
    wc.seed = s;
    const World world = generate_world(wc);

    Json jworld = encode_world(world);
    jworld["config_echo"] = parse_json_text(echo, "config_echo");
    const std::string world_path = (dir / ("world_s" + std::to_string(s) + ".json")).string();
    write_json_file(world_path, std::move(jworld));
    log(opt, "wrote " + world_path);

    for (Split split : {Split::Train, Split::Test, Split::Unlabeled}) {
      const EmbeddingDataset ds = sample_dataset(world, split);
      const std::string stem = "dataset_s" + std::to_string(s) + "_" + split_name(split);
      const std::string csv_path = (dir / (stem + ".csv")).string();
      write_text_file(csv_path, render_dataset_csv(ds));
      DatasetSidecar sidecar;
      sidecar.world = wc;
      sidecar.split = split_name(split);
      Json jside = encode_dataset_sidecar(sidecar);
      jside["config_echo"] = parse_json_text(echo, "config_echo");
      const std::string side_path = (dir / (stem + ".json")).string();
      write_json_file(side_path, std::move(jside));
      log(opt, "wrote " + csv_path);
      log(opt, "wrote " + side_path);
    }
  }
  return 0;
}

inline int cmd_sweep(const CliOptions& opt, bool attach_trace, const std::string& base) {
  const ExperimentConfig cfg = load_effective_config(opt);
  SweepOptions so;
  so.attach_trace = attach_trace;
  SweepReport rep =
      run_noise_sweep(cfg.seeds, cfg.methods, cfg.noise, cfg.losses, cfg.world, cfg.train, so);
  return finish_report_command(opt, rep, cfg, base);
}

inline int cmd_confusion(const CliOptions& opt) {
  const ExperimentConfig cfg = load_effective_config(opt);
  const std::string echo = config_echo_string(cfg);
  const std::filesystem::path dir = prepare_out_dir(cfg);

  for (std::uint64_t s : cfg.seeds) {
    WorldConfig wc = cfg.world;
    wc.seed = s;
    const World world = generate_world(wc);
    const EmbeddingDataset train_clean = sample_dataset(world, Split::Train);
    const Matrix conf = zero_shot_confusion(world, train_clean, kConfusionRuns,
                                            derive_seed(s, seed_tags::kConfusionRuns));
    Json j = Json::object();
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = "confusion";
    j["world"] = encode_world_config(wc);
    j["runs"] = kConfusionRuns;
    j["matrix"] = encode_matrix(conf);
    j["config_echo"] = parse_json_text(echo, "config_echo");
    const std::string path = (dir / ("confusion_s" + std::to_string(s) + ".json")).string();
    write_json_file(path, std::move(j));
    log(opt, "wrote " + path);
  }

  // Same grid as sweep, with every noise spec switched to confusion noise;
  // each world fills in its own estimated matrix.
  std::vector<NoiseSpec> confusion_axis;
  for (const NoiseSpec& n : cfg.noise) {
    NoiseSpec c;
    c.kind = NoiseKind::Confusion;
    c.rate = n.rate;
    confusion_axis.push_back(std::move(c));
  }
  SweepReport rep = run_noise_sweep(cfg.seeds, cfg.methods, confusion_axis, cfg.losses, cfg.world,
                                    cfg.train, SweepOptions{});
  return finish_report_command(opt, rep, cfg, "confusion_report");
}

inline int cmd_upl(const CliOptions& opt) {
  const ExperimentConfig cfg = load_effective_config(opt);
  SweepReport rep = run_upl_comparison(cfg.seeds, cfg.world, cfg.train, cfg.upl);
  return finish_report_command(opt, rep, cfg, "upl_report");
}

inline int cmd_report(const CliOptions& opt) {
  const ExperimentConfig cfg = load_effective_config(opt);
  const std::filesystem::path dir(cfg.output_dir);
  if (!std::filesystem::is_directory(dir))
    throw IoError("not a directory: " + cfg.output_dir);

  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 12 && name.ends_with("_report.json")) inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) {
    std::cerr << "error: no *_report.json files in " << cfg.output_dir << "\n";
    return 2;
  }
  for (const std::filesystem::path& in : inputs) {
    const SweepReport rep = parse_sweep_report(read_text_file(in.string()));
    std::filesystem::path out = in;
    out.replace_extension(".csv");
    emit_report(rep, ReportFormat::Csv, out.string());
    log(opt, "wrote " + out.string());
  }
  return 0;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"prompt-tuning label-noise laboratory on a synthetic frozen encoder"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON experiment config");
  app.add_option("--out", opt.out_dir, "output directory (overrides the config's output_dir)");
  CLI::Option* seed_opt =
      app.add_option("--seed", opt.seed, "replace the config's seed list with this one seed");
  app.add_flag("--quiet", opt.quiet, "suppress progress lines");

  CLI::App* gen = app.add_subcommand("gen", "generate world and dataset files");
  CLI::App* sweep = app.add_subcommand("sweep", "accuracy sweep over methods x noise x losses");
  CLI::App* gradratio =
      app.add_subcommand("gradratio", "sweep with the noisy/clean gradient probe attached");
  CLI::App* confusion = app.add_subcommand(
      "confusion", "estimate per-world confusion matrices, then sweep under confusion noise");
  CLI::App* upl =
      app.add_subcommand("upl", "pseudo-label selection and ensemble training comparison");
  CLI::App* report =
      app.add_subcommand("report", "re-render CSV files from stored report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }
  opt.has_seed = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cli::cmd_gen(opt);
    if (sweep->parsed()) return cli::cmd_sweep(opt, false, "sweep_report");
    if (gradratio->parsed()) return cli::cmd_sweep(opt, true, "gradratio_report");
    if (confusion->parsed()) return cli::cmd_confusion(opt);
    if (upl->parsed()) return cli::cmd_upl(opt);
    if (report->parsed()) return cli::cmd_report(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace promptlab
