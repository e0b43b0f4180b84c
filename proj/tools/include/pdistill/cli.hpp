// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// The `pdistill` command line: experiment configuration, the six
// subcommands, and the report/plot writers they share.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdistill/metrics.hpp"
#include "pdistill/trainer.hpp"

namespace pdistill::cli {

// --- configuration ---------------------------------------------------------

struct DataSpec {
  std::size_t n_per_task = 500;
  std::size_t input_dim = 16;
  double difficulty = 0.4;

  bool operator==(const DataSpec&) const = default;
};

struct ExperimentConfig {
  DataSpec data;
  /// Carries the seed, the distillation weights and the SNS rate.
  TrainConfig train;
  std::size_t folds = 5;
  std::size_t msei_rounds = 2;
  std::filesystem::path output_dir = "runs/default";

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Every recognised key, in serialization order.
const std::vector<std::string>& config_keys();
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);
/// InvalidArgument for unknown keys or malformed values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// `key = value` lines; `#` starts a comment. Keys absent from the text keep
/// their defaults; unknown or repeated keys are errors. The result is
/// validated.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

// --- file helpers ----------------------------------------------------------

/// Writes through a sibling temp file and renames it into place, so a failed
/// write never leaves a partial file behind. IoError on failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Fold-parallelism: hardware threads, capped by PDISTILL_WORKERS and by `jobs`.
std::size_t worker_count(std::size_t jobs);

// --- subcommands -----------------------------------------------------------

inline constexpr std::string_view kDatasetFile = "dataset.jsonl";
inline constexpr std::string_view kFoldsFile = "folds.json";

/// Writes <out>/dataset.jsonl and <out>/folds.json.
void cmd_generate(const ExperimentConfig& cfg);

struct RunOptions {
  bool ablation = false;
  std::size_t workers = 1;
};

/// Trains every fold from <out>/dataset.jsonl + folds.json and writes
/// fold_i/{runlog.jsonl,curves.csv,metrics.csv,checkpoints/}, summary.csv and,
/// with ablation, ablation.csv + ablation.txt.
PipelineResult cmd_run(const ExperimentConfig& cfg, const RunOptions& options);

/// Names accepted by cmd_sweep.
const std::vector<std::string>& sweep_parameters();
/// Table-4 row labels used when no values are given.
std::vector<std::string> default_sweep_values(std::string_view parameter);

/// One pipeline per value; rows report the small model. Writes
/// sweep_<param>.csv and sweep_<param>.txt.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter,
                                const std::vector<std::string>& values, std::size_t workers);

struct MseiSummary {
  std::size_t items = 0;
  double consistency_rate = 0.0;
  double pre_f1 = 0.0;
  double post_f1 = 0.0;
};

/// Adapter specs: `local` (the trained small model of each fold),
/// `remote:<url>`, `oracle` (true content), `fixed:<label>`. Audits the
/// held-out fold of every item and writes msei_report.jsonl and
/// msei_summary.csv.
MseiSummary cmd_msei(const ExperimentConfig& cfg, const std::string& adapter_spec, std::size_t rounds);

/// Reads <run>/fold_<fold>/curves.csv and writes plots/<stage>.svg per stage,
/// plus plots/sweep_<param>.svg for every sweep table in the run directory.
/// Returns the written paths.
std::vector<std::filesystem::path> cmd_plot(const std::filesystem::path& run_dir, std::size_t fold);

/// Renders the summary, ablation and sweep tables found in a run directory
/// and writes them to <run>/report.txt as well.
std::string cmd_report(const std::filesystem::path& run_dir);

// --- plots -----------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Deterministic SVG line chart with axes, ticks and a legend.
std::string render_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                             const std::vector<Series>& series);

struct CurvePoint {
  std::string stage;
  std::size_t step;
  std::string component;
  double value;
};

std::string curves_csv(const RunLog& log);
std::vector<CurvePoint> parse_curves_csv(std::string_view text);

// --- entry point -----------------------------------------------------------

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitIo = 3, kExitNetwork = 4 };

/// Parses argv (without the program name) and runs a subcommand, mapping
/// errors to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdistill::cli
