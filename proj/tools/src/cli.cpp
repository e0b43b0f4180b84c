// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <optional>
#include <ostream>

#include "pdistill/cli.hpp"
#include "pdistill/errors.hpp"

namespace pdistill::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> folds;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config file (key = value lines)");
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--out", flags.out, "override output.dir");
  cmd->add_option("--folds", flags.folds, "override the fold count");
}

ExperimentConfig resolve(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.config.empty() ? ExperimentConfig{} : load_config(flags.config);
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  if (flags.folds) cfg.folds = *flags.folds;
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_values(const std::string& list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) throw InvalidArgument("empty entry in --values");
    out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pdistill: progressive hybrid distillation on synthetic two-task data", "pdistill"};
  app.require_subcommand(1);

  CommonFlags common;
  bool ablation = false;
  std::string param = "gamma";
  std::string values;
  std::string adapter = "local";
  std::optional<std::size_t> rounds;
  std::string run_dir;
  std::size_t fold = 0;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset and its fold plan");
  auto* run = app.add_subcommand("run", "train every fold through all stages and write reports");
  auto* sweep = app.add_subcommand("sweep", "one pipeline per value of a distillation weight");
  auto* msei = app.add_subcommand("msei", "mapping-shift audit of a model over the held-out folds");
  auto* plot = app.add_subcommand("plot", "SVG loss curves and sweep plots for a run directory");
  auto* report = app.add_subcommand("report", "render the tables of a run directory");
  for (auto* cmd : {gen, run, sweep, msei, plot, report}) add_common(cmd, common);
  run->add_flag("--ablation", ablation, "also train the SFT-only baseline and emit the ablation table");
  sweep->add_option("--param", param, "gamma, tau, alpha or beta")->capture_default_str();
  sweep->add_option("--values", values, "comma-separated values (default depends on --param)");
  msei->add_option("--adapter", adapter, "local | remote:<url> | oracle | fixed:<label>")->capture_default_str();
  msei->add_option("--rounds", rounds, "query rounds per item (default msei.rounds)");
  for (auto* cmd : {plot, report}) cmd->add_option("run_dir", run_dir, "run directory (default output.dir)");
  plot->add_option("--fold", fold, "fold whose curves to plot")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    const ExperimentConfig cfg = resolve(common);
    const std::filesystem::path dir = run_dir.empty() ? cfg.output_dir : std::filesystem::path(run_dir);
    if (gen->parsed()) {
      cmd_generate(cfg);
      out << fmt::format("wrote {} and {}\n", (cfg.output_dir / kDatasetFile).string(),
                         (cfg.output_dir / kFoldsFile).string());
    } else if (run->parsed()) {
      const auto result = cmd_run(cfg, {ablation, worker_count(cfg.folds)});
      out << fmt::format("trained {} folds; small-model joint F1 {:.4f}; wrote {}\n", result.folds.size(),
                         result.small.joint.scores.f1, (cfg.output_dir / "summary.csv").string());
    } else if (sweep->parsed()) {
      const auto list = values.empty() ? default_sweep_values(param) : split_values(values);
      const auto rows = cmd_sweep(cfg, param, list, worker_count(cfg.folds));
      out << render_sweep_table(param, rows);
    } else if (msei->parsed()) {
      const auto s = cmd_msei(cfg, adapter, rounds.value_or(cfg.msei_rounds));
      out << fmt::format("audited {} items; consistency {:.4f}; F1 {:.4f} -> {:.4f}\n", s.items, s.consistency_rate,
                         s.pre_f1, s.post_f1);
    } else if (plot->parsed()) {
      for (const auto& p : cmd_plot(dir, fold)) out << "wrote " << p.string() << "\n";
    } else if (report->parsed()) {
      out << cmd_report(dir);
    }
    return kExitOk;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NetworkError& e) {
    err << "network error: " << e.what() << "\n";
    return kExitNetwork;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace pdistill::cli
