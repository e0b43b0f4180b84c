// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <fmt/format.h>

#include <algorithm>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pdistill/cli.hpp"
#include "pdistill/errors.hpp"
#include "pdistill/msei.hpp"
#include "pdistill/rng.hpp"

namespace pdistill::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) return out;
    s = s.substr(pos + 1);
  }
}

// Views into `text`; the caller keeps it alive.
std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double to_double(std::string_view s, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("{}: '{}' is not a number", what, s));
  }
}

std::string fixed(double v) { return fmt::format("{:.6f}", v); }

struct Inputs {
  std::vector<TaskSample> samples;
  FoldPlan plan;
};

Inputs load_inputs(const ExperimentConfig& cfg) {
  const fs::path data = cfg.output_dir / kDatasetFile;
  const fs::path folds = cfg.output_dir / kFoldsFile;
  for (const auto& p : {data, folds}) {
    if (!fs::exists(p)) throw IoError(p.string() + " not found; run `pdistill generate` with this config first");
  }
  Inputs in;
  std::istringstream ds(read_file(data));
  in.samples = read_dataset(ds);
  std::istringstream fp(read_file(folds));
  in.plan = read_fold_plan(fp);
  if (in.plan.k != cfg.folds) {
    throw InvalidArgument(fmt::format("{} holds {} folds but the config asks for {}; regenerate", folds.string(),
                                      in.plan.k, cfg.folds));
  }
  validate_fold_plan(in.plan, in.samples);
  return in;
}

std::vector<TaskSample> held_out(const Inputs& in, std::size_t fold) {
  std::vector<TaskSample> out;
  for (const auto& s : in.samples) {
    if (in.plan.fold_of(s.id) == fold) out.push_back(s);
  }
  return out;
}

std::string metrics_rows(const std::string& fold, const std::string& model, const MetricsReport& r) {
  std::string out;
  auto row = [&](const TaskScores& t) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", fold, model, t.task, fixed(t.scores.precision),
                       fixed(t.scores.recall), fixed(t.scores.f1), t.tally.tp, t.tally.fp, t.tally.fn);
  };
  for (const auto& t : r.tasks) row(t);
  row(r.joint);
  return out;
}

constexpr std::string_view kMetricsHeader = "fold,model,task,precision,recall,f1,tp,fp,fn\n";

std::string runlog_jsonl(const RunLog& log) {
  std::string out;
  for (const auto& s : log.steps) {
    ordered_json j;
    j["stage"] = stage_name(s.stage);
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["task"] = task_name(s.task);
    j["total"] = s.losses.total;
    j["components"] = ordered_json::array();
    for (const auto& c : s.losses.components) {
      j["components"].push_back({{"name", c.name}, {"value", c.value}, {"weight", c.weight}});
    }
    j["train_accuracy"] = s.train_accuracy;
    out += j.dump() + "\n";
  }
  return out;
}

std::string checkpoint_index(const RunLog& log, const fs::path& base) {
  std::string out = "stage,step,role,path\n";
  for (const auto& c : log.checkpoints) {
    out += fmt::format("{},{},{},{}\n", stage_name(c.stage), c.step, role_name(c.role),
                       c.path.lexically_relative(base).generic_string());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto samples = generate_dataset(cfg.data.n_per_task, cfg.data.input_dim, cfg.data.difficulty, cfg.train.seed);
  const FoldPlan plan = kfold_split(samples, cfg.folds, cfg.train.seed);
  std::ostringstream ds;
  write_dataset(ds, samples);
  std::ostringstream fp;
  write_fold_plan(fp, plan);
  write_file_atomic(cfg.output_dir / kDatasetFile, ds.str());
  write_file_atomic(cfg.output_dir / kFoldsFile, fp.str());
}

std::string curves_csv(const RunLog& log) {
  std::string out = "stage,step,component,value\n";
  for (const auto& s : log.steps) {
    for (const auto& c : s.losses.components) {
      out += fmt::format("{},{},{},{}\n", stage_name(s.stage), s.step, c.name, c.value);
    }
  }
  return out;
}

std::vector<CurvePoint> parse_curves_csv(std::string_view text) {
  const auto rows = lines(text);
  if (rows.empty() || rows.front() != "stage,step,component,value") {
    throw InvalidArgument("curves file lacks the stage,step,component,value header");
  }
  std::vector<CurvePoint> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split(rows[i], ',');
    if (f.size() != 4) throw InvalidArgument(fmt::format("curves row {} has {} fields", i + 1, f.size()));
    parse_stage(f[0]);
    out.push_back({std::string(f[0]), static_cast<std::size_t>(to_double(f[1], "step")), std::string(f[2]),
                   to_double(f[3], "value")});
  }
  return out;
}

PipelineResult cmd_run(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const Inputs in = load_inputs(cfg);
  PipelineOptions po;
  po.ablation = options.ablation;
  po.msei_rounds = cfg.msei_rounds;
  po.workers = options.workers;
  po.output_dir = cfg.output_dir;
  PipelineResult result = run_pipeline(cfg.train, in.samples, in.plan, po);

  std::string summary(kMetricsHeader);
  for (const auto& f : result.folds) {
    const fs::path dir = cfg.output_dir / fmt::format("fold_{}", f.fold);
    std::string metrics(kMetricsHeader);
    using Row = std::pair<const char*, const MetricsReport*>;
    for (const auto& [name, report] : {Row{"large", &f.large}, Row{"medium", &f.medium}, Row{"small", &f.small}}) {
      metrics += metrics_rows(std::to_string(f.fold), name, *report);
    }
    summary += metrics.substr(kMetricsHeader.size());
    write_file_atomic(dir / "runlog.jsonl", runlog_jsonl(f.log));
    write_file_atomic(dir / "curves.csv", curves_csv(f.log));
    write_file_atomic(dir / "metrics.csv", metrics);
    write_file_atomic(dir / "checkpoints" / "index.csv", checkpoint_index(f.log, dir));
  }
  summary += metrics_rows("mean", "large", result.large);
  summary += metrics_rows("mean", "medium", result.medium);
  summary += metrics_rows("mean", "small", result.small);
  write_file_atomic(cfg.output_dir / "summary.csv", summary);
  write_file_atomic(cfg.output_dir / "run_config.conf", serialize_config(cfg));

  if (result.ablation) {
    const auto& a = *result.ablation;
    const std::pair<std::string, const MetricsReport*> rows[] = {
        {"SFT-only", &a.baseline}, {"+Pyramid", &a.pyramid}, {"+TCRD", &a.tcrd}, {"+MSEI", &a.msei}};
    std::string csv = "method,mhd_f1,mfc_f1,joint_f1\n";
    std::vector<AblationRow> table;
    for (const auto& [method, r] : rows) {
      const double mhd = r->task("MHD").scores.f1;
      const double mfc = r->task("MFC").scores.f1;
      csv += fmt::format("{},{},{},{}\n", method, fixed(mhd), fixed(mfc), fixed(r->joint.scores.f1));
      table.push_back({method, 100.0 * mhd, 100.0 * mfc});
    }
    write_file_atomic(cfg.output_dir / "ablation.csv", csv);
    write_file_atomic(cfg.output_dir / "ablation.txt", render_ablation_table(table));
  }
  return result;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names = {"gamma", "tau", "alpha", "beta"};
  return names;
}

std::vector<std::string> default_sweep_values(std::string_view parameter) {
  if (parameter == "gamma") return {"0.75", "0.50", "0.25", "0.10"};
  if (parameter == "tau") return {"1", "2", "4"};
  if (parameter == "alpha" || parameter == "beta") return {"0", "0.5", "1"};
  throw InvalidArgument(fmt::format("cannot sweep '{}'; choose gamma, tau, alpha or beta", parameter));
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& parameter,
                                const std::vector<std::string>& values, std::size_t workers) {
  cfg.validate();
  const auto& names = sweep_parameters();
  if (std::find(names.begin(), names.end(), parameter) == names.end()) {
    throw InvalidArgument(fmt::format("cannot sweep '{}'; choose gamma, tau, alpha or beta", parameter));
  }
  if (values.empty()) throw InvalidArgument("sweep needs at least one value");
  std::vector<ExperimentConfig> runs;
  for (const auto& v : values) {
    ExperimentConfig c = cfg;
    set_config_value(c, "distill." + parameter, v);
    c.validate();
    runs.push_back(std::move(c));
  }
  const Inputs in = load_inputs(cfg);

  std::vector<SweepRow> rows;
  std::string csv = "value,mhd_precision,mhd_recall,mhd_f1,mfc_precision,mfc_recall,mfc_f1,joint_f1,best\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    PipelineOptions po;
    po.workers = workers;
    const PipelineResult r = run_pipeline(runs[i].train, in.samples, in.plan, po);
    rows.push_back({values[i], r.small.task("MHD").scores, r.small.task("MFC").scores, r.small.joint.scores.f1});
  }
  const std::size_t best = best_sweep_row(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.value, fixed(r.mhd.precision), fixed(r.mhd.recall),
                       fixed(r.mhd.f1), fixed(r.mfc.precision), fixed(r.mfc.recall), fixed(r.mfc.f1),
                       fixed(r.joint_f1), i == best ? 1 : 0);
  }
  write_file_atomic(cfg.output_dir / fmt::format("sweep_{}.csv", parameter), csv);
  write_file_atomic(cfg.output_dir / fmt::format("sweep_{}.txt", parameter), render_sweep_table(parameter, rows));
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

class AdapterFactory {
 public:
  AdapterFactory(const ExperimentConfig& cfg, const std::string& spec) : cfg_(cfg), spec_(spec) {
    if (spec == "local" || spec == "oracle") return;
    if (spec.starts_with("fixed:") && spec.size() > 6) return;
    if (spec.starts_with("remote:")) {
      remote_ = std::make_unique<RemoteAdapter>(spec.substr(7));
      return;
    }
    throw InvalidArgument("unknown adapter '" + spec + "'; use local, remote:<url>, oracle or fixed:<label>");
  }

  /// The adapter for one fold's held-out items.
  ModelAdapter& for_fold(std::size_t fold, std::span<const TaskSample> items) {
    if (remote_) return *remote_;
    if (spec_ == "oracle") {
      std::map<std::string, std::string> truth;
      for (const auto& s : items) truth.emplace(s.id, std::string(class_names(s.task)[s.label]));
      current_ = std::make_unique<ContentOracleAdapter>(std::move(truth));
    } else if (spec_ == "local") {
      const fs::path ckpt = cfg_.output_dir / fmt::format("fold_{}", fold) / "checkpoints" / "tcrd" / "small-final.ckpt";
      if (!fs::exists(ckpt)) throw IoError(ckpt.string() + " not found; run `pdistill run` with this config first");
      std::istringstream in(read_file(ckpt));
      model_ = read_checkpoint(in);
      current_ = std::make_unique<LocalModelAdapter>(model_, items);
    } else {
      current_ = std::make_unique<FixedLabelAdapter>(spec_.substr(6));
    }
    return *current_;
  }

 private:
  const ExperimentConfig& cfg_;
  std::string spec_;
  std::unique_ptr<RemoteAdapter> remote_;
  std::unique_ptr<ModelAdapter> current_;
  ToyModel model_;
};

}  // namespace

MseiSummary cmd_msei(const ExperimentConfig& cfg, const std::string& adapter_spec, std::size_t rounds) {
  cfg.validate();
  if (rounds < 2) throw InvalidArgument("--rounds must be >= 2");
  AdapterFactory factory(cfg, adapter_spec);
  const Inputs in = load_inputs(cfg);
  const std::uint64_t seed = derive_seed(cfg.train.seed, "msei");

  std::string report;
  std::vector<std::pair<std::string, ConfusionTally>> pre_tally, post_tally;
  for (TaskId t : kAllTasks) {
    pre_tally.emplace_back(std::string(task_name(t)), ConfusionTally{});
    post_tally.emplace_back(std::string(task_name(t)), ConfusionTally{});
  }
  MseiSummary summary;
  std::size_t consistent = 0;
  for (std::size_t f = 0; f < in.plan.k; ++f) {
    const std::vector<TaskSample> items = held_out(in, f);
    ModelAdapter& adapter = factory.for_fold(f, items);
    for (const auto& s : items) {
      const McqItem item = classify_to_mcq(s);
      const MseiVerdict v = msei_infer(adapter, item, rounds, seed);
      const std::string& truth = item.options[s.label].content;
      const std::string& pre = item.options[*item.position_of(v.first_choice())].content;
      const std::size_t t = s.task == TaskId::MHD ? 0 : 1;
      const LabeledSet gold[] = {{s.id, {truth}}};
      const LabeledSet pre_pred[] = {{s.id, {pre}}};
      const LabeledSet post_pred[] = {{s.id, {v.final_content}}};
      pre_tally[t].second += tally(pre_pred, gold);
      post_tally[t].second += tally(post_pred, gold);

      ordered_json j = verdict_to_json(v);
      j["fold"] = f;
      j["task"] = task_name(s.task);
      j["answer_key"] = item.answer_key;
      j["pre_correct"] = pre == truth;
      j["post_correct"] = v.final_content == truth;
      report += j.dump() + "\n";
      consistent += v.consistent ? 1 : 0;
      ++summary.items;
    }
  }
  summary.consistency_rate = static_cast<double>(consistent) / static_cast<double>(summary.items);
  summary.pre_f1 = joint_micro(pre_tally).joint.scores.f1;
  summary.post_f1 = joint_micro(post_tally).joint.scores.f1;

  const std::string csv =
      fmt::format("adapter,rounds,items,consistent,consistency_rate,pre_f1,post_f1,delta_f1\n{},{},{},{},{},{},{},{}\n",
                  adapter_spec, rounds, summary.items, consistent, fixed(summary.consistency_rate),
                  fixed(summary.pre_f1), fixed(summary.post_f1), fixed(summary.post_f1 - summary.pre_f1));
  write_file_atomic(cfg.output_dir / "msei_report.jsonl", report);
  write_file_atomic(cfg.output_dir / "msei_summary.csv", csv);
  return summary;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> cmd_plot(const fs::path& run_dir, std::size_t fold) {
  const fs::path curves_path = run_dir / fmt::format("fold_{}", fold) / "curves.csv";
  if (!fs::exists(curves_path)) throw IoError(curves_path.string() + " not found; run `pdistill run` first");
  const auto points = parse_curves_csv(read_file(curves_path));
  if (points.empty()) throw InvalidArgument(curves_path.string() + " holds no loss records");

  // Render everything first so a failure leaves no partial plot set.
  std::vector<std::pair<fs::path, std::string>> plots;
  for (Stage stage : {Stage::ColdStart, Stage::PyramidLM, Stage::PyramidMS, Stage::TCRD}) {
    const std::string name(stage_name(stage));
    std::vector<Series> series;
    for (const auto& p : points) {
      if (p.stage != name) continue;
      // The refinement plot tracks the two distillation pairs only.
      if (stage == Stage::TCRD && p.component != "kd_LS" && p.component != "kd_MS") continue;
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == p.component; });
      if (it == series.end()) {
        series.push_back({p.component, {}});
        it = series.end() - 1;
      }
      it->points.emplace_back(static_cast<double>(p.step), p.value);
    }
    if (series.empty()) continue;
    plots.emplace_back(run_dir / "plots" / (name + ".svg"),
                       render_line_plot(fmt::format("{} losses (fold {})", name, fold), "step", "loss", series));
  }

  std::vector<fs::path> sweeps;
  if (fs::is_directory(run_dir)) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      const auto file = entry.path().filename().string();
      if (file.starts_with("sweep_") && entry.path().extension() == ".csv") sweeps.push_back(entry.path());
    }
  }
  std::sort(sweeps.begin(), sweeps.end());
  for (const auto& path : sweeps) {
    const std::string text = read_file(path);
    const auto rows = lines(text);
    if (rows.size() < 2) throw InvalidArgument(path.string() + " holds no sweep rows");
    const auto header = split(rows.front(), ',');
    std::vector<Series> series = {{"MHD F1", {}}, {"MFC F1", {}}, {"joint F1", {}}};
    const std::size_t cols[] = {3, 6, 7};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto f = split(rows[i], ',');
      if (f.size() != header.size()) throw InvalidArgument(path.string() + " has a malformed row");
      const double x = to_double(f[0], "sweep value");
      for (std::size_t s = 0; s < 3; ++s) series[s].points.emplace_back(x, to_double(f[cols[s]], "f1"));
    }
    for (auto& s : series) std::sort(s.points.begin(), s.points.end());
    const std::string stem = path.stem().string();
    const std::string param = stem.substr(6);
    plots.emplace_back(run_dir / "plots" / (stem + ".svg"),
                       render_line_plot("small-model F1 vs " + param, param, "micro F1", series));
  }

  std::vector<fs::path> written;
  for (const auto& [path, svg] : plots) {
    write_file_atomic(path, svg);
    written.push_back(path);
  }
  return written;
}

std::string cmd_report(const fs::path& run_dir) {
  const fs::path summary_path = run_dir / "summary.csv";
  if (!fs::exists(summary_path)) throw IoError(summary_path.string() + " not found; run `pdistill run` first");
  std::string out = "Held-out micro scores, mean over folds\n\n";
  out += fmt::format("{:<8} {:<6} {:>9} {:>9} {:>9}\n", "model", "task", "P", "R", "F1");
  const std::string summary = read_file(summary_path);
  for (const auto& row : lines(summary)) {
    const auto f = split(row, ',');
    if (f.size() != 9) throw InvalidArgument(summary_path.string() + " has a malformed row");
    if (f[0] != "mean") continue;
    out += fmt::format("{:<8} {:<6} {:>9.1f} {:>9.1f} {:>9.1f}\n", f[1], f[2],
                       100.0 * to_double(f[3], "precision"), 100.0 * to_double(f[4], "recall"),
                       100.0 * to_double(f[5], "f1"));
  }

  if (const fs::path p = run_dir / "ablation.csv"; fs::exists(p)) {
    std::vector<AblationRow> rows;
    const std::string text = read_file(p);
    const auto all = lines(text);
    for (std::size_t i = 1; i < all.size(); ++i) {
      const auto f = split(all[i], ',');
      if (f.size() != 4) throw InvalidArgument(p.string() + " has a malformed row");
      rows.push_back({std::string(f[0]), 100.0 * to_double(f[1], "mhd_f1"), 100.0 * to_double(f[2], "mfc_f1")});
    }
    out += "\nAblation (small model, F1)\n\n" + render_ablation_table(rows);
  }

  std::vector<fs::path> sweeps;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const auto file = entry.path().filename().string();
    if (file.starts_with("sweep_") && entry.path().extension() == ".csv") sweeps.push_back(entry.path());
  }
  std::sort(sweeps.begin(), sweeps.end());
  for (const auto& p : sweeps) {
    std::vector<SweepRow> rows;
    const std::string text = read_file(p);
    const auto all = lines(text);
    for (std::size_t i = 1; i < all.size(); ++i) {
      const auto f = split(all[i], ',');
      if (f.size() != 9) throw InvalidArgument(p.string() + " has a malformed row");
      auto prf = [&](std::size_t c) {
        return Prf{to_double(f[c], "precision"), to_double(f[c + 1], "recall"), to_double(f[c + 2], "f1"), false};
      };
      rows.push_back({std::string(f[0]), prf(1), prf(4), to_double(f[7], "joint_f1")});
    }
    const std::string param = p.stem().string().substr(6);
    out += "\nSweep over " + param + " (small model)\n\n" + render_sweep_table(param, rows);
  }

  if (const fs::path p = run_dir / "msei_summary.csv"; fs::exists(p)) {
    const std::string text = read_file(p);
    const auto all = lines(text);
    if (all.size() == 2) {
      const auto f = split(all[1], ',');
      if (f.size() == 8) {
        out += fmt::format("\nMSEI audit ({} adapter, {} rounds): {} items, consistency {:.1f}%, F1 {:.1f} -> {:.1f}\n",
                           f[0], f[1], f[2], 100.0 * to_double(f[4], "rate"), 100.0 * to_double(f[5], "pre_f1"),
                           100.0 * to_double(f[6], "post_f1"));
      }
    }
  }
  write_file_atomic(run_dir / "report.txt", out);
  return out;
}

}  // namespace pdistill::cli
