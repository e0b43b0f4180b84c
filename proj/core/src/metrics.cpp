// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "pdistill/errors.hpp"

namespace pdistill {

ConfusionTally tally(std::span<const LabeledSet> predictions, std::span<const LabeledSet> golds) {
  if (predictions.size() != golds.size()) throw InvalidArgument("prediction and gold counts differ");
  ConfusionTally t;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto& pred = predictions[i];
    const auto& gold = golds[i];
    if (pred.id != gold.id) throw InvalidArgument("sample id mismatch: '" + pred.id + "' vs '" + gold.id + "'");
    std::uint64_t hit = 0;
    for (const auto& label : pred.labels) hit += gold.labels.contains(label) ? 1 : 0;
    t.tp += hit;
    t.fp += pred.labels.size() - hit;
    t.fn += gold.labels.size() - hit;
  }
  return t;
}

Prf micro_prf(const ConfusionTally& t) {
  Prf out;
  const auto ratio = [&](std::uint64_t num, std::uint64_t den) {
    if (den == 0) {
      out.zero_denominator = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  out.precision = ratio(t.tp, t.tp + t.fp);
  out.recall = ratio(t.tp, t.tp + t.fn);
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  } else {
    out.zero_denominator = true;
  }
  return out;
}

const TaskScores& MetricsReport::task(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.task == name) return t;
  }
  throw InvalidArgument("report has no task '" + name + "'");
}

MetricsReport joint_micro(std::span<const TaskScores> per_task) {
  if (per_task.empty()) throw InvalidArgument("joint scoring needs at least one task");
  MetricsReport r;
  r.joint.task = "joint";
  for (const auto& t : per_task) {
    r.tasks.push_back({t.task, t.tally, micro_prf(t.tally)});
    r.joint.tally += t.tally;
  }
  r.joint.scores = micro_prf(r.joint.tally);
  return r;
}

MetricsReport joint_micro(std::span<const std::pair<std::string, ConfusionTally>> per_task) {
  std::vector<TaskScores> scores;
  for (const auto& [name, t] : per_task) scores.push_back({name, t, {}});
  return joint_micro(scores);
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw InvalidArgument("nothing to average");
  MetricsReport out = reports.front();
  out.fold.reset();
  const auto n = static_cast<double>(reports.size());
  auto accumulate = [&](TaskScores& dst, auto pick) {
    dst.tally = {};
    dst.scores = {};
    for (const auto& r : reports) {
      const TaskScores& src = pick(r);
      dst.tally += src.tally;
      dst.scores.precision += src.scores.precision;
      dst.scores.recall += src.scores.recall;
      dst.scores.f1 += src.scores.f1;
      dst.scores.zero_denominator = dst.scores.zero_denominator || src.scores.zero_denominator;
    }
    dst.scores.precision /= n;
    dst.scores.recall /= n;
    dst.scores.f1 /= n;
  };
  for (std::size_t i = 0; i < out.tasks.size(); ++i) {
    for (const auto& r : reports) {
      if (r.tasks.size() != out.tasks.size() || r.tasks[i].task != out.tasks[i].task) {
        throw InvalidArgument("reports list different tasks");
      }
    }
    accumulate(out.tasks[i], [i](const MetricsReport& r) -> const TaskScores& { return r.tasks[i]; });
  }
  accumulate(out.joint, [](const MetricsReport& r) -> const TaskScores& { return r.joint; });
  return out;
}

// ---------------------------------------------------------------------------

std::string render_ablation_table(std::span<const AblationRow> rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  auto cell = [](double value, const AblationRow* prev, double prev_value) {
    if (prev == nullptr) return fmt::format("{:.1f}", value);
    return fmt::format("{:.1f} ({:+.1f})", value, value - prev_value);
  };
  std::string out = fmt::format("{:<{}} | {:<14} | {:<14}\n", "Method", width, "MHD", "MFC");
  out += std::string(width, '-') + "-|-" + std::string(14, '-') + "-|-" + std::string(14, '-') + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const AblationRow* prev = i == 0 ? nullptr : &rows[i - 1];
    out += fmt::format("{:<{}} | {:<14} | {:<14}\n", rows[i].method, width,
                       cell(rows[i].mhd_f1, prev, prev ? prev->mhd_f1 : 0.0),
                       cell(rows[i].mfc_f1, prev, prev ? prev->mfc_f1 : 0.0));
  }
  return out;
}

std::size_t best_sweep_row(std::span<const SweepRow> rows) {
  if (rows.empty()) throw InvalidArgument("empty sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].joint_f1 > rows[best].joint_f1) best = i;
  }
  return best;
}

std::string render_sweep_table(const std::string& parameter, std::span<const SweepRow> rows) {
  const std::size_t best = best_sweep_row(rows);
  std::size_t width = std::max<std::size_t>(parameter.size(), 6);
  for (const auto& r : rows) width = std::max(width, r.value.size() + 2);
  std::string out = fmt::format("{:<{}} | {:^23} | {:^23}\n", "", width, "MHD", "MFC");
  out += fmt::format("{:<{}} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}\n", parameter, width, "P", "R", "F1", "P",
                     "R", "F1");
  out += std::string(width, '-') + "-|-" + std::string(23, '-') + "-|-" + std::string(23, '-') + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string label = "= " + r.value;
    out += fmt::format("{:<{}} | {:>7.1f} {:>7.1f} {:>7.1f} | {:>7.1f} {:>7.1f} {:>7.1f}{}\n", label, width,
                       100.0 * r.mhd.precision, 100.0 * r.mhd.recall, 100.0 * r.mhd.f1, 100.0 * r.mfc.precision,
                       100.0 * r.mfc.recall, 100.0 * r.mfc.f1, i == best ? " *" : "");
  }
  return out;
}

}  // namespace pdistill
