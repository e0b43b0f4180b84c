// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Micro-averaged precision / recall / F1 over per-sample label sets, plus
// the text renderings used by the ablation and sweep reports.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace pdistill {

struct ConfusionTally {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionTally& operator+=(const ConfusionTally& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionTally operator+(ConfusionTally a, const ConfusionTally& b) { return a += b; }
  bool operator==(const ConfusionTally&) const = default;
};

struct LabeledSet {
  std::string id;
  std::set<std::string> labels;
};

/// tp = sum |pred & gold|, fp = sum |pred \ gold|, fn = sum |gold \ pred|.
/// Samples are matched position by position and must carry equal ids.
ConfusionTally tally(std::span<const LabeledSet> predictions, std::span<const LabeledSet> golds);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when any of the three had a zero denominator and was reported as 0.
  bool zero_denominator = false;
};

Prf micro_prf(const ConfusionTally& t);

struct TaskScores {
  std::string task;
  ConfusionTally tally;
  Prf scores;
};

struct MetricsReport {
  std::vector<TaskScores> tasks;
  TaskScores joint;
  std::optional<int> fold;

  const TaskScores& task(const std::string& name) const;
};

/// Per-task scores plus the joint score of the summed tally.
MetricsReport joint_micro(std::span<const TaskScores> per_task);
MetricsReport joint_micro(std::span<const std::pair<std::string, ConfusionTally>> per_task);

/// Arithmetic mean of P, R and F1 across reports (per task and joint).
/// Tallies are summed. All reports must list the same tasks in order.
MetricsReport average_reports(std::span<const MetricsReport> reports);

/// One row of the cumulative ablation table: F1 in percent per task.
struct AblationRow {
  std::string method;
  double mhd_f1;
  double mfc_f1;
};

/// Method | MHD | MFC, each row after the first showing its delta against
/// the row above, e.g. "97.3 (+46.1)".
std::string render_ablation_table(std::span<const AblationRow> rows);

struct SweepRow {
  std::string value;
  Prf mhd;
  Prf mfc;
  double joint_f1;
};

/// Index of the row with the highest joint F1 (first on ties).
std::size_t best_sweep_row(std::span<const SweepRow> rows);

/// Parameter | MHD P R F1 | MFC P R F1, values in percent, best row marked
/// with a trailing '*'.
std::string render_sweep_table(const std::string& parameter, std::span<const SweepRow> rows);

}  // namespace pdistill
