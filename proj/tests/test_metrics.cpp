// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <iterator>
#include <sstream>

#include "pdistill/errors.hpp"
#include "pdistill/metrics.hpp"
#include "pdistill/rng.hpp"

using namespace pdistill;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::set<std::string> random_labels(Rng& rng) {
  static const char* kPool[] = {"a", "b", "c", "d", "e"};
  std::set<std::string> s;
  for (const char* l : kPool) {
    if (rng.uniform() < 0.35) s.insert(l);
  }
  return s;
}

}  // namespace

TEST_CASE("worked example") {
  const Prf p = micro_prf({2, 1, 1});
  CHECK(p.precision == 2.0 / 3.0);
  CHECK(p.recall == 2.0 / 3.0);
  CHECK_THAT(p.f1, WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_FALSE(p.zero_denominator);
}

TEST_CASE("zero denominators report 0 and set the flag") {
  const Prf empty = micro_prf({0, 0, 0});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  CHECK(empty.zero_denominator);
  const Prf no_pred = micro_prf({0, 0, 3});
  CHECK(no_pred.f1 == 0.0);
  CHECK(no_pred.zero_denominator);
}

TEST_CASE("tally agrees with brute-force set arithmetic") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    std::vector<LabeledSet> pred(n), gold(n);
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = {std::to_string(i), random_labels(rng)};
      gold[i] = {std::to_string(i), random_labels(rng)};
      std::vector<std::string> both, only_p, only_g;
      std::set_intersection(pred[i].labels.begin(), pred[i].labels.end(), gold[i].labels.begin(),
                            gold[i].labels.end(), std::back_inserter(both));
      std::set_difference(pred[i].labels.begin(), pred[i].labels.end(), gold[i].labels.begin(), gold[i].labels.end(),
                          std::back_inserter(only_p));
      std::set_difference(gold[i].labels.begin(), gold[i].labels.end(), pred[i].labels.begin(), pred[i].labels.end(),
                          std::back_inserter(only_g));
      tp += both.size();
      fp += only_p.size();
      fn += only_g.size();
    }
    const ConfusionTally t = tally(pred, gold);
    CHECK(t == ConfusionTally{tp, fp, fn});
    const Prf p = micro_prf(t);
    if (tp + fp > 0) CHECK(p.precision == static_cast<double>(tp) / static_cast<double>(tp + fp));
    if (tp + fn > 0) CHECK(p.recall == static_cast<double>(tp) / static_cast<double>(tp + fn));
    CHECK(p.f1 >= std::min(p.precision, p.recall) - 1e-15);
    CHECK(p.f1 <= std::max(p.precision, p.recall) + 1e-15);
    if (tp > 0) CHECK_THAT(p.f1, WithinAbs(2.0 * tp / static_cast<double>(2 * tp + fp + fn), 1e-14));
  }
}

TEST_CASE("tally rejects misaligned inputs") {
  const std::vector<LabeledSet> a = {{"x", {"a"}}}, b = {{"y", {"a"}}};
  CHECK_THROWS_AS(tally(a, b), InvalidArgument);
  CHECK_THROWS_AS(tally(a, std::vector<LabeledSet>{}), InvalidArgument);
}

TEST_CASE("joint score pools the per-task tallies") {
  const std::vector<std::pair<std::string, ConfusionTally>> parts = {{"MHD", {8, 2, 2}}, {"MFC", {1, 3, 3}}};
  const MetricsReport r = joint_micro(parts);
  CHECK(r.joint.tally == ConfusionTally{9, 5, 5});
  CHECK_THAT(r.joint.scores.f1, WithinAbs(9.0 / 14.0, 1e-15));
  CHECK_THAT(r.task("MHD").scores.f1, WithinAbs(0.8, 1e-15));
  CHECK_THROWS_AS(r.task("XYZ"), InvalidArgument);
  CHECK_THROWS_AS(joint_micro(std::span<const TaskScores>{}), InvalidArgument);
}

TEST_CASE("averaging takes the mean of scores and the sum of tallies") {
  const std::vector<std::pair<std::string, ConfusionTally>> a = {{"MHD", {1, 1, 0}}, {"MFC", {2, 0, 0}}};
  const std::vector<std::pair<std::string, ConfusionTally>> b = {{"MHD", {1, 0, 1}}, {"MFC", {0, 0, 2}}};
  const std::vector<MetricsReport> reports = {joint_micro(a), joint_micro(b)};
  const MetricsReport avg = average_reports(reports);
  CHECK_THAT(avg.task("MHD").scores.precision, WithinAbs(0.75, 1e-15));
  CHECK_THAT(avg.task("MFC").scores.f1, WithinAbs(0.5, 1e-15));
  CHECK_THAT(avg.joint.scores.f1,
             WithinAbs((reports[0].joint.scores.f1 + reports[1].joint.scores.f1) / 2.0, 1e-12));
  CHECK(avg.task("MFC").tally == ConfusionTally{2, 0, 2});
  CHECK_FALSE(avg.fold.has_value());
  CHECK_THROWS_AS(average_reports(std::span<const MetricsReport>{}), InvalidArgument);
}

TEST_CASE("ablation table shows deltas against the row above") {
  const std::vector<AblationRow> rows = {{"SFT-only", 51.2, 50.0}, {"+Pyramid", 97.3, 94.5}};
  const std::string table = render_ablation_table(rows);
  CHECK_THAT(table, ContainsSubstring("51.2"));
  CHECK_THAT(table, ContainsSubstring("97.3 (+46.1)"));
  CHECK_THAT(table, ContainsSubstring("94.5 (+44.5)"));
}

TEST_CASE("sweep table marks the best joint row") {
  std::vector<SweepRow> rows;
  for (const char* v : {"0.75", "0.50", "0.25", "0.10"}) rows.push_back({v, {0.9, 0.9, 0.9}, {0.8, 0.8, 0.8}, 0.85});
  rows[2].joint_f1 = 0.9;
  CHECK(best_sweep_row(rows) == 2);
  const std::string table = render_sweep_table("gamma", rows);
  std::vector<std::string> lines;
  std::istringstream in(table);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 7);
  CHECK(std::count(table.begin(), table.end(), '*') == 1);
  CHECK(lines[5].ends_with(" *"));
  CHECK_THAT(lines[3], ContainsSubstring("0.75"));
  CHECK_THROWS_AS(best_sweep_row(std::span<const SweepRow>{}), InvalidArgument);
}
