// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "pdistill/datagen.hpp"
#include "pdistill/errors.hpp"
#include "pdistill/rng.hpp"
#include "pdistill/trainer.hpp"

using namespace pdistill;

namespace {

std::vector<TaskSample> of_task(const std::vector<TaskSample>& all, TaskId task) {
  std::vector<TaskSample> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out), [&](const auto& s) { return s.task == task; });
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic and seed-sensitive") {
  const auto a = generate_dataset(40, 8, 0.4, 11);
  const auto b = generate_dataset(40, 8, 0.4, 11);
  const auto c = generate_dataset(40, 8, 0.4, 12);
  CHECK(a == b);
  CHECK(a != c);
  REQUIRE(a.size() == 80);
  std::set<std::string> ids;
  for (const auto& s : a) {
    CHECK(ids.insert(s.id).second);
    CHECK(s.features.size() == 8);
    CHECK(s.label < num_classes(s.task));
    CHECK(s.provenance == Provenance::Generated);
    CHECK_FALSE(entity_spans(s.text).empty());
  }
}

TEST_CASE("classes are balanced within each task") {
  const auto data = generate_dataset(103, 6, 0.5, 3);
  for (TaskId task : kAllTasks) {
    std::map<std::size_t, int> counts;
    for (const auto& s : of_task(data, task)) ++counts[s.label];
    REQUIRE(counts.size() == num_classes(task));
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end(),
                                              [](const auto& x, const auto& y) { return x.second < y.second; });
    CHECK(hi->second - lo->second <= 1);
  }
}

TEST_CASE("faithful MHD claims carry no hallucinated span, the others exactly one") {
  for (const auto& s : of_task(generate_dataset(60, 6, 0.5, 5), TaskId::MHD)) {
    const auto spans = entity_spans(s.text);
    const auto marked = std::count_if(spans.begin(), spans.end(), [](const auto& e) { return e.hallucinated; });
    CHECK(marked == (s.label == kMhdFaithful ? 0 : 1));
  }
}

TEST_CASE("generator rejects bad arguments") {
  CHECK_THROWS_AS(generate_dataset(5, 8, 0.4, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(20, 2, 0.4, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(20, 8, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(20, 8, 1.5, 1), InvalidArgument);
}

TEST_CASE("entity span parsing") {
  const auto spans = entity_spans("a [[red car]] passes a [[!brown dog]].");
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == EntitySpan{2, 13, "red car", false});
  CHECK(spans[1] == EntitySpan{23, 37, "brown dog", true});
  CHECK(entity_spans("no entities").empty());
  CHECK_THROWS_AS(entity_spans("open [[span"), InvalidArgument);
}

TEST_CASE("category directions are unit length and stable") {
  const auto v = category_direction("animal", 12);
  double n = 0.0;
  for (double x : v) n += x * x;
  CHECK_THAT(n, Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK(v == category_direction("animal", 12));
  CHECK(v != category_direction("vehicle", 12));
}

TEST_CASE("an easy dataset is learnable by the large model") {
  const auto data = generate_dataset(200, 16, 0.05, 21);
  const FoldPlan plan = kfold_split(data, 5, 21);
  std::vector<TaskSample> train, test;
  for (const auto& s : data) (plan.fold_of(s.id) == 0 ? test : train).push_back(s);
  TrainConfig cfg;
  cfg.seed = 21;
  auto large = ToyModel::init(CapacityTier::defaults(Tier::Large), 16, 21);
  train_supervised(large, TrainSplit::from(train), 400, cfg, 7, Stage::ColdStart, Role::Large);
  CHECK(evaluate(large, test).joint.scores.f1 >= 0.95);
}

TEST_CASE("SNS replaces exactly one span and relabels as refuted") {
  const auto data = generate_dataset(300, 8, 0.4, 9);
  std::vector<TaskSample> negatives, positives;
  for (const auto& s : data) {
    if (s.task == TaskId::MHD && s.label != kMhdFaithful) negatives.push_back(s);
    if (s.task == TaskId::MFC && s.label == kMfcSupported) positives.push_back(s);
  }
  const auto aug = sns_augment(negatives, positives, EntityBank::defaults(), 1.0, 9);
  REQUIRE(aug.size() == positives.size());
  for (const auto& a : aug) {
    const auto src = std::find_if(positives.begin(), positives.end(), [&](const auto& p) { return a.id == p.id + "#sns"; });
    REQUIRE(src != positives.end());
    CHECK(a.label == kMfcRefuted);
    CHECK(a.provenance == Provenance::Sns);
    const auto before = entity_spans(src->text), after = entity_spans(a.text);
    REQUIRE(before.size() == after.size());
    int changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i].surface != after[i].surface) {
        ++changed;
        CHECK(after[i].hallucinated);
      }
    }
    CHECK(changed == 1);
  }
}

TEST_CASE("SNS count rounds rate * n up") {
  const auto data = generate_dataset(120, 8, 0.4, 2);
  std::vector<TaskSample> negatives, positives;
  for (const auto& s : data) {
    if (s.task == TaskId::MHD && s.label != kMhdFaithful) negatives.push_back(s);
    if (s.task == TaskId::MFC && s.label == kMfcSupported) positives.push_back(s);
  }
  REQUIRE(positives.size() == 30);
  const auto bank = EntityBank::defaults();
  CHECK(sns_augment(negatives, positives, bank, 0.1, 1).size() == 3);
  CHECK(sns_augment(negatives, positives, bank, 0.11, 1).size() == 4);
  CHECK(sns_augment(negatives, positives, bank, 0.0, 1).empty());
  CHECK(sns_augment(negatives, positives, bank, 0.1, 1) == sns_augment(negatives, positives, bank, 0.1, 1));
  CHECK_THROWS_AS(sns_augment(negatives, positives, bank, 1.5, 1), InvalidArgument);
  CHECK_THROWS_AS(sns_augment({}, positives, EntityBank{}, 0.1, 1), InvalidArgument);
}

TEST_CASE("kfold split is a stratified partition") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + rng.index(200);
    const std::size_t k = 2 + rng.index(std::min<std::size_t>(9, n - 1));
    std::vector<std::string> ids, strata;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("x" + std::to_string(rng.next_u64()) + "-" + std::to_string(i));
      strata.push_back("c" + std::to_string(rng.index(4)));
    }
    const FoldPlan plan = kfold_split(ids, strata, k, rng.next_u64());
    REQUIRE(plan.assignments.size() == n);
    std::vector<std::size_t> sizes(k, 0);
    std::map<std::string, std::vector<std::size_t>> per_stratum;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t f = plan.fold_of(ids[i]);
      REQUIRE(f < k);
      ++sizes[f];
      per_stratum[strata[i]].resize(k, 0);
      ++per_stratum[strata[i]][f];
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    for (const auto& [key, counts] : per_stratum) {
      CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    }
  }
}

TEST_CASE("kfold split errors") {
  const std::vector<std::string> ids = {"a", "b", "a"}, strata = {"x", "x", "x"};
  CHECK_THROWS_AS(kfold_split(ids, strata, 2, 1), InvalidArgument);
  CHECK_THROWS_AS(kfold_split(ids, strata, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(kfold_split(ids, strata, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(kfold_split(ids, std::vector<std::string>{"x"}, 2, 1), InvalidArgument);
  CHECK_THROWS_AS(FoldPlan{}.fold_of("nope"), InvalidArgument);
}

TEST_CASE("mix_batches covers each sample once in task-homogeneous batches") {
  const auto batches = mix_batches(200, 100, 10, 5);
  REQUIRE(batches.size() == 30);
  std::size_t mhd = 0, mfc = 0;
  std::set<std::size_t> seen_mhd, seen_mfc;
  for (const auto& b : batches) {
    CHECK(b.indices.size() == 10);
    auto& seen = b.task == TaskId::MHD ? seen_mhd : seen_mfc;
    (b.task == TaskId::MHD ? mhd : mfc)++;
    for (std::size_t i : b.indices) CHECK(seen.insert(i).second);
  }
  CHECK(mhd == 20);
  CHECK(mfc == 10);
  CHECK(seen_mhd.size() == 200);
  CHECK(seen_mfc.size() == 100);
  // Interleaved, not blocked: no run of more than two MHD batches in a row.
  std::size_t run = 0, longest = 0;
  for (const auto& b : batches) {
    run = b.task == TaskId::MHD ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  CHECK(longest <= 2);
  CHECK_THROWS_AS(mix_batches(0, 10, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(mix_batches(10, 10, 0, 1), InvalidArgument);
}

TEST_CASE("batch stream cycles through epochs") {
  BatchStream a(7, 5, 3, 99), b(7, 5, 3, 99);
  std::size_t seen = 0;
  for (int i = 0; i < 20; ++i) {
    const Batch& x = a.next();
    const Batch& y = b.next();
    CHECK(x.indices == y.indices);
    seen += x.indices.size();
  }
  CHECK(a.epoch() >= 3);
  CHECK(seen > 36);
}

TEST_CASE("dataset and fold files round-trip") {
  auto data = generate_dataset(20, 5, 0.3, 4);
  data[3].text = "quote \" and \\ backslash [[red car]]";
  std::stringstream ds;
  write_dataset(ds, data);
  CHECK(read_dataset(ds) == data);

  const FoldPlan plan = kfold_split(data, 4, 4);
  std::stringstream fs;
  write_fold_plan(fs, plan);
  CHECK(read_fold_plan(fs) == plan);

  std::stringstream bad("{\"id\": \"x\"}\n");
  CHECK_THROWS_AS(read_dataset(bad), InvalidArgument);
  std::stringstream junk("not json");
  CHECK_THROWS_AS(read_fold_plan(junk), InvalidArgument);
}
