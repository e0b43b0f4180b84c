// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers as arguments to run a
// subset.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "../support.hpp"
#include "pdistill/cli.hpp"
#include "pdistill/datagen.hpp"
#include "pdistill/losses.hpp"
#include "pdistill/metrics.hpp"
#include "pdistill/msei.hpp"
#include "pdistill/trainer.hpp"

using namespace pdistill;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // <= 0: no limit
  std::function<Outcome()> run;
};

double kl_direct(std::span<const double> zt, std::span<const double> zs, double tau) {
  const RealVector p = softmax(zt, tau), q = softmax(zs, tau);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return tau * tau * kl;
}

// 1 -------------------------------------------------------------------------
Outcome loss_gradient() {
  Rng rng(101);
  const double taus[] = {0.5, 1.0, 2.0, 4.0};
  double worst_fd = 0.0, worst_tape = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const double tau = taus[draw % 4];
    const std::size_t n = 2 + rng.index(6);
    const RealVector zt = testing::random_logits(rng, n), zs = testing::random_logits(rng, n);
    const RealVector pt = softmax(zt, tau), ps = softmax(zs, tau);
    RealVector closed(n);
    for (std::size_t i = 0; i < n; ++i) closed[i] = tau * (ps[i] - pt[i]);
    const GradientFn fn = [&](std::span<const double> s, std::span<double> g) {
      if (!g.empty()) std::copy(closed.begin(), closed.end(), g.begin());
      return kd_loss(zt, s, tau);
    };
    worst_fd = std::max(worst_fd, fd_check(fn, zs, 1e-5));
    const RealVector tape = kd_loss_grad(zt, zs, tau);
    for (std::size_t i = 0; i < n; ++i) worst_tape = std::max(worst_tape, std::abs(tape[i] - closed[i]));
  }
  return {worst_fd < 1e-5 && worst_tape < 1e-12,
          fmt::format("max rel err vs central FD {:.2e}; reverse-mode vs closed form {:.2e}", worst_fd, worst_tape)};
}

// 2 -------------------------------------------------------------------------
Outcome kl_properties() {
  Rng rng(202);
  double min_kl = 1.0, max_same = 0.0, max_shift = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + rng.index(6);
    const double tau = rng.uniform(0.25, 8.0);
    const RealVector a = testing::random_logits(rng, n, 8.0), b = testing::random_logits(rng, n, 8.0);
    const double kl = kd_loss(a, b, tau);
    min_kl = std::min(min_kl, kl);
    RealVector shifted = b;
    const double c = rng.uniform(-50.0, 50.0);
    for (double& v : shifted) v += c;
    max_shift = std::max(max_shift, std::abs(kd_loss(a, shifted, tau) - kl));
    if (i < 1000) max_same = std::max(max_same, std::abs(kd_loss(a, a, tau)));
  }
  return {min_kl >= 0.0 && max_same <= 1e-12 && max_shift <= 1e-10,
          fmt::format("min over 10000 pairs {:.3e}; identical max {:.1e}; shift max {:.1e}", min_kl, max_same,
                      max_shift)};
}

// 3 -------------------------------------------------------------------------
Outcome ternary_linearity() {
  Rng rng(303);
  double worst = 0.0;
  bool exact = true;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(6);
    const double tau = rng.uniform(0.5, 4.0);
    const RealVector l = testing::random_logits(rng, n), m = testing::random_logits(rng, n),
                     s = testing::random_logits(rng, n);
    const double t0 = ternary_loss(l, m, s, 0.0, tau), t1 = ternary_loss(l, m, s, 1.0, tau);
    worst = std::max(worst, std::abs(ternary_loss(l, m, s, 0.5, tau) - 0.5 * (t0 + t1)));
    exact = exact && t0 == kd_loss(m, s, tau) && t1 == kd_loss(l, s, tau);
  }
  return {worst <= 1e-12 && exact,
          fmt::format("max |T(0.5) - mean(T(0), T(1))| {:.1e}; boundaries exact: {}", worst, exact)};
}

// 4 -------------------------------------------------------------------------
Outcome compositional_oracles() {
  Rng rng(404);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(5);
    const std::size_t y = rng.index(n);
    DistillConfig cfg;
    cfg.tau = rng.uniform(0.5, 4.0);
    cfg.alpha = rng.uniform(0.0, 2.0);
    cfg.beta = rng.uniform(0.0, 2.0);
    const RealVector l = testing::random_logits(rng, n), m = testing::random_logits(rng, n),
                     s = testing::random_logits(rng, n);
    const bool with_large = i % 2 == 0;
    double expect = cross_entropy(m, y) + cfg.alpha * kl_direct(l, m, cfg.tau) + cross_entropy(s, y) +
                    cfg.beta * kl_direct(m, s, cfg.tau);
    if (with_large) expect += cross_entropy(l, y);
    worst = std::max(worst, std::abs(pyramid_loss(l, m, s, y, cfg, with_large).total - expect));

    const std::vector<RealVector> cohort = {l, m, s};
    const auto mutual = mutual_loss(cohort, y, cfg.beta, cfg.tau);
    for (std::size_t a = 0; a < 3; ++a) {
      double e = cross_entropy(cohort[a], y);
      for (std::size_t b = 0; b < 3; ++b) {
        if (b != a) e += cfg.beta * kl_direct(cohort[b], cohort[a], cfg.tau);
      }
      worst = std::max(worst, std::abs(mutual[a] - e));
    }
  }
  return {worst <= 1e-10, fmt::format("max recomposition error {:.1e} over 1000 draws", worst)};
}

// 5 -------------------------------------------------------------------------
Outcome pipeline_reduction() {
  const std::size_t dim = 16;
  const TrainSplit split = TrainSplit::from(generate_dataset(100, dim, 0.4, 55));
  TrainConfig cfg;
  cfg.seed = 55;
  cfg.distill.alpha = cfg.distill.beta = 0.0;
  cfg.distill.enabled = false;
  PeerCohort c = PeerCohort::init(dim, cfg.seed);
  cold_start_sft(c, split, cfg);
  stage1_pyramid(c, split, cfg);
  stage2_tcrd(c, split, cfg);

  const auto [a, b] = cfg.pyramid_budget();
  const auto stream = [&](Stage s) { return stage_stream_seed(cfg.seed, s); };
  const PeerCohort ref = PeerCohort::init(dim, cfg.seed);
  ToyModel large = ref.large, medium = ref.medium, small = ref.small;
  train_supervised(large, with_sns(split, cfg), cfg.steps.cold_start, cfg, stream(Stage::ColdStart), Stage::ColdStart,
                   Role::Large);
  train_supervised(large, split, a, cfg, stream(Stage::PyramidLM), Stage::PyramidLM, Role::Large);
  train_supervised(medium, split, a, cfg, stream(Stage::PyramidLM), Stage::PyramidLM, Role::Medium);
  train_supervised(medium, split, b, cfg, stream(Stage::PyramidMS), Stage::PyramidMS, Role::Medium);
  train_supervised(small, split, b, cfg, stream(Stage::PyramidMS), Stage::PyramidMS, Role::Small);
  train_supervised(small, split, cfg.steps.tcrd, cfg, stream(Stage::TCRD), Stage::TCRD, Role::Small);

  const bool ok = c.large == large && c.medium == medium && c.small == small;
  return {ok, fmt::format("large/medium/small bit-identical to independent SFT: {}/{}/{}", c.large == large,
                          c.medium == medium, c.small == small)};
}

// 6 -------------------------------------------------------------------------
Outcome distillation_benefit() {
  constexpr std::size_t kSeeds = 10;
  const std::size_t dim = 16;
  struct Row {
    double baseline, stage1, tcrd;
  };
  std::vector<Row> rows(kSeeds);
  parallel_for(kSeeds, cli::worker_count(kSeeds), [&](std::size_t i) {
    const std::uint64_t seed = i + 1;
    const auto data = generate_dataset(500, dim, 0.4, seed);
    const FoldPlan plan = kfold_split(data, 5, seed);
    std::vector<TaskSample> train, test;
    for (const auto& s : data) (plan.fold_of(s.id) == 0 ? test : train).push_back(s);
    const TrainSplit split = TrainSplit::from(train);
    TrainConfig cfg;
    cfg.seed = seed;
    PeerCohort c = PeerCohort::init(dim, seed);
    cold_start_sft(c, split, cfg);
    stage1_pyramid(c, split, cfg);
    rows[i].stage1 = evaluate(c.small, test).joint.scores.f1;
    rows[i].baseline = evaluate(sft_small_baseline(split, cfg, dim), test).joint.scores.f1;
    stage2_tcrd(c, split, cfg);
    rows[i].tcrd = evaluate(c.small, test).joint.scores.f1;
  });
  std::size_t wins = 0, kept = 0;
  double margin = 0.0;
  for (std::size_t i = 0; i < kSeeds; ++i) {
    const Row& r = rows[i];
    fmt::print("      seed {:2}: SFT-only {:.4f}  stage-1 {:.4f}  TCRD {:.4f}\n", i + 1, r.baseline, r.stage1, r.tcrd);
    wins += r.stage1 > r.baseline ? 1 : 0;
    kept += r.tcrd >= r.stage1 - 0.02 ? 1 : 0;
    margin += r.stage1 - r.baseline;
  }
  return {wins >= 8 && kept >= 8,
          fmt::format("stage-1 beats SFT-only in {}/10 (mean margin {:+.4f}); TCRD within 0.02 in {}/10", wins,
                      margin / kSeeds, kept)};
}

// 7 -------------------------------------------------------------------------
Outcome gamma_sweep() {
  testing::ScratchDir dir("accept-sweep");
  cli::ExperimentConfig cfg;
  cfg.output_dir = dir.path();
  cli::cmd_generate(cfg);
  const auto values = cli::default_sweep_values("gamma");
  const auto rows = cli::cmd_sweep(cfg, "gamma", values, cli::worker_count(cfg.folds));
  const std::string table = cli::read_file(dir.path() / "sweep_gamma.txt");
  fmt::print("{}", table);

  std::vector<std::string> lines;
  std::istringstream in(table);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  bool ok = rows.size() == 4 && lines.size() == 7;
  ok = ok && lines[0].find("MHD") != std::string::npos && lines[0].find("MFC") != std::string::npos;
  std::size_t marks = 0;
  for (std::size_t i = 0; ok && i < 4; ++i) {
    const std::string& line = lines[3 + i];
    ok = line.find(values[i]) != std::string::npos;
    std::istringstream cells(line.substr(line.find('|')));
    std::size_t numbers = 0;
    for (std::string tok; cells >> tok;) {
      if (tok != "|" && tok != "*") ++numbers;
    }
    ok = ok && numbers == 6;
    if (line.ends_with(" *")) {
      ++marks;
      ok = ok && i == best_sweep_row(rows);
    }
  }
  ok = ok && marks == 1;
  return {ok, fmt::format("{} rows x (MHD P R F1 | MFC P R F1), best row marked once: {}", rows.size(), marks == 1)};
}

// 8 -------------------------------------------------------------------------
Outcome msei_invariants() {
  const auto data = generate_dataset(2000, 8, 0.4, 808);
  std::vector<McqItem> items;
  for (const auto& s : data) {
    if (s.task == TaskId::MFC && items.size() < 500) items.push_back(classify_to_mcq(s));
  }
  std::map<std::string, std::string> truth;
  for (const auto& it : items) truth[it.id] = it.options[*it.position_of(it.answer_key)].content;

  ContentOracleAdapter oracle(truth);
  std::size_t consistent = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const MseiVerdict v = msei_infer(oracle, items[i], 2 + i % 4, 0x9e37 * i + 17);
    consistent += v.consistent && v.final_content == truth[items[i].id] ? 1 : 0;
  }
  const double oracle_rate = static_cast<double>(consistent) / static_cast<double>(items.size());

  FixedLabelAdapter always_a("A");
  std::size_t correct = 0, moved = 0, flagged = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const MseiVerdict v = msei_infer(always_a, items[i], 2, 4242 + i);
    correct += v.first_choice() == items[i].answer_key ? 1 : 0;
    if (v.rounds[1].canonical != v.rounds[0].canonical) {
      ++moved;
      flagged += v.consistent ? 0 : 1;
    }
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  const bool ok = items.size() == 500 && oracle_rate == 1.0 && std::abs(accuracy - 0.25) <= 0.05 && moved > 0 &&
                  flagged == moved;
  return {ok, fmt::format("oracle consistency {:.3f}; always-A pre-MSEI accuracy {:.3f}; flagged {}/{} moved items",
                          oracle_rate, accuracy, flagged, moved)};
}

// 9 -------------------------------------------------------------------------
Outcome metrics_oracle() {
  Rng rng(909);
  static const char* kPool[] = {"a", "b", "c", "d", "e", "f"};
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<LabeledSet> pred(n), gold(n);
    std::set<std::pair<std::size_t, std::string>> ps, gs;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i].id = gold[i].id = std::to_string(i);
      for (const char* l : kPool) {
        if (rng.uniform() < 0.3) {
          pred[i].labels.insert(l);
          ps.emplace(i, l);
        }
        if (rng.uniform() < 0.3) {
          gold[i].labels.insert(l);
          gs.emplace(i, l);
        }
      }
    }
    // Pooled (sample, label) pairs: tp = |P & G|, fp = |P \ G|, fn = |G \ P|.
    std::uint64_t tp = 0;
    for (const auto& x : ps) tp += gs.contains(x) ? 1 : 0;
    const std::uint64_t fp = ps.size() - tp, fn = gs.size() - tp;
    const Prf got = micro_prf(tally(pred, gold));
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    mismatches += got.precision == p && got.recall == r && got.f1 == f ? 0 : 1;
  }
  const Prf ex = micro_prf({2, 1, 1});
  const bool example = ex.precision == 2.0 / 3.0 && ex.recall == 2.0 / 3.0 && std::abs(ex.f1 - 2.0 / 3.0) < 1e-15;
  return {mismatches == 0 && example,
          fmt::format("{} mismatches over 1000 instances; (2,1,1) -> ({:.6f}, {:.6f}, {:.6f})", mismatches,
                      ex.precision, ex.recall, ex.f1)};
}

// 10 ------------------------------------------------------------------------
Outcome fold_discipline() {
  Rng rng(1010);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 5 + rng.index(300);
    const std::size_t k = 2 + rng.index(std::min<std::size_t>(9, n - 1));
    const std::size_t classes = 1 + rng.index(6);
    std::vector<std::string> ids, strata;
    std::set<std::string> unique;
    while (ids.size() < n) {
      std::string id = fmt::format("s{:x}", rng.next_u64() % 1000000);
      if (!unique.insert(id).second) continue;
      ids.push_back(std::move(id));
      strata.push_back("c" + std::to_string(rng.index(classes)));
    }
    const FoldPlan plan = kfold_split(ids, strata, k, rng.next_u64());
    bool ok = plan.k == k && plan.assignments.size() == n;
    std::vector<std::size_t> sizes(k, 0);
    std::map<std::string, std::vector<std::size_t>> per_class;
    for (std::size_t i = 0; ok && i < n; ++i) {
      const auto it = plan.assignments.find(ids[i]);
      ok = it != plan.assignments.end() && it->second < k;
      if (!ok) break;
      ++sizes[it->second];
      per_class[strata[i]].resize(k, 0);
      ++per_class[strata[i]][it->second];
    }
    const auto spread = [](const std::vector<std::size_t>& v) {
      return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    ok = ok && spread(sizes) <= 1;
    for (const auto& [cls, counts] : per_class) ok = ok && spread(counts) <= 1;
    bad += ok ? 0 : 1;
  }
  return {bad == 0, fmt::format("{} of 1000 random id sets violate the partition or balance rules", bad)};
}

// 11 ------------------------------------------------------------------------
Outcome sns_contract() {
  const auto data = generate_dataset(4000, 8, 0.4, 1111);
  std::vector<TaskSample> negatives, positives;
  for (const auto& s : data) {
    if (s.task == TaskId::MHD && s.label != kMhdFaithful) negatives.push_back(s);
    if (s.task == TaskId::MFC && s.label == kMfcSupported) positives.push_back(s);
  }
  const auto aug = sns_augment(negatives, positives, EntityBank::defaults(), 1.0, 1111);
  std::map<std::string, const TaskSample*> source;
  for (const auto& p : positives) source[p.id + "#sns"] = &p;
  std::size_t violations = 0;
  for (const auto& a : aug) {
    const auto it = source.find(a.id);
    if (it == source.end() || a.label != kMfcRefuted) {
      ++violations;
      continue;
    }
    const std::string& src = it->second->text;
    const auto before = entity_spans(src), after = entity_spans(a.text);
    std::size_t diff = 0;
    bool aligned = before.size() == after.size();
    for (std::size_t i = 0; aligned && i < before.size(); ++i) {
      if (before[i].surface == after[i].surface && before[i].hallucinated == after[i].hallucinated) continue;
      ++diff;
      // Everything outside the replaced span is untouched.
      aligned = after[i].hallucinated && src.substr(0, before[i].begin) == a.text.substr(0, after[i].begin) &&
                src.substr(before[i].end) == a.text.substr(after[i].end);
    }
    violations += aligned && diff == 1 ? 0 : 1;
  }
  return {aug.size() >= 1000 && violations == 0,
          fmt::format("{} augmented samples, {} violate single-span/refuted contract", aug.size(), violations)};
}

// 12 ------------------------------------------------------------------------
Outcome determinism() {
  testing::ScratchDir dir("accept-determinism");
  std::vector<std::string> summaries;
  for (const char* run : {"first", "second"}) {
    cli::ExperimentConfig cfg;
    cfg.output_dir = dir.path() / run;
    cli::cmd_generate(cfg);
    cli::cmd_run(cfg, {false, cli::worker_count(cfg.folds)});
    summaries.push_back(cli::read_file(cfg.output_dir / "summary.csv"));
  }
  return {summaries[0] == summaries[1] && !summaries[0].empty(),
          fmt::format("summary.csv of two runs: {} bytes each, identical: {}", summaries[0].size(),
                      summaries[0] == summaries[1])};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "kd_loss gradient vs closed form and central differences", 5, loss_gradient},
      {2, "KL non-negativity, identity and shift invariance", 5, kl_properties},
      {3, "ternary loss linearity in gamma", 0, ternary_linearity},
      {4, "mutual and pyramid losses recompose from parts", 0, compositional_oracles},
      {5, "zeroed distillation equals independent SFT", 0, pipeline_reduction},
      {6, "stage-1 small beats SFT-only; TCRD does not regress", 600, distillation_benefit},
      {7, "gamma sweep table structure", 0, gamma_sweep},
      {8, "MSEI oracle consistency and position-bias audit", 30, msei_invariants},
      {9, "micro P/R/F1 vs brute-force set arithmetic", 0, metrics_oracle},
      {10, "stratified k-fold partitions", 0, fold_discipline},
      {11, "SNS single-span contract", 0, sns_contract},
      {12, "byte-identical summaries across runs", 0, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt::format(" [over the {:.0f} s budget]", c.time_limit_s);
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} criterion {:2}: {} ({:.2f} s) :: {}\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{}\n", failed == 0 ? "all acceptance criteria passed" : fmt::format("{} criteria failed", failed));
  return failed == 0 ? 0 : 1;
}
