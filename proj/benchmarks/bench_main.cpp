// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "pdistill/losses.hpp"
#include "pdistill/msei.hpp"
#include "pdistill/optim.hpp"
#include "pdistill/rng.hpp"
#include "pdistill/trainer.hpp"

using namespace pdistill;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

void BM_ForwardBatch(benchmark::State& state) {
  const auto tier = static_cast<Tier>(state.range(0));
  const ToyModel model = ToyModel::init(CapacityTier::defaults(tier), 16, 1);
  const Matrix x = random_batch(32, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_batch(x, TaskId::MFC));
  state.SetLabel(std::string(tier_name(tier)));
}
BENCHMARK(BM_ForwardBatch)->DenseRange(0, 2);

void BM_ForwardBackward(benchmark::State& state) {
  const auto tier = static_cast<Tier>(state.range(0));
  ToyModel model = ToyModel::init(CapacityTier::defaults(tier), 16, 1);
  const Matrix x = random_batch(32, 16, 2);
  std::vector<std::size_t> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 4;
  for (auto _ : state) {
    Tape tape(&model.parameters());
    Var loss = cross_entropy(tape, model.forward(tape, x, TaskId::MFC), y);
    tape.backward(loss);
    benchmark::DoNotOptimize(model.parameters().grads().data());
  }
  state.SetLabel(std::string(tier_name(tier)));
}
BENCHMARK(BM_ForwardBackward)->DenseRange(0, 2);

void BM_KdLossBatch(benchmark::State& state) {
  const Matrix teacher = random_batch(32, 4, 3);
  const Matrix student = random_batch(32, 4, 4);
  for (auto _ : state) {
    Tape tape;
    Var s = tape.leaf(student);
    tape.backward(kd_loss(tape, teacher, s, 2.0));
    benchmark::DoNotOptimize(tape.grad(s).data.data());
  }
}
BENCHMARK(BM_KdLossBatch);

void BM_TcrdStep(benchmark::State& state) {
  const TrainSplit split = TrainSplit::from(generate_dataset(200, 16, 0.4, 5));
  TrainConfig cfg;
  cfg.steps.tcrd = 50;
  for (auto _ : state) {
    state.PauseTiming();
    PeerCohort cohort = PeerCohort::init(16, 5);
    cohort.stage = Stage::TCRD;
    state.ResumeTiming();
    benchmark::DoNotOptimize(stage2_tcrd(cohort, split, cfg).steps.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.steps.tcrd));
}
BENCHMARK(BM_TcrdStep)->Unit(benchmark::kMillisecond);

void BM_MseiLocal(benchmark::State& state) {
  const auto samples = generate_dataset(100, 16, 0.4, 6);
  const ToyModel model = ToyModel::init(CapacityTier::defaults(Tier::Small), 16, 6);
  LocalModelAdapter adapter(model, samples);
  std::vector<McqItem> items;
  for (const auto& s : samples) items.push_back(classify_to_mcq(s));
  const auto rounds = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    for (const auto& item : items) benchmark::DoNotOptimize(msei_infer(adapter, item, rounds, 7).consistent);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(items.size()));
}
BENCHMARK(BM_MseiLocal)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
