// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Staged training of a large / medium / small peer cohort:
//
//   ColdStart   supervised fine-tuning of the large model on SNS-augmented data
//   PyramidLM   medium learns from large (online, large keeps its CE)
//   PyramidMS   small learns from medium (online, medium keeps its CE)
//   TCRD        small refines against large and medium jointly
//   Done
//
// Every stage owns an independent batch stream and fresh optimizer state,
// restarts the cosine schedule, and clips gradients per model.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdistill/datagen.hpp"
#include "pdistill/losses.hpp"
#include "pdistill/metrics.hpp"
#include "pdistill/models.hpp"
#include "pdistill/optim.hpp"

namespace pdistill {

enum class Stage { ColdStart, PyramidLM, PyramidMS, TCRD, Done };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

enum class Role { Large, Medium, Small };
std::string_view role_name(Role role);

struct PeerCohort {
  ToyModel large;
  ToyModel medium;
  ToyModel small;
  Stage stage = Stage::ColdStart;

  /// Default tiers; each model's seed is derived from `seed` and its tier,
  /// so the three parameter sets are independent.
  static PeerCohort init(std::size_t input_dim, std::uint64_t seed);
  static std::uint64_t model_seed(std::uint64_t seed, Tier tier);

  ToyModel& model(Role role);
  const ToyModel& model(Role role) const;
  /// Moves to the next stage; anything else is a StateError.
  void advance(Stage next);
};

struct StageSteps {
  std::size_t cold_start = 400;
  /// Split evenly between the two pyramid sub-stages (first half rounds down).
  std::size_t pyramid = 800;
  std::size_t tcrd = 200;

  bool operator==(const StageSteps&) const = default;
};

struct TrainConfig {
  double lr0 = 1e-4;
  StageSteps steps;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 42;
  DistillConfig distill;
  /// Teachers stop updating during the pyramid stage: large in the first
  /// sub-stage, medium in the second (the literal pyramid objective).
  bool freeze_large = false;
  /// Adds CE(y, z_S) to the ternary objective.
  bool tcrd_with_ce = true;
  /// Also trains medium during TCRD with CE + alpha * kd(large, medium).
  bool tcrd_update_medium = false;
  /// Global gradient norm cap per model; <= 0 disables.
  double clip_norm = 5.0;
  /// Fraction of supported MFC samples turned into SNS negatives for cold start.
  double sns_rate = 0.1;
  std::size_t checkpoint_every = 100;

  void validate() const;
  std::pair<std::size_t, std::size_t> pyramid_budget() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * (1 + cos(pi * step / total)) / 2, floored at 0.
double cosine_lr(std::size_t step, std::size_t total, double lr0);

/// Seed of the batch stream used in a stage.
std::uint64_t stage_stream_seed(std::uint64_t seed, Stage stage);

struct StepRecord {
  Stage stage;
  std::size_t step;
  double lr;
  TaskId task;
  LossBreakdown losses;
  /// Batch accuracy of the stage's student model.
  double train_accuracy;
};

struct CheckpointEntry {
  Stage stage;
  std::size_t step;
  Role role;
  std::filesystem::path path;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<CheckpointEntry> checkpoints;

  void append(RunLog&& other);
};

struct TrainSplit {
  std::vector<TaskSample> mhd;
  std::vector<TaskSample> mfc;

  static TrainSplit from(std::span<const TaskSample> samples);
};

/// The split used for cold start: MFC gains SNS negatives built from this
/// split's MHD negatives and supported MFC samples.
TrainSplit with_sns(const TrainSplit& split, const TrainConfig& cfg);

/// Where checkpoints go; nothing is written when `dir` is empty.
struct CheckpointSink {
  std::filesystem::path dir;
};

/// Cross-entropy training of one model for `steps` updates on the batch
/// stream `stream_seed`. This is the shared supervised path: cold start uses
/// it, and so does the SFT-only baseline.
RunLog train_supervised(ToyModel& model, const TrainSplit& split, std::size_t steps, const TrainConfig& cfg,
                        std::uint64_t stream_seed, Stage stage_tag, Role role, const CheckpointSink& sink = {});

RunLog cold_start_sft(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg,
                      const CheckpointSink& sink = {});
RunLog stage1_pyramid(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg,
                      const CheckpointSink& sink = {});
RunLog stage2_tcrd(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg,
                   const CheckpointSink& sink = {});

/// The small model trained by cross-entropy alone with the budget and
/// batch stream of the second pyramid sub-stage (the paired baseline).
ToyModel sft_small_baseline(const TrainSplit& split, const TrainConfig& cfg, std::size_t input_dim);

/// Argmax predictions scored as single-label sets per task.
MetricsReport evaluate(const ToyModel& model, std::span<const TaskSample> samples);

struct AblationResult {
  MetricsReport baseline;
  MetricsReport pyramid;
  MetricsReport tcrd;
  MetricsReport msei;
};

struct FoldResult {
  std::size_t fold = 0;
  PeerCohort cohort;
  RunLog log;
  MetricsReport large;
  MetricsReport medium;
  MetricsReport small;
  std::optional<AblationResult> ablation;
};

struct PipelineOptions {
  bool ablation = false;
  std::size_t msei_rounds = 2;
  /// Parallel fold workers; results are reduced in fold order.
  std::size_t workers = 1;
  /// When set, fold i writes checkpoints under <output_dir>/fold_i/checkpoints.
  std::optional<std::filesystem::path> output_dir;
};

struct PipelineResult {
  std::vector<FoldResult> folds;
  MetricsReport large;
  MetricsReport medium;
  MetricsReport small;
  std::optional<AblationResult> ablation;
};

/// Seed of fold i's cohort and streams.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

/// Checks that the plan partitions exactly the dataset ids into k non-empty
/// folds; InvalidArgument otherwise.
void validate_fold_plan(const FoldPlan& plan, std::span<const TaskSample> samples);

/// Full ColdStart -> Pyramid -> TCRD run per fold on the fold's training
/// split, scored on the held-out fold, metrics averaged across folds.
PipelineResult run_pipeline(const TrainConfig& cfg, std::span<const TaskSample> samples, const FoldPlan& folds,
                            const PipelineOptions& options = {});

/// Runs fn(i) for i in [0, n) on at most `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace pdistill
