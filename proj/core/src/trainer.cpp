// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "pdistill/errors.hpp"
#include "pdistill/msei.hpp"
#include "pdistill/rng.hpp"

namespace pdistill {

namespace {

constexpr std::string_view kStageNames[] = {"cold_start", "pyramid_lm", "pyramid_ms", "tcrd", "done"};
constexpr std::string_view kRoleNames[] = {"large", "medium", "small"};

}  // namespace

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

Stage parse_stage(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw InvalidArgument("unknown stage '" + std::string(name) + "'");
}

std::string_view role_name(Role role) { return kRoleNames[static_cast<int>(role)]; }

// ---------------------------------------------------------------------------

std::uint64_t PeerCohort::model_seed(std::uint64_t seed, Tier tier) { return derive_seed(seed, tier_name(tier)); }

PeerCohort PeerCohort::init(std::size_t input_dim, std::uint64_t seed) {
  PeerCohort c;
  c.large = ToyModel::init(CapacityTier::defaults(Tier::Large), input_dim, model_seed(seed, Tier::Large));
  c.medium = ToyModel::init(CapacityTier::defaults(Tier::Medium), input_dim, model_seed(seed, Tier::Medium));
  c.small = ToyModel::init(CapacityTier::defaults(Tier::Small), input_dim, model_seed(seed, Tier::Small));
  return c;
}

ToyModel& PeerCohort::model(Role role) {
  switch (role) {
    case Role::Large: return large;
    case Role::Medium: return medium;
    case Role::Small: break;
  }
  return small;
}

const ToyModel& PeerCohort::model(Role role) const { return const_cast<PeerCohort*>(this)->model(role); }

void PeerCohort::advance(Stage next) {
  if (stage == Stage::Done || static_cast<int>(next) != static_cast<int>(stage) + 1) {
    throw StateError("cannot move from stage " + std::string(stage_name(stage)) + " to " +
                     std::string(stage_name(next)));
  }
  stage = next;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw InvalidArgument("train.lr0 must be positive");
  if (steps.cold_start < 1) throw InvalidArgument("train.steps.cold_start must be >= 1");
  if (steps.pyramid < 2) throw InvalidArgument("train.steps.pyramid must be >= 2 (one per sub-stage)");
  if (steps.tcrd < 1) throw InvalidArgument("train.steps.tcrd must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
  if (std::isnan(clip_norm)) throw InvalidArgument("train.clip_norm must be a number");
  if (!(sns_rate >= 0.0 && sns_rate <= 1.0)) throw InvalidArgument("data.sns_rate must lie in [0, 1]");
  if (checkpoint_every < 1) throw InvalidArgument("train.checkpoint_every must be >= 1");
  distill.validate();
}

std::pair<std::size_t, std::size_t> TrainConfig::pyramid_budget() const {
  const std::size_t a = steps.pyramid / 2;
  return {a, steps.pyramid - a};
}

double cosine_lr(std::size_t step, std::size_t total, double lr0) {
  if (total < 1) throw InvalidArgument("cosine schedule needs total >= 1");
  if (step > total) throw InvalidArgument("step lies past the end of the schedule");
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return std::max(0.0, lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

std::uint64_t stage_stream_seed(std::uint64_t seed, Stage stage) {
  return derive_seed(seed, std::string("stream/") + std::string(stage_name(stage)));
}

void RunLog::append(RunLog&& other) {
  steps.insert(steps.end(), std::make_move_iterator(other.steps.begin()), std::make_move_iterator(other.steps.end()));
  checkpoints.insert(checkpoints.end(), std::make_move_iterator(other.checkpoints.begin()),
                     std::make_move_iterator(other.checkpoints.end()));
}

TrainSplit TrainSplit::from(std::span<const TaskSample> samples) {
  TrainSplit s;
  for (const auto& x : samples) (x.task == TaskId::MHD ? s.mhd : s.mfc).push_back(x);
  return s;
}

TrainSplit with_sns(const TrainSplit& split, const TrainConfig& cfg) {
  std::vector<TaskSample> negatives;
  std::vector<TaskSample> positives;
  for (const auto& s : split.mhd) {
    if (s.label != kMhdFaithful) negatives.push_back(s);
  }
  for (const auto& s : split.mfc) {
    if (s.label == kMfcSupported && s.provenance == Provenance::Generated) positives.push_back(s);
  }
  TrainSplit out = split;
  for (auto& s : sns_augment(negatives, positives, EntityBank::defaults(), cfg.sns_rate, derive_seed(cfg.seed, "sns"))) {
    out.mfc.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct BatchData {
  TaskId task;
  Matrix features;
  std::vector<std::size_t> labels;
};

BatchData gather(const TrainSplit& split, const Batch& batch) {
  const auto& pool = batch.task == TaskId::MHD ? split.mhd : split.mfc;
  const std::size_t dim = pool.at(batch.indices.front()).features.size();
  BatchData b{batch.task, Matrix(batch.indices.size(), dim), {}};
  b.labels.reserve(batch.indices.size());
  for (std::size_t r = 0; r < batch.indices.size(); ++r) {
    const TaskSample& s = pool[batch.indices[r]];
    std::copy(s.features.begin(), s.features.end(), b.features.data.begin() + static_cast<std::ptrdiff_t>(r * dim));
    b.labels.push_back(s.label);
  }
  return b;
}

/// A distillation term for the model being updated; teacher logits are
/// computed before any model in the step moves.
struct KdTerm {
  std::string name;
  Matrix teacher;
  double weight;
};

struct UpdateOutcome {
  double ce = 0.0;
  std::vector<double> kd;
  double accuracy = 0.0;
};

double batch_accuracy(const Matrix& logits, std::span<const std::size_t> labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = logits.row_span(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[r] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

// One optimizer step of `model` on ce_weight * CE + sum(weight * kd). Terms of
// zero weight are evaluated for logging but kept out of the loss graph, so a
// run with every distillation weight at zero is exactly supervised training.
UpdateOutcome update_model(ToyModel& model, Optimizer& opt, const BatchData& batch, double lr, double ce_weight,
                           std::span<const KdTerm> terms, const TrainConfig& cfg) {
  Tape tape(&model.parameters());
  Var logits = model.forward(tape, batch.features, batch.task);
  Var ce = cross_entropy(tape, logits, batch.labels);
  std::optional<Var> loss;
  if (ce_weight != 0.0) loss = ce_weight == 1.0 ? ce : tape.scale(ce, ce_weight);

  UpdateOutcome out;
  out.ce = tape.scalar(ce);
  out.accuracy = batch_accuracy(tape.value(logits), batch.labels);
  for (const auto& t : terms) {
    Var kd = kd_loss(tape, t.teacher, logits, cfg.distill.tau);
    out.kd.push_back(tape.scalar(kd));
    if (t.weight == 0.0) continue;
    Var weighted = tape.scale(kd, t.weight);
    loss = loss ? tape.add(*loss, weighted) : weighted;
  }
  if (!loss) return out;  // nothing to optimize
  tape.backward(*loss);
  clip_grad_norm(model.parameters(), cfg.clip_norm);
  opt.step(model.parameters(), lr);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

class Checkpointer {
 public:
  Checkpointer(const CheckpointSink& sink, const TrainConfig& cfg, Stage stage) : sink_(sink), cfg_(cfg), stage_(stage) {}

  /// Called after update `step` (0-based) of `total`.
  void after_step(RunLog& log, std::size_t step, std::size_t total, std::span<const std::pair<Role, const ToyModel*>> models) {
    if (sink_.dir.empty()) return;
    const bool periodic = (step + 1) % cfg_.checkpoint_every == 0;
    const bool last = step + 1 == total;
    for (const auto& [role, model] : models) {
      if (periodic) save(log, step + 1, role, *model, std::to_string(step + 1));
      if (last) save(log, step + 1, role, *model, "final");
    }
  }

 private:
  void save(RunLog& log, std::size_t step, Role role, const ToyModel& model, const std::string& tag) {
    const auto path = sink_.dir / stage_name(stage_) / (std::string(role_name(role)) + "-" + tag + ".ckpt");
    write_file_atomic(path, [&](std::ostream& out) { write_checkpoint(out, model, stage_name(stage_)); });
    log.checkpoints.push_back({stage_, step, role, path});
  }

  const CheckpointSink& sink_;
  const TrainConfig& cfg_;
  Stage stage_;
};

void require_stage(const PeerCohort& cohort, Stage expected) {
  if (cohort.stage != expected) {
    throw StateError("expected cohort in stage " + std::string(stage_name(expected)) + ", found " +
                     std::string(stage_name(cohort.stage)));
  }
}

void require_data(const TrainSplit& split) {
  if (split.mhd.empty() && split.mfc.empty()) throw InvalidArgument("training split is empty");
}

double effective(const TrainConfig& cfg, double weight) { return cfg.distill.enabled ? weight : 0.0; }

// Teacher (frozen this step) and student roles of a two-model sub-stage.
struct PairPhase {
  Stage stage;
  Role teacher;
  Role student;
  std::string teacher_ce;
  std::string student_ce;
  std::string kd_name;
  double kd_weight;
  bool teacher_trains;
  std::size_t steps;
};

RunLog run_pair_phase(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg, const PairPhase& phase,
                      const CheckpointSink& sink) {
  RunLog log;
  ToyModel& teacher = cohort.model(phase.teacher);
  ToyModel& student = cohort.model(phase.student);
  auto teacher_opt = Optimizer::make(cfg.optimizer, teacher.parameter_count());
  auto student_opt = Optimizer::make(cfg.optimizer, student.parameter_count());
  BatchStream stream(split.mhd.size(), split.mfc.size(), cfg.batch_size, stage_stream_seed(cfg.seed, phase.stage));
  Checkpointer ckpt(sink, cfg, phase.stage);
  std::vector<std::pair<Role, const ToyModel*>> updated = {{phase.student, &student}};
  if (phase.teacher_trains) updated.insert(updated.begin(), {phase.teacher, &teacher});

  for (std::size_t step = 0; step < phase.steps; ++step) {
    const BatchData batch = gather(split, stream.next());
    const double lr = cosine_lr(step, phase.steps, cfg.lr0);
    const KdTerm kd[] = {{phase.kd_name, teacher.forward_batch(batch.features, batch.task), phase.kd_weight}};

    StepRecord rec{phase.stage, step, lr, batch.task, {}, 0.0};
    const UpdateOutcome s = update_model(student, *student_opt, batch, lr, 1.0, kd, cfg);
    if (phase.teacher_trains) {
      const UpdateOutcome t = update_model(teacher, *teacher_opt, batch, lr, 1.0, {}, cfg);
      rec.losses.add(phase.teacher_ce, t.ce, 1.0);
    } else {
      Tape probe;
      const std::size_t* labels = batch.labels.data();
      rec.losses.add(phase.teacher_ce,
                     probe.scalar(cross_entropy(probe, probe.leaf(kd[0].teacher), std::span(labels, batch.labels.size()))),
                     0.0);
    }
    rec.losses.add(phase.student_ce, s.ce, 1.0);
    rec.losses.add(phase.kd_name, s.kd.front(), phase.kd_weight);
    rec.train_accuracy = s.accuracy;
    log.steps.push_back(std::move(rec));
    ckpt.after_step(log, step, phase.steps, updated);
  }
  return log;
}

}  // namespace

RunLog train_supervised(ToyModel& model, const TrainSplit& split, std::size_t steps, const TrainConfig& cfg,
                        std::uint64_t stream_seed, Stage stage_tag, Role role, const CheckpointSink& sink) {
  require_data(split);
  RunLog log;
  auto opt = Optimizer::make(cfg.optimizer, model.parameter_count());
  BatchStream stream(split.mhd.size(), split.mfc.size(), cfg.batch_size, stream_seed);
  Checkpointer ckpt(sink, cfg, stage_tag);
  const std::pair<Role, const ToyModel*> updated[] = {{role, &model}};
  const std::string ce_name = "ce_" + std::string(1, static_cast<char>(std::toupper(role_name(role)[0])));
  for (std::size_t step = 0; step < steps; ++step) {
    const BatchData batch = gather(split, stream.next());
    const double lr = cosine_lr(step, steps, cfg.lr0);
    const UpdateOutcome u = update_model(model, *opt, batch, lr, 1.0, {}, cfg);
    StepRecord rec{stage_tag, step, lr, batch.task, {}, u.accuracy};
    rec.losses.add(ce_name, u.ce, 1.0);
    log.steps.push_back(std::move(rec));
    ckpt.after_step(log, step, steps, updated);
  }
  return log;
}

RunLog cold_start_sft(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg, const CheckpointSink& sink) {
  require_stage(cohort, Stage::ColdStart);
  cfg.validate();
  require_data(split);
  RunLog log = train_supervised(cohort.large, with_sns(split, cfg), cfg.steps.cold_start, cfg,
                                stage_stream_seed(cfg.seed, Stage::ColdStart), Stage::ColdStart, Role::Large, sink);
  cohort.advance(Stage::PyramidLM);
  return log;
}

RunLog stage1_pyramid(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg, const CheckpointSink& sink) {
  require_stage(cohort, Stage::PyramidLM);
  cfg.validate();
  require_data(split);
  const auto [steps_a, steps_b] = cfg.pyramid_budget();
  RunLog log = run_pair_phase(cohort, split, cfg,
                              {Stage::PyramidLM, Role::Large, Role::Medium, "ce_L", "ce_M", "kd_LM",
                               effective(cfg, cfg.distill.alpha), !cfg.freeze_large, steps_a},
                              sink);
  cohort.advance(Stage::PyramidMS);
  log.append(run_pair_phase(cohort, split, cfg,
                            {Stage::PyramidMS, Role::Medium, Role::Small, "ce_M", "ce_S", "kd_MS",
                             effective(cfg, cfg.distill.beta), !cfg.freeze_large, steps_b},
                            sink));
  cohort.advance(Stage::TCRD);
  return log;
}

RunLog stage2_tcrd(PeerCohort& cohort, const TrainSplit& split, const TrainConfig& cfg, const CheckpointSink& sink) {
  require_stage(cohort, Stage::TCRD);
  cfg.validate();
  require_data(split);
  RunLog log;
  const double gamma = cfg.distill.gamma;
  const double w_ls = effective(cfg, gamma);
  const double w_ms = effective(cfg, 1.0 - gamma);
  const double w_lm = effective(cfg, cfg.distill.alpha);
  const double ce_weight = cfg.tcrd_with_ce ? 1.0 : 0.0;
  auto small_opt = Optimizer::make(cfg.optimizer, cohort.small.parameter_count());
  auto medium_opt = Optimizer::make(cfg.optimizer, cohort.medium.parameter_count());
  BatchStream stream(split.mhd.size(), split.mfc.size(), cfg.batch_size, stage_stream_seed(cfg.seed, Stage::TCRD));
  Checkpointer ckpt(sink, cfg, Stage::TCRD);
  std::vector<std::pair<Role, const ToyModel*>> updated = {{Role::Small, &cohort.small}};
  if (cfg.tcrd_update_medium) updated.insert(updated.begin(), {Role::Medium, &cohort.medium});

  const std::size_t steps = cfg.steps.tcrd;
  for (std::size_t step = 0; step < steps; ++step) {
    const BatchData batch = gather(split, stream.next());
    const double lr = cosine_lr(step, steps, cfg.lr0);
    Matrix large_logits = cohort.large.forward_batch(batch.features, batch.task);
    const KdTerm small_terms[] = {{"kd_LS", large_logits, w_ls},
                                  {"kd_MS", cohort.medium.forward_batch(batch.features, batch.task), w_ms}};

    StepRecord rec{Stage::TCRD, step, lr, batch.task, {}, 0.0};
    const UpdateOutcome s = update_model(cohort.small, *small_opt, batch, lr, ce_weight, small_terms, cfg);
    rec.losses.add("kd_LS", s.kd[0], w_ls);
    rec.losses.add("kd_MS", s.kd[1], w_ms);
    rec.losses.add("ce_S", s.ce, ce_weight);
    if (cfg.tcrd_update_medium) {
      const KdTerm medium_terms[] = {{"kd_LM", std::move(large_logits), w_lm}};
      const UpdateOutcome m = update_model(cohort.medium, *medium_opt, batch, lr, 1.0, medium_terms, cfg);
      rec.losses.add("ce_M", m.ce, 1.0);
      rec.losses.add("kd_LM", m.kd[0], w_lm);
    }
    rec.train_accuracy = s.accuracy;
    log.steps.push_back(std::move(rec));
    ckpt.after_step(log, step, steps, updated);
  }
  cohort.advance(Stage::Done);
  return log;
}

ToyModel sft_small_baseline(const TrainSplit& split, const TrainConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  ToyModel small =
      ToyModel::init(CapacityTier::defaults(Tier::Small), input_dim, PeerCohort::model_seed(cfg.seed, Tier::Small));
  train_supervised(small, split, cfg.pyramid_budget().second, cfg, stage_stream_seed(cfg.seed, Stage::PyramidMS),
                   Stage::PyramidMS, Role::Small);
  return small;
}

// ---------------------------------------------------------------------------

namespace {

MetricsReport score_predictions(std::span<const TaskSample> samples, const std::function<std::size_t(std::size_t)>& predict) {
  std::vector<std::pair<std::string, ConfusionTally>> per_task;
  for (TaskId task : kAllTasks) {
    std::vector<LabeledSet> preds;
    std::vector<LabeledSet> golds;
    const auto names = class_names(task);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].task != task) continue;
      preds.push_back({samples[i].id, {std::string(names[predict(i)])}});
      golds.push_back({samples[i].id, {std::string(names[samples[i].label])}});
    }
    per_task.emplace_back(std::string(task_name(task)), tally(preds, golds));
  }
  return joint_micro(per_task);
}

}  // namespace

MetricsReport evaluate(const ToyModel& model, std::span<const TaskSample> samples) {
  return score_predictions(samples, [&](std::size_t i) {
    const RealVector z = model.forward(samples[i].features, samples[i].task);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  });
}

namespace {

MetricsReport evaluate_msei(const ToyModel& model, std::span<const TaskSample> samples, std::size_t rounds,
                            std::uint64_t seed) {
  LocalModelAdapter adapter(model, samples);
  return score_predictions(samples, [&](std::size_t i) {
    const McqItem item = classify_to_mcq(samples[i]);
    const MseiVerdict v = msei_infer(adapter, item, rounds, seed);
    return *item.position_of(v.final_label);
  });
}

AblationResult average_ablation(std::span<const FoldResult> folds) {
  std::vector<MetricsReport> base, pyr, tcrd, msei;
  for (const auto& f : folds) {
    base.push_back(f.ablation->baseline);
    pyr.push_back(f.ablation->pyramid);
    tcrd.push_back(f.ablation->tcrd);
    msei.push_back(f.ablation->msei);
  }
  return {average_reports(base), average_reports(pyr), average_reports(tcrd), average_reports(msei)};
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return derive_seed(seed, "fold" + std::to_string(fold));
}

void validate_fold_plan(const FoldPlan& plan, std::span<const TaskSample> samples) {
  if (plan.k < 2) throw InvalidArgument("fold plan needs k >= 2");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw InvalidArgument("duplicate sample id '" + s.id + "'");
    auto it = plan.assignments.find(s.id);
    if (it == plan.assignments.end()) throw InvalidArgument("sample '" + s.id + "' is not assigned to a fold");
  }
  std::vector<std::size_t> sizes(plan.k, 0);
  for (const auto& [id, fold] : plan.assignments) {
    if (!ids.contains(id)) throw InvalidArgument("fold plan names unknown sample '" + id + "'");
    if (fold >= plan.k) throw InvalidArgument("sample '" + id + "' assigned to fold out of range");
    ++sizes[fold];
  }
  for (std::size_t f = 0; f < plan.k; ++f) {
    if (sizes[f] == 0) throw InvalidArgument("fold " + std::to_string(f) + " is empty");
  }
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

PipelineResult run_pipeline(const TrainConfig& cfg, std::span<const TaskSample> samples, const FoldPlan& folds,
                            const PipelineOptions& options) {
  cfg.validate();
  validate_fold_plan(folds, samples);
  if (options.ablation && options.msei_rounds < 2) throw InvalidArgument("msei.rounds must be >= 2");
  const std::size_t dim = samples.front().features.size();
  for (const auto& s : samples) {
    if (s.features.size() != dim) throw InvalidArgument("samples differ in feature dimension");
  }

  PipelineResult result;
  result.folds.resize(folds.k);
  parallel_for(folds.k, options.workers, [&](std::size_t f) {
    std::vector<TaskSample> train;
    std::vector<TaskSample> test;
    for (const auto& s : samples) (folds.fold_of(s.id) == f ? test : train).push_back(s);
    const TrainSplit split = TrainSplit::from(train);

    TrainConfig fcfg = cfg;
    fcfg.seed = fold_seed(cfg.seed, f);
    CheckpointSink sink;
    if (options.output_dir) sink.dir = *options.output_dir / ("fold_" + std::to_string(f)) / "checkpoints";

    FoldResult& out = result.folds[f];
    out.fold = f;
    out.cohort = PeerCohort::init(dim, fcfg.seed);
    out.log = cold_start_sft(out.cohort, split, fcfg, sink);
    out.log.append(stage1_pyramid(out.cohort, split, fcfg, sink));
    std::optional<MetricsReport> after_pyramid;
    if (options.ablation) after_pyramid = evaluate(out.cohort.small, test);
    out.log.append(stage2_tcrd(out.cohort, split, fcfg, sink));

    out.large = evaluate(out.cohort.large, test);
    out.medium = evaluate(out.cohort.medium, test);
    out.small = evaluate(out.cohort.small, test);
    for (MetricsReport* r : {&out.large, &out.medium, &out.small}) r->fold = static_cast<int>(f);
    if (options.ablation) {
      AblationResult a;
      a.baseline = evaluate(sft_small_baseline(split, fcfg, dim), test);
      a.pyramid = *after_pyramid;
      a.tcrd = out.small;
      a.msei = evaluate_msei(out.cohort.small, test, options.msei_rounds, fcfg.seed);
      out.ablation = std::move(a);
    }
  });

  std::vector<MetricsReport> large, medium, small;
  for (const auto& f : result.folds) {
    large.push_back(f.large);
    medium.push_back(f.medium);
    small.push_back(f.small);
  }
  result.large = average_reports(large);
  result.medium = average_reports(medium);
  result.small = average_reports(small);
  if (options.ablation) result.ablation = average_ablation(result.folds);
  return result;
}

}  // namespace pdistill
