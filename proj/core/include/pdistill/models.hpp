// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Capacity-tiered multi-task classifiers: a tanh MLP trunk shared by two
// linear heads, one per task.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pdistill/diffkernel.hpp"

namespace pdistill {

enum class TaskId { MHD, MFC };

inline constexpr std::array<TaskId, 2> kAllTasks = {TaskId::MHD, TaskId::MFC};

/// 3 hallucination types for MHD, 4 factuality labels for MFC.
constexpr std::size_t num_classes(TaskId task) { return task == TaskId::MHD ? 3 : 4; }

std::string_view task_name(TaskId task);
/// Parses "MHD" / "MFC"; throws InvalidArgument otherwise.
TaskId parse_task(std::string_view name);

enum class Tier { Large, Medium, Small };

std::string_view tier_name(Tier tier);
Tier parse_tier(std::string_view name);

struct CapacityTier {
  Tier tier = Tier::Small;
  std::vector<std::size_t> widths;

  /// Large [256,128], Medium [128,64], Small [64,32].
  static CapacityTier defaults(Tier tier);
};

/// True when every layer of `big` is strictly wider than `small`'s.
bool strictly_dominates(const CapacityTier& big, const CapacityTier& small);

class ToyModel {
 public:
  /// Empty model; use init() or read_checkpoint() for a usable one.
  ToyModel() = default;
  /// Weights drawn from U(-a, a) with a = sqrt(6 / (fan_in + fan_out));
  /// biases start at zero. Same (tier, input_dim, seed) gives a bit-identical
  /// model.
  static ToyModel init(const CapacityTier& tier, std::size_t input_dim, std::uint64_t seed);

  const CapacityTier& tier() const { return tier_; }
  std::size_t input_dim() const { return input_dim_; }
  std::uint64_t seed() const { return seed_; }

  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Raw logits for one sample.
  RealVector forward(std::span<const double> features, TaskId task) const;
  /// Raw logits for a batch (one sample per row), without recording.
  Matrix forward_batch(const Matrix& features, TaskId task) const;
  /// Records the forward pass on a tape bound to this model's parameters.
  Var forward(Tape& tape, const Matrix& features, TaskId task) const;

  bool operator==(const ToyModel& other) const;

 private:
  struct Layer {
    std::size_t weight;
    std::size_t bias;
  };

  const Layer& head(TaskId task) const { return task == TaskId::MHD ? mhd_head_ : mfc_head_; }

  CapacityTier tier_;
  std::size_t input_dim_ = 0;
  std::uint64_t seed_ = 0;
  Parameters params_;
  std::vector<Layer> trunk_;
  Layer mhd_head_{};
  Layer mfc_head_{};
};

// Checkpoint format, version 1. UTF-8 text, one field per line:
//
//   pdistill-checkpoint 1
//   tier <large|medium|small>
//   input_dim <n>
//   widths <w1> <w2> ...
//   seed <u64>
//   stage <name>
//   params <count>
//   <count lines, each one parameter in C99 hex-float notation>
//
// Parameter order is block order: trunk W/b per layer, then MHD head W/b,
// then MFC head W/b; matrices row-major. Hex floats round-trip exactly, so
// the file is byte-stable for a given model.
inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ToyModel& model, std::string_view stage);
ToyModel read_checkpoint(std::istream& in, std::string* stage = nullptr);

}  // namespace pdistill
