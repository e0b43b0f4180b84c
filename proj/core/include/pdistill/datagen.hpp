// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-task data: Gaussian class clusters with templated claim
// text, negative synthesis by entity injection, stratified k-fold plans and
// task-homogeneous batch scheduling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pdistill/diffkernel.hpp"
#include "pdistill/models.hpp"

namespace pdistill {

enum class Provenance { Generated, Sns };

std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

/// MHD: faithful, object_hallucination, attribute_hallucination.
/// MFC: supported, refuted, not_enough_evidence, misleading_context.
std::span<const std::string_view> class_names(TaskId task);

inline constexpr std::size_t kMhdFaithful = 0;
inline constexpr std::size_t kMfcSupported = 0;
inline constexpr std::size_t kMfcRefuted = 1;

struct TaskSample {
  std::string id;
  TaskId task = TaskId::MHD;
  RealVector features;
  std::size_t label = 0;
  /// Claim text; entity spans are marked `[[surface]]`, hallucinated ones
  /// `[[!surface]]`.
  std::string text;
  Provenance provenance = Provenance::Generated;

  bool operator==(const TaskSample&) const = default;
};

struct EntitySpan {
  std::size_t begin;  // offset of "[["
  std::size_t end;    // one past "]]"
  std::string surface;
  bool hallucinated;

  bool operator==(const EntitySpan&) const = default;
};

/// Parses the marked entity spans of a claim, in order.
std::vector<EntitySpan> entity_spans(std::string_view text);

struct Entity {
  std::string surface;
  std::string category;
};

struct EntityBank {
  std::vector<Entity> entities;

  /// The built-in vocabulary the generator draws from.
  static EntityBank defaults();
  /// Throws InvalidArgument on duplicate surfaces.
  void validate() const;
  const Entity* find(std::string_view surface) const;
};

/// Unit direction in feature space associated with an entity category.
RealVector category_direction(std::string_view category, std::size_t dim);

/// n_per_task samples for each task, class-balanced within one sample.
/// Class means of both tasks are separation * Q e_c for one shared random
/// orthonormal Q, with separation = 1.5 / sqrt(difficulty) and unit
/// isotropic noise, so a lower difficulty spreads the clusters further.
std::vector<TaskSample> generate_dataset(std::size_t n_per_task, std::size_t input_dim, double difficulty,
                                         std::uint64_t seed);

/// Synergistic negative synthesis. Picks ceil(rate * |positives|) positives;
/// in each, exactly one entity span is replaced by a hallucinated entity
/// taken from the MHD negatives (bank as fallback), the label becomes
/// "refuted", and the features shift along the entity's category direction.
std::vector<TaskSample> sns_augment(std::span<const TaskSample> mhd_negatives,
                                    std::span<const TaskSample> mfc_positives, const EntityBank& bank,
                                    double rate, std::uint64_t seed);

struct FoldPlan {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignments;

  std::size_t fold_of(const std::string& id) const;
  std::vector<std::string> members(std::size_t fold) const;
  bool operator==(const FoldPlan&) const = default;
};

/// Stratified split: ids sharing a stratum key are dealt round-robin with a
/// running offset, so fold sizes and per-stratum counts each differ by at
/// most one.
FoldPlan kfold_split(std::span<const std::string> ids, std::span<const std::string> strata, std::size_t k,
                     std::uint64_t seed);
/// Stratifies by (task, label).
FoldPlan kfold_split(std::span<const TaskSample> samples, std::size_t k, std::uint64_t seed);

struct Batch {
  TaskId task;
  /// Indices into the task's sample list.
  std::vector<std::size_t> indices;
};

/// One epoch: every sample exactly once, task-homogeneous batches, the two
/// tasks interleaved in proportion to their batch counts.
std::vector<Batch> mix_batches(std::span<const TaskSample> mhd, std::span<const TaskSample> mfc,
                               std::size_t batch_size, std::uint64_t seed);
std::vector<Batch> mix_batches(std::size_t n_mhd, std::size_t n_mfc, std::size_t batch_size,
                               std::uint64_t seed);

/// Endless batch iterator; epoch e is mix_batches(..., derive_seed(seed, e)).
class BatchStream {
 public:
  BatchStream(std::size_t n_mhd, std::size_t n_mfc, std::size_t batch_size, std::uint64_t seed);
  const Batch& next();
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t n_mhd_;
  std::size_t n_mfc_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<Batch> plan_;
};

// Dataset files hold one JSON object per line with exactly the fields
// id, task, label, features, text, provenance. Fold files hold a single
// object {"k": n, "assignments": {id: fold, ...}}.
void write_dataset(std::ostream& out, std::span<const TaskSample> samples);
std::vector<TaskSample> read_dataset(std::istream& in);
void write_fold_plan(std::ostream& out, const FoldPlan& plan);
FoldPlan read_fold_plan(std::istream& in);

}  // namespace pdistill
