// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mapping shift-enhanced inference: ask a model the same multiple-choice
// question several times with the option contents permuted across labels,
// map every answer back to the content it points at, and resolve a final
// answer by majority vote.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pdistill/datagen.hpp"
#include "pdistill/models.hpp"

namespace pdistill {

struct McqOption {
  std::string label;
  std::string content;

  bool operator==(const McqOption&) const = default;
};

struct McqItem {
  std::string id;
  std::string stem;
  std::vector<McqOption> options;
  /// Label of the ground-truth option.
  std::string answer_key;

  /// >= 2 options, unique labels, answer key present.
  void validate() const;
  std::optional<std::size_t> position_of(std::string_view label) const;
  bool operator==(const McqItem&) const = default;
};

/// "A", "B", ..., "Z".
std::string option_label(std::size_t position);

/// Position i shows the content originally at position source[i].
struct OptionPermutation {
  std::vector<std::size_t> source;

  static OptionPermutation identity(std::size_t n);
  /// Builds from a label -> label bijection over the item's labels, where
  /// mapping[l] names the label whose content l will show.
  static OptionPermutation from_labels(const McqItem& item, const std::map<std::string, std::string>& mapping);

  bool is_identity() const;
  OptionPermutation inverse() const;
  /// Throws InvalidArgument unless source is a bijection on [0, n).
  void validate(std::size_t n) const;
  bool operator==(const OptionPermutation&) const = default;
};

struct PermutedItem {
  McqItem item;
  /// Presented label -> label the content held in canonical order.
  std::map<std::string, std::string> to_canonical;
};

PermutedItem apply_permutation(const McqItem& item, const OptionPermutation& perm);

struct AdapterAnswer {
  std::string choice;
  /// Optional scores aligned to the presented option order.
  std::optional<RealVector> logits;
};

class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  /// Picks one of the presented labels.
  virtual AdapterAnswer answer(const McqItem& presented) = 0;
};

/// Scores contents only: answers with whichever label shows the item's true
/// content. Position-blind by construction.
class ContentOracleAdapter final : public ModelAdapter {
 public:
  explicit ContentOracleAdapter(std::map<std::string, std::string> truth_by_id) : truth_(std::move(truth_by_id)) {}
  AdapterAnswer answer(const McqItem& presented) override;

 private:
  std::map<std::string, std::string> truth_;
};

/// Always answers the same label (a pure position bias).
class FixedLabelAdapter final : public ModelAdapter {
 public:
  explicit FixedLabelAdapter(std::string label) : label_(std::move(label)) {}
  AdapterAnswer answer(const McqItem& presented) override;

 private:
  std::string label_;
};

/// Answers with a local classifier: the head's logits are reordered to the
/// presented option order and the argmax label is chosen.
class LocalModelAdapter final : public ModelAdapter {
 public:
  /// `samples` maps item ids to the sample whose features feed the model;
  /// both must outlive the adapter.
  LocalModelAdapter(const ToyModel& model, std::span<const TaskSample> samples);
  AdapterAnswer answer(const McqItem& presented) override;

 private:
  const ToyModel* model_;
  std::map<std::string, const TaskSample*> by_id_;
};

/// JSON over HTTP. Request {"id", "stem", "options": [{"label", "content"}]},
/// response {"choice", "logits"?}. Transport failures and 5xx responses are
/// retried up to `max_retries` times before NetworkError.
class RemoteAdapter final : public ModelAdapter {
 public:
  RemoteAdapter(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(10),
                int max_retries = 2);
  AdapterAnswer answer(const McqItem& presented) override;

 private:
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
  int max_retries_;
};

nlohmann::ordered_json adapter_request(const McqItem& presented);
/// Validates the response against the presented item; ProtocolError on a
/// malformed body or a label that was not presented.
AdapterAnswer parse_adapter_response(const McqItem& presented, std::string_view body);

struct MseiRound {
  OptionPermutation permutation;
  std::string choice;
  std::string canonical;
  std::optional<RealVector> logits;
};

struct MseiVerdict {
  std::string item_id;
  /// Canonical label of the resolved answer and its content.
  std::string final_label;
  std::string final_content;
  bool consistent = false;
  std::map<std::string, std::size_t> votes;
  std::vector<MseiRound> rounds;

  const std::string& first_choice() const { return rounds.front().canonical; }
};

/// Round 1 is the identity; rounds 2..r present uniformly drawn derangements
/// (so every re-query moves the first answer). Final answer: majority of the
/// canonical answers, ties resolved toward the round-1 answer, then toward
/// the earliest round. consistent = all rounds agree.
MseiVerdict msei_infer(ModelAdapter& adapter, const McqItem& item, std::size_t rounds, std::uint64_t seed);

/// Options are the task's class names in canonical order; the answer key is
/// the label of the sample's class.
McqItem classify_to_mcq(const TaskSample& sample);
McqItem classify_to_mcq(const TaskSample& sample, std::span<const std::string_view> class_names);

nlohmann::ordered_json verdict_to_json(const MseiVerdict& verdict);

}  // namespace pdistill
