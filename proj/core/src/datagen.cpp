// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <set>

#include "pdistill/errors.hpp"
#include "pdistill/rng.hpp"

namespace pdistill {

namespace {

constexpr std::array<std::string_view, 3> kMhdClasses = {"faithful", "object_hallucination",
                                                         "attribute_hallucination"};
constexpr std::array<std::string_view, 4> kMfcClasses = {"supported", "refuted", "not_enough_evidence",
                                                         "misleading_context"};

constexpr std::array<std::string_view, 4> kScenes = {"street", "kitchen", "park", "newsroom"};

// Feature shift applied to a synthesized negative.
constexpr double kSnsShift = 1.0;

std::string span_markup(std::string_view surface, bool hallucinated) {
  return std::string(hallucinated ? "[[!" : "[[") + std::string(surface) + "]]";
}

std::string make_text(TaskId task, std::size_t label, const EntityBank& bank, Rng& rng) {
  const auto& ents = bank.entities;
  const std::size_t a = rng.index(ents.size());
  std::size_t b = rng.index(ents.size() - 1);
  if (b >= a) ++b;
  const std::string_view scene = kScenes[rng.index(kScenes.size())];
  if (task == TaskId::MHD) {
    const bool hallucinated = label != kMhdFaithful;
    return "caption: a " + span_markup(ents[a].surface, false) + " beside a " +
           span_markup(ents[b].surface, hallucinated) + " in the " + std::string(scene);
  }
  return "claim: the " + span_markup(ents[a].surface, false) + " was seen near the " +
         span_markup(ents[b].surface, false) + " at the " + std::string(scene);
}

// First `count` columns of a random orthonormal basis of R^dim.
std::vector<RealVector> random_frame(std::size_t dim, std::size_t count, Rng& rng) {
  std::vector<RealVector> basis;
  while (basis.size() < count) {
    RealVector v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& u : basis) {
      const double d = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= d * u[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

std::string pad_index(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

}  // namespace

std::string_view provenance_name(Provenance p) { return p == Provenance::Sns ? "sns" : "generated"; }

Provenance parse_provenance(std::string_view name) {
  if (name == "generated") return Provenance::Generated;
  if (name == "sns") return Provenance::Sns;
  throw InvalidArgument("unknown provenance '" + std::string(name) + "'");
}

std::span<const std::string_view> class_names(TaskId task) {
  if (task == TaskId::MHD) return kMhdClasses;
  return kMfcClasses;
}

std::vector<EntitySpan> entity_spans(std::string_view text) {
  std::vector<EntitySpan> spans;
  std::size_t pos = 0;
  while ((pos = text.find("[[", pos)) != std::string_view::npos) {
    const std::size_t close = text.find("]]", pos + 2);
    if (close == std::string_view::npos) throw InvalidArgument("unterminated entity span");
    std::string_view inner = text.substr(pos + 2, close - pos - 2);
    const bool hallucinated = !inner.empty() && inner.front() == '!';
    if (hallucinated) inner.remove_prefix(1);
    spans.push_back({pos, close + 2, std::string(inner), hallucinated});
    pos = close + 2;
  }
  return spans;
}

EntityBank EntityBank::defaults() {
  return EntityBank{{
      {"red car", "vehicle"},        {"blue bus", "vehicle"},        {"white truck", "vehicle"},
      {"yellow taxi", "vehicle"},    {"brown dog", "animal"},        {"black cat", "animal"},
      {"grey horse", "animal"},      {"white bird", "animal"},       {"young woman", "person"},
      {"old man", "person"},         {"little girl", "person"},      {"police officer", "person"},
      {"wooden table", "object"},    {"green umbrella", "object"},   {"broken chair", "object"},
      {"red kite", "object"},
  }};
}

void EntityBank::validate() const {
  std::set<std::string_view> seen;
  for (const auto& e : entities) {
    if (!seen.insert(e.surface).second) throw InvalidArgument("duplicate entity surface '" + e.surface + "'");
  }
}

const Entity* EntityBank::find(std::string_view surface) const {
  for (const auto& e : entities) {
    if (e.surface == surface) return &e;
  }
  return nullptr;
}

RealVector category_direction(std::string_view category, std::size_t dim) {
  Rng rng(derive_seed(0x5ca7e90a11ULL, category));
  RealVector v(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    for (double& x : v) x = rng.normal();
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  for (double& x : v) x /= norm;
  return v;
}

std::vector<TaskSample> generate_dataset(std::size_t n_per_task, std::size_t input_dim, double difficulty,
                                         std::uint64_t seed) {
  if (n_per_task < 10) throw InvalidArgument("need at least 10 samples per task");
  if (input_dim < 4) throw InvalidArgument("feature dimension must be at least 4");
  if (!(difficulty > 0.0 && difficulty <= 1.0)) throw InvalidArgument("difficulty must lie in (0, 1]");

  const EntityBank bank = EntityBank::defaults();
  Rng rng(derive_seed(seed, "dataset"));
  const auto frame = random_frame(input_dim, num_classes(TaskId::MFC), rng);
  const double separation = 1.5 / std::sqrt(difficulty);

  std::vector<TaskSample> out;
  out.reserve(2 * n_per_task);
  for (TaskId task : kAllTasks) {
    const std::size_t classes = num_classes(task);
    const std::string prefix = task == TaskId::MHD ? "mhd-" : "mfc-";
    for (std::size_t i = 0; i < n_per_task; ++i) {
      TaskSample s;
      s.id = prefix + pad_index(i);
      s.task = task;
      s.label = i % classes;
      s.features.resize(input_dim);
      for (std::size_t d = 0; d < input_dim; ++d) {
        s.features[d] = separation * frame[s.label][d] + rng.normal();
      }
      s.text = make_text(task, s.label, bank, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<TaskSample> sns_augment(std::span<const TaskSample> mhd_negatives,
                                    std::span<const TaskSample> mfc_positives, const EntityBank& bank,
                                    double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("sns rate must lie in [0, 1]");
  bank.validate();
  // Guard against 0.1 * 30 = 3.0000000000000004 rounding up.
  const auto count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(mfc_positives.size()) - 1e-9));
  if (count == 0) return {};

  std::vector<std::string> pool;
  for (const auto& neg : mhd_negatives) {
    for (const auto& span : entity_spans(neg.text)) {
      if (span.hallucinated && std::find(pool.begin(), pool.end(), span.surface) == pool.end()) {
        pool.push_back(span.surface);
      }
    }
  }
  if (pool.empty() && bank.entities.empty()) {
    throw InvalidArgument("no hallucinated entities to inject: negatives carry none and the bank is empty");
  }

  Rng rng(derive_seed(seed, "sns"));
  std::vector<std::size_t> order(mfc_positives.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  order.resize(count);
  std::sort(order.begin(), order.end());

  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t idx : order) {
    const TaskSample& src = mfc_positives[idx];
    if (src.task != TaskId::MFC) throw InvalidArgument("sns positives must be MFC samples");
    const auto spans = entity_spans(src.text);
    if (spans.empty()) throw InvalidArgument("sns positive '" + src.id + "' has no entity span");
    const EntitySpan& target = spans[rng.index(spans.size())];

    std::vector<std::string> candidates;
    for (const auto& s : pool) {
      if (s != target.surface) candidates.push_back(s);
    }
    if (candidates.empty()) {
      for (const auto& e : bank.entities) {
        if (e.surface != target.surface) candidates.push_back(e.surface);
      }
    }
    if (candidates.empty()) throw InvalidArgument("no replacement entity differs from '" + target.surface + "'");
    const std::string& injected = candidates[rng.index(candidates.size())];

    TaskSample aug = src;
    aug.id = src.id + "#sns";
    aug.text = src.text.substr(0, target.begin) + span_markup(injected, true) + src.text.substr(target.end);
    aug.label = kMfcRefuted;
    aug.provenance = Provenance::Sns;
    const Entity* entity = bank.find(injected);
    const RealVector dir = category_direction(entity != nullptr ? entity->category : "misc", src.features.size());
    for (std::size_t d = 0; d < dir.size(); ++d) aug.features[d] += kSnsShift * dir[d];
    out.push_back(std::move(aug));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Folds

std::size_t FoldPlan::fold_of(const std::string& id) const {
  auto it = assignments.find(id);
  if (it == assignments.end()) throw InvalidArgument("id '" + id + "' has no fold assignment");
  return it->second;
}

std::vector<std::string> FoldPlan::members(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignments) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

FoldPlan kfold_split(std::span<const std::string> ids, std::span<const std::string> strata, std::size_t k,
                     std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k-fold split needs k >= 2");
  if (ids.size() < k) throw InvalidArgument("fewer ids than folds");
  if (strata.size() != ids.size()) throw InvalidArgument("one stratum key per id required");

  std::map<std::string, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[strata[i]].push_back(ids[i]);

  Rng rng(derive_seed(seed, "folds"));
  FoldPlan plan;
  plan.k = k;
  std::size_t next = 0;
  for (auto& [key, members] : groups) {
    rng.shuffle(std::span(members));
    for (const auto& id : members) {
      if (!plan.assignments.emplace(id, next % k).second) throw InvalidArgument("duplicate id '" + id + "'");
      ++next;
    }
  }
  return plan;
}

FoldPlan kfold_split(std::span<const TaskSample> samples, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<std::string> strata;
  ids.reserve(samples.size());
  strata.reserve(samples.size());
  for (const auto& s : samples) {
    ids.push_back(s.id);
    strata.push_back(std::string(task_name(s.task)) + "/" + std::to_string(s.label));
  }
  return kfold_split(ids, strata, k, seed);
}

// ---------------------------------------------------------------------------
// Batches

std::vector<Batch> mix_batches(std::size_t n_mhd, std::size_t n_mfc, std::size_t batch_size,
                               std::uint64_t seed) {
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (n_mhd == 0 || n_mfc == 0) throw InvalidArgument("both tasks need at least one sample");

  Rng rng(seed);
  auto chunk = [&](TaskId task, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      batches.push_back({task, std::vector<std::size_t>(order.begin() + start, order.begin() + stop)});
    }
    return batches;
  };
  std::vector<Batch> a = chunk(TaskId::MHD, n_mhd);
  std::vector<Batch> b = chunk(TaskId::MFC, n_mfc);

  // Merge on batch midpoints (i + 1/2) / |a| vs (j + 1/2) / |b|, compared
  // exactly in integers; ties go to MHD.
  std::vector<Batch> out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    const bool take_a = j == b.size() || (i < a.size() && (2 * i + 1) * b.size() <= (2 * j + 1) * a.size());
    out.push_back(std::move(take_a ? a[i++] : b[j++]));
  }
  return out;
}

std::vector<Batch> mix_batches(std::span<const TaskSample> mhd, std::span<const TaskSample> mfc,
                               std::size_t batch_size, std::uint64_t seed) {
  return mix_batches(mhd.size(), mfc.size(), batch_size, seed);
}

BatchStream::BatchStream(std::size_t n_mhd, std::size_t n_mfc, std::size_t batch_size, std::uint64_t seed)
    : n_mhd_(n_mhd), n_mfc_(n_mfc), batch_size_(batch_size), seed_(seed) {
  plan_ = mix_batches(n_mhd_, n_mfc_, batch_size_, derive_seed(seed_, std::uint64_t{0}));
}

const Batch& BatchStream::next() {
  if (cursor_ == plan_.size()) {
    ++epoch_;
    plan_ = mix_batches(n_mhd_, n_mfc_, batch_size_, derive_seed(seed_, static_cast<std::uint64_t>(epoch_)));
    cursor_ = 0;
  }
  return plan_[cursor_++];
}

// ---------------------------------------------------------------------------
// Serialization

void write_dataset(std::ostream& out, std::span<const TaskSample> samples) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["task"] = task_name(s.task);
    j["label"] = s.label;
    j["features"] = s.features;
    j["text"] = s.text;
    j["provenance"] = provenance_name(s.provenance);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing dataset");
}

std::vector<TaskSample> read_dataset(std::istream& in) {
  static const std::set<std::string> kFields = {"id", "task", "label", "features", "text", "provenance"};
  std::vector<TaskSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || j.size() != kFields.size()) throw InvalidArgument("wrong field set");
      for (const auto& [key, _] : j.items()) {
        if (!kFields.contains(key)) throw InvalidArgument("unexpected field '" + key + "'");
      }
      TaskSample s;
      s.id = j.at("id").get<std::string>();
      s.task = parse_task(j.at("task").get<std::string>());
      s.label = j.at("label").get<std::size_t>();
      if (s.label >= num_classes(s.task)) throw InvalidArgument("label out of range");
      s.features = j.at("features").get<RealVector>();
      s.text = j.at("text").get<std::string>();
      s.provenance = parse_provenance(j.at("provenance").get<std::string>());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_fold_plan(std::ostream& out, const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["k"] = plan.k;
  j["assignments"] = plan.assignments;
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing fold plan");
}

FoldPlan read_fold_plan(std::istream& in) {
  try {
    nlohmann::json j;
    in >> j;
    FoldPlan plan;
    plan.k = j.at("k").get<std::size_t>();
    plan.assignments = j.at("assignments").get<std::map<std::string, std::size_t>>();
    for (const auto& [id, fold] : plan.assignments) {
      if (fold >= plan.k) throw InvalidArgument("fold index out of range for id '" + id + "'");
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed fold plan: ") + e.what());
  }
}

}  // namespace pdistill
