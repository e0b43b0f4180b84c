// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/msei.hpp"

#include <httplib.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "pdistill/errors.hpp"
#include "pdistill/rng.hpp"

namespace pdistill {

std::string option_label(std::size_t position) {
  if (position >= 26) throw InvalidArgument("at most 26 options are supported");
  return std::string(1, static_cast<char>('A' + position));
}

void McqItem::validate() const {
  if (options.size() < 2) throw InvalidArgument("item '" + id + "' needs at least two options");
  std::set<std::string_view> labels;
  for (const auto& o : options) {
    if (!labels.insert(o.label).second) throw InvalidArgument("item '" + id + "' repeats label " + o.label);
  }
  if (!labels.contains(answer_key)) throw InvalidArgument("item '" + id + "' answer key is not an option");
}

std::optional<std::size_t> McqItem::position_of(std::string_view label) const {
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i].label == label) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

OptionPermutation OptionPermutation::identity(std::size_t n) {
  OptionPermutation p;
  p.source.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.source[i] = i;
  return p;
}

OptionPermutation OptionPermutation::from_labels(const McqItem& item,
                                                 const std::map<std::string, std::string>& mapping) {
  if (mapping.size() != item.options.size()) throw InvalidArgument("permutation must cover every label");
  OptionPermutation p;
  p.source.resize(item.options.size());
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    auto it = mapping.find(item.options[i].label);
    if (it == mapping.end()) throw InvalidArgument("permutation misses label " + item.options[i].label);
    const auto from = item.position_of(it->second);
    if (!from) throw InvalidArgument("permutation maps to unknown label " + it->second);
    p.source[i] = *from;
  }
  p.validate(item.options.size());
  return p;
}

bool OptionPermutation::is_identity() const {
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] != i) return false;
  }
  return true;
}

OptionPermutation OptionPermutation::inverse() const {
  validate(source.size());
  OptionPermutation inv;
  inv.source.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) inv.source[source[i]] = i;
  return inv;
}

void OptionPermutation::validate(std::size_t n) const {
  if (source.size() != n) throw InvalidArgument("permutation size does not match option count");
  std::vector<char> seen(n, 0);
  for (std::size_t s : source) {
    if (s >= n || seen[s]) throw InvalidArgument("permutation is not a bijection");
    seen[s] = 1;
  }
}

PermutedItem apply_permutation(const McqItem& item, const OptionPermutation& perm) {
  item.validate();
  perm.validate(item.options.size());
  PermutedItem out;
  out.item.id = item.id;
  out.item.stem = item.stem;
  const std::size_t truth = *item.position_of(item.answer_key);
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    const McqOption& from = item.options[perm.source[i]];
    out.item.options.push_back({item.options[i].label, from.content});
    out.to_canonical.emplace(item.options[i].label, from.label);
    if (perm.source[i] == truth) out.item.answer_key = item.options[i].label;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adapters

AdapterAnswer ContentOracleAdapter::answer(const McqItem& presented) {
  auto it = truth_.find(presented.id);
  if (it == truth_.end()) throw InvalidArgument("oracle has no truth for item '" + presented.id + "'");
  for (const auto& o : presented.options) {
    if (o.content == it->second) return {o.label, std::nullopt};
  }
  throw InvalidArgument("true content of item '" + presented.id + "' is not among its options");
}

AdapterAnswer FixedLabelAdapter::answer(const McqItem&) { return {label_, std::nullopt}; }

LocalModelAdapter::LocalModelAdapter(const ToyModel& model, std::span<const TaskSample> samples)
    : model_(&model) {
  for (const auto& s : samples) by_id_.emplace(s.id, &s);
}

AdapterAnswer LocalModelAdapter::answer(const McqItem& presented) {
  auto it = by_id_.find(presented.id);
  if (it == by_id_.end()) throw InvalidArgument("no features for item '" + presented.id + "'");
  const TaskSample& sample = *it->second;
  const RealVector logits = model_->forward(sample.features, sample.task);
  const auto names = class_names(sample.task);
  RealVector ordered;
  ordered.reserve(presented.options.size());
  for (const auto& o : presented.options) {
    auto pos = std::find(names.begin(), names.end(), o.content);
    if (pos == names.end()) throw InvalidArgument("option '" + o.content + "' is not a class name");
    ordered.push_back(logits[static_cast<std::size_t>(pos - names.begin())]);
  }
  const auto best = static_cast<std::size_t>(std::max_element(ordered.begin(), ordered.end()) - ordered.begin());
  return {presented.options[best].label, std::move(ordered)};
}

RemoteAdapter::RemoteAdapter(std::string url, std::chrono::milliseconds timeout, int max_retries)
    : timeout_(timeout), max_retries_(max_retries) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.substr(0, scheme) != "http") {
    throw InvalidArgument("remote adapter url must start with http://");
  }
  const auto slash = url.find('/', scheme + 3);
  host_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  if (host_.size() <= scheme + 3) throw InvalidArgument("remote adapter url has no host");
}

nlohmann::ordered_json adapter_request(const McqItem& presented) {
  nlohmann::ordered_json j;
  j["id"] = presented.id;
  j["stem"] = presented.stem;
  j["options"] = nlohmann::ordered_json::array();
  for (const auto& o : presented.options) j["options"].push_back({{"label", o.label}, {"content", o.content}});
  return j;
}

AdapterAnswer parse_adapter_response(const McqItem& presented, std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("adapter response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choice") || !j["choice"].is_string()) {
    throw ProtocolError("adapter response lacks a string 'choice'");
  }
  AdapterAnswer out{j["choice"].get<std::string>(), std::nullopt};
  if (!presented.position_of(out.choice)) throw ProtocolError("adapter chose unpresented label '" + out.choice + "'");
  if (j.contains("logits") && !j["logits"].is_null()) {
    try {
      out.logits = j["logits"].get<RealVector>();
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("adapter logits are not a numeric array");
    }
    if (out.logits->size() != presented.options.size()) throw ProtocolError("adapter logits misaligned with options");
  }
  return out;
}

AdapterAnswer RemoteAdapter::answer(const McqItem& presented) {
  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  const std::string body = adapter_request(presented).dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProtocolError("adapter endpoint answered HTTP " + std::to_string(res->status));
    return parse_adapter_response(presented, res->body);
  }
  throw NetworkError("adapter endpoint " + host_ + path_ + " unreachable: " + last_error);
}

// ---------------------------------------------------------------------------

namespace {

OptionPermutation sample_derangement(std::size_t n, Rng& rng) {
  OptionPermutation p = OptionPermutation::identity(n);
  for (;;) {
    rng.shuffle(std::span(p.source));
    bool fixed_point = false;
    for (std::size_t i = 0; i < n; ++i) fixed_point = fixed_point || p.source[i] == i;
    if (!fixed_point) return p;
  }
}

}  // namespace

MseiVerdict msei_infer(ModelAdapter& adapter, const McqItem& item, std::size_t rounds, std::uint64_t seed) {
  if (rounds < 2) throw InvalidArgument("mapping-shift inference needs at least two rounds");
  item.validate();
  Rng rng(derive_seed(seed, item.id));
  MseiVerdict verdict;
  verdict.item_id = item.id;

  for (std::size_t r = 0; r < rounds; ++r) {
    OptionPermutation perm =
        r == 0 ? OptionPermutation::identity(item.options.size()) : sample_derangement(item.options.size(), rng);
    const PermutedItem shown = apply_permutation(item, perm);
    AdapterAnswer ans = adapter.answer(shown.item);
    auto it = shown.to_canonical.find(ans.choice);
    if (it == shown.to_canonical.end()) throw ProtocolError("adapter chose unpresented label '" + ans.choice + "'");
    ++verdict.votes[it->second];
    verdict.rounds.push_back({std::move(perm), std::move(ans.choice), it->second, std::move(ans.logits)});
  }

  const std::string& first = verdict.rounds.front().canonical;
  std::size_t top = 0;
  for (const auto& [label, count] : verdict.votes) top = std::max(top, count);
  if (verdict.votes.at(first) == top) {
    verdict.final_label = first;
  } else {
    for (const auto& round : verdict.rounds) {
      if (verdict.votes.at(round.canonical) == top) {
        verdict.final_label = round.canonical;
        break;
      }
    }
  }
  verdict.final_content = item.options[*item.position_of(verdict.final_label)].content;
  verdict.consistent = verdict.votes.size() == 1;
  return verdict;
}

McqItem classify_to_mcq(const TaskSample& sample) { return classify_to_mcq(sample, class_names(sample.task)); }

McqItem classify_to_mcq(const TaskSample& sample, std::span<const std::string_view> names) {
  if (names.size() != num_classes(sample.task)) {
    throw InvalidArgument("class-name table for " + std::string(task_name(sample.task)) + " is missing or incomplete");
  }
  if (sample.label >= names.size()) throw InvalidArgument("sample label out of range");
  McqItem item;
  item.id = sample.id;
  item.stem = std::string(sample.task == TaskId::MHD ? "Which hallucination type applies? "
                                                     : "Which factuality label applies? ") +
              sample.text;
  for (std::size_t i = 0; i < names.size(); ++i) item.options.push_back({option_label(i), std::string(names[i])});
  item.answer_key = option_label(sample.label);
  return item;
}

nlohmann::ordered_json verdict_to_json(const MseiVerdict& v) {
  nlohmann::ordered_json j;
  j["id"] = v.item_id;
  j["final_label"] = v.final_label;
  j["final_content"] = v.final_content;
  j["consistent"] = v.consistent;
  j["votes"] = v.votes;
  j["rounds"] = nlohmann::ordered_json::array();
  for (const auto& r : v.rounds) {
    nlohmann::ordered_json round;
    round["permutation"] = r.permutation.source;
    round["choice"] = r.choice;
    round["canonical"] = r.canonical;
    if (r.logits) round["logits"] = *r.logits;
    j["rounds"].push_back(std::move(round));
  }
  return j;
}

}  // namespace pdistill
