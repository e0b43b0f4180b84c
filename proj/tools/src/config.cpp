// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <fmt/format.h>

#include <charconv>
#include <set>

#include "pdistill/cli.hpp"
#include "pdistill/errors.hpp"

namespace pdistill::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument(fmt::format("{}: cannot parse '{}' as a number", key, text));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw InvalidArgument(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(std::uint64_t v) { return std::to_string(v); }

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

// Each accessor is a generic lambda returning a reference into the config,
// so one expression serves both the getter and the setter.
template <typename Access>
Field size_field(Access a) {
  return {[a](const ExperimentConfig& c) { return show(static_cast<std::uint64_t>(a(c))); },
          [a](ExperimentConfig& c, std::string_view k, std::string_view v) { a(c) = parse_number<std::size_t>(k, v); }};
}

template <typename Access>
Field real_field(Access a) {
  return {[a](const ExperimentConfig& c) { return show(a(c)); },
          [a](ExperimentConfig& c, std::string_view k, std::string_view v) { a(c) = parse_number<double>(k, v); }};
}

template <typename Access>
Field flag_field(Access a) {
  return {[a](const ExperimentConfig& c) { return show(a(c)); },
          [a](ExperimentConfig& c, std::string_view k, std::string_view v) { a(c) = parse_bool(k, v); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](const ExperimentConfig& c) { return show(c.train.seed); },
                [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                  c.train.seed = parse_number<std::uint64_t>(k, v);
                }}},
      {"folds", size_field([](auto& c) -> auto& { return c.folds; })},
      {"output.dir", Field{[](const ExperimentConfig& c) { return c.output_dir.generic_string(); },
                           [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                             if (v.empty()) throw InvalidArgument(std::string(k) + ": empty path");
                             c.output_dir = std::string(v);
                           }}},
      {"data.n_per_task", size_field([](auto& c) -> auto& { return c.data.n_per_task; })},
      {"data.input_dim", size_field([](auto& c) -> auto& { return c.data.input_dim; })},
      {"data.difficulty", real_field([](auto& c) -> auto& { return c.data.difficulty; })},
      {"data.sns_rate", real_field([](auto& c) -> auto& { return c.train.sns_rate; })},
      {"train.optimizer", Field{[](const ExperimentConfig& c) { return std::string(optimizer_name(c.train.optimizer)); },
                                [](ExperimentConfig& c, std::string_view, std::string_view v) {
                                  c.train.optimizer = parse_optimizer(v);
                                }}},
      {"train.lr0", real_field([](auto& c) -> auto& { return c.train.lr0; })},
      {"train.batch_size", size_field([](auto& c) -> auto& { return c.train.batch_size; })},
      {"train.steps.cold_start", size_field([](auto& c) -> auto& { return c.train.steps.cold_start; })},
      {"train.steps.pyramid", size_field([](auto& c) -> auto& { return c.train.steps.pyramid; })},
      {"train.steps.tcrd", size_field([](auto& c) -> auto& { return c.train.steps.tcrd; })},
      {"train.clip_norm", real_field([](auto& c) -> auto& { return c.train.clip_norm; })},
      {"train.checkpoint_every", size_field([](auto& c) -> auto& { return c.train.checkpoint_every; })},
      {"train.freeze_large", flag_field([](auto& c) -> auto& { return c.train.freeze_large; })},
      {"train.tcrd_with_ce", flag_field([](auto& c) -> auto& { return c.train.tcrd_with_ce; })},
      {"train.tcrd_update_medium", flag_field([](auto& c) -> auto& { return c.train.tcrd_update_medium; })},
      {"distill.enabled", flag_field([](auto& c) -> auto& { return c.train.distill.enabled; })},
      {"distill.tau", real_field([](auto& c) -> auto& { return c.train.distill.tau; })},
      {"distill.alpha", real_field([](auto& c) -> auto& { return c.train.distill.alpha; })},
      {"distill.beta", real_field([](auto& c) -> auto& { return c.train.distill.beta; })},
      {"distill.gamma", real_field([](auto& c) -> auto& { return c.train.distill.gamma; })},
      {"msei.rounds", size_field([](auto& c) -> auto& { return c.msei_rounds; })},
  };
  return table;
}

const Field& lookup(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw InvalidArgument(fmt::format("unknown config key '{}'", key));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.n_per_task < 10) throw InvalidArgument("data.n_per_task must be >= 10");
  if (data.input_dim < 4) throw InvalidArgument("data.input_dim must be >= 4");
  if (!(data.difficulty > 0.0 && data.difficulty <= 1.0)) throw InvalidArgument("data.difficulty must lie in (0, 1]");
  if (folds < 2) throw InvalidArgument("folds must be >= 2");
  if (msei_rounds < 2) throw InvalidArgument("msei.rounds must be >= 2");
  if (output_dir.empty()) throw InvalidArgument("output.dir must not be empty");
  train.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) { return lookup(key).get(cfg); }

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  lookup(key).set(cfg, key, value);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) {
      throw InvalidArgument(fmt::format("config line {}: key '{}' given twice", line_no, key));
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(fmt::format("config line {}: {}", line_no, e.what()));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, f] : fields()) out += fmt::format("{} = {}\n", name, f.get(cfg));
  return out;
}

}  // namespace pdistill::cli
