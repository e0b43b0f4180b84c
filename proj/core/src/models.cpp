// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "pdistill/errors.hpp"
#include "pdistill/rng.hpp"

namespace pdistill {

std::string_view task_name(TaskId task) { return task == TaskId::MHD ? "MHD" : "MFC"; }

TaskId parse_task(std::string_view name) {
  if (name == "MHD") return TaskId::MHD;
  if (name == "MFC") return TaskId::MFC;
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

std::string_view tier_name(Tier tier) {
  switch (tier) {
    case Tier::Large: return "large";
    case Tier::Medium: return "medium";
    case Tier::Small: return "small";
  }
  return "small";
}

Tier parse_tier(std::string_view name) {
  if (name == "large") return Tier::Large;
  if (name == "medium") return Tier::Medium;
  if (name == "small") return Tier::Small;
  throw InvalidArgument("unknown tier '" + std::string(name) + "'");
}

CapacityTier CapacityTier::defaults(Tier tier) {
  switch (tier) {
    case Tier::Large: return {Tier::Large, {256, 128}};
    case Tier::Medium: return {Tier::Medium, {128, 64}};
    case Tier::Small: return {Tier::Small, {64, 32}};
  }
  return {};
}

bool strictly_dominates(const CapacityTier& big, const CapacityTier& small) {
  if (big.widths.size() != small.widths.size()) return false;
  for (std::size_t i = 0; i < big.widths.size(); ++i) {
    if (big.widths[i] <= small.widths[i]) return false;
  }
  return true;
}

ToyModel ToyModel::init(const CapacityTier& tier, std::size_t input_dim, std::uint64_t seed) {
  if (input_dim == 0) throw InvalidArgument("model input dimension must be at least 1");
  if (tier.widths.empty()) throw InvalidArgument("model needs at least one hidden layer");
  for (std::size_t w : tier.widths) {
    if (w == 0) throw InvalidArgument("hidden widths must be positive");
  }

  ToyModel m;
  m.tier_ = tier;
  m.input_dim_ = input_dim;
  m.seed_ = seed;

  std::size_t fan_in = input_dim;
  for (std::size_t i = 0; i < tier.widths.size(); ++i) {
    const std::string idx = std::to_string(i);
    Layer layer{m.params_.add_block("trunk" + idx + ".weight", fan_in, tier.widths[i]),
                m.params_.add_block("trunk" + idx + ".bias", 1, tier.widths[i])};
    m.trunk_.push_back(layer);
    fan_in = tier.widths[i];
  }
  m.mhd_head_ = {m.params_.add_block("mhd.weight", fan_in, num_classes(TaskId::MHD)),
                 m.params_.add_block("mhd.bias", 1, num_classes(TaskId::MHD))};
  m.mfc_head_ = {m.params_.add_block("mfc.weight", fan_in, num_classes(TaskId::MFC)),
                 m.params_.add_block("mfc.bias", 1, num_classes(TaskId::MFC))};

  Rng rng(derive_seed(seed, "init"));
  for (const auto& block : m.params_.blocks()) {
    if (block.rows == 1) continue;  // bias
    const double limit = std::sqrt(6.0 / static_cast<double>(block.rows + block.cols));
    auto values = m.params_.values().subspan(block.offset, block.size());
    for (double& v : values) v = rng.uniform(-limit, limit);
  }
  return m;
}

RealVector ToyModel::forward(std::span<const double> features, TaskId task) const {
  Matrix logits = forward_batch(Matrix::row(features), task);
  return std::move(logits.data);
}

Matrix ToyModel::forward_batch(const Matrix& features, TaskId task) const {
  if (features.cols != input_dim_) throw InvalidArgument("feature dimension does not match model input");
  auto dense = [&](const Matrix& x, const Layer& layer, bool activate) {
    const auto& wb = params_.block(layer.weight);
    const auto w = params_.block_values(layer.weight);
    const auto b = params_.block_values(layer.bias);
    Matrix out(x.rows, wb.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
      double* o = out.data.data() + i * out.cols;
      for (std::size_t k = 0; k < x.cols; ++k) {
        const double xik = x(i, k);
        const double* wr = w.data() + k * wb.cols;
        for (std::size_t j = 0; j < wb.cols; ++j) o[j] += xik * wr[j];
      }
      for (std::size_t j = 0; j < wb.cols; ++j) {
        o[j] += b[j];
        if (activate) o[j] = std::tanh(o[j]);
      }
    }
    return out;
  };
  Matrix h = dense(features, trunk_[0], true);
  for (std::size_t i = 1; i < trunk_.size(); ++i) h = dense(h, trunk_[i], true);
  return dense(h, head(task), false);
}

Var ToyModel::forward(Tape& tape, const Matrix& features, TaskId task) const {
  if (features.cols != input_dim_) throw InvalidArgument("feature dimension does not match model input");
  Var h = tape.constant(features);
  for (const Layer& layer : trunk_) {
    h = tape.tanh(tape.add_row(tape.matmul(h, tape.param(layer.weight)), tape.param(layer.bias)));
  }
  const Layer& out = head(task);
  return tape.add_row(tape.matmul(h, tape.param(out.weight)), tape.param(out.bias));
}

bool ToyModel::operator==(const ToyModel& other) const {
  if (tier_.tier != other.tier_.tier || tier_.widths != other.tier_.widths) return false;
  if (input_dim_ != other.input_dim_ || seed_ != other.seed_) return false;
  const auto a = params_.values();
  const auto b = other.params_.values();
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(std::ostream& out, const ToyModel& model, std::string_view stage) {
  out << "pdistill-checkpoint " << kCheckpointVersion << '\n';
  out << "tier " << tier_name(model.tier().tier) << '\n';
  out << "input_dim " << model.input_dim() << '\n';
  out << "widths";
  for (std::size_t w : model.tier().widths) out << ' ' << w;
  out << '\n';
  out << "seed " << model.seed() << '\n';
  out << "stage " << stage << '\n';
  out << "params " << model.parameter_count() << '\n';
  char buf[64];
  for (double v : model.parameters().values()) {
    std::snprintf(buf, sizeof buf, "%a\n", v);
    out << buf;
  }
  if (!out) throw IoError("failed writing checkpoint");
}

namespace {

std::string expect_line(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("truncated checkpoint: missing " + std::string(key));
  if (line.rfind(std::string(key) + " ", 0) != 0 && line != key) {
    throw InvalidArgument("malformed checkpoint: expected '" + std::string(key) + "'");
  }
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw InvalidArgument("malformed checkpoint integer");
  return v;
}

}  // namespace

ToyModel read_checkpoint(std::istream& in, std::string* stage) {
  const std::string version = expect_line(in, "pdistill-checkpoint");
  if (parse_u64(version) != static_cast<std::uint64_t>(kCheckpointVersion)) {
    throw InvalidArgument("unsupported checkpoint version " + version);
  }
  CapacityTier tier;
  tier.tier = parse_tier(expect_line(in, "tier"));
  const std::size_t input_dim = parse_u64(expect_line(in, "input_dim"));
  std::istringstream widths(expect_line(in, "widths"));
  for (std::string w; widths >> w;) tier.widths.push_back(parse_u64(w));
  const std::uint64_t seed = parse_u64(expect_line(in, "seed"));
  std::string stage_name = expect_line(in, "stage");
  const std::size_t count = parse_u64(expect_line(in, "params"));

  ToyModel model = ToyModel::init(tier, input_dim, seed);
  if (model.parameter_count() != count) throw InvalidArgument("checkpoint parameter count mismatch");
  auto values = model.parameters().values();
  std::string line;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw InvalidArgument("truncated checkpoint parameters");
    char* end = nullptr;
    values[i] = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || *end != '\0') throw InvalidArgument("malformed checkpoint parameter");
  }
  if (stage != nullptr) *stage = std::move(stage_name);
  return model;
}

}  // namespace pdistill
