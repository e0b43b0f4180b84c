// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/optim.hpp"

#include <cmath>
#include <string>

#include "pdistill/errors.hpp"

namespace pdistill {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adam") return OptimizerKind::Adam;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

std::unique_ptr<Optimizer> Optimizer::make(OptimizerKind kind, std::size_t size) {
  if (kind == OptimizerKind::SGD) return std::make_unique<Sgd>();
  return std::make_unique<Adam>(size);
}

void Sgd::step(Parameters& params, double lr) {
  auto p = params.values();
  auto g = params.grads();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

void Adam::step(Parameters& params, double lr) {
  auto p = params.values();
  auto g = params.grads();
  if (p.size() != m_.size()) throw InvalidArgument("optimizer state does not match parameter count");
  ++step_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g[i] * g[i];
    p[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

double clip_grad_norm(Parameters& params, double max_norm) {
  auto g = params.grads();
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (double& v : g) v *= factor;
  }
  return norm;
}

}  // namespace pdistill
