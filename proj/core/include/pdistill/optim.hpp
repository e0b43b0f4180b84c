// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "pdistill/diffkernel.hpp"

namespace pdistill {

enum class OptimizerKind { SGD, Adam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Applies one update from the gradient buffer of a Parameters.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(Parameters& params, double lr) = 0;

  static std::unique_ptr<Optimizer> make(OptimizerKind kind, std::size_t size);
};

/// p -= lr * g
class Sgd final : public Optimizer {
 public:
  void step(Parameters& params, double lr) override;
};

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
class Adam final : public Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}
  void step(Parameters& params, double lr) override;

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  long step_ = 0;
};

/// Rescales the gradient so its global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(Parameters& params, double max_norm);

}  // namespace pdistill
