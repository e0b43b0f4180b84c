// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Each loss has a tape form over batched logits (one
// sample per row, averaged over rows) and a single-sample value form. Teacher
// and peer logits always enter as constants: no gradient reaches them.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pdistill/diffkernel.hpp"

namespace pdistill {

struct DistillConfig {
  double tau = 2.0;
  /// Weight of kd(large -> medium) in the first pyramid sub-stage.
  double alpha = 1.0;
  /// Weight of kd(medium -> small) in the second pyramid sub-stage, and the
  /// peer weight of mutual learning.
  double beta = 1.0;
  /// Share of kd(large -> small) in the ternary refinement loss.
  double gamma = 0.10;
  /// When false every distillation term is dropped and the stages reduce
  /// to supervised training.
  bool enabled = true;

  /// Throws InvalidArgument unless tau > 0, alpha, beta >= 0, gamma in [0, 1].
  void validate() const;
  bool operator==(const DistillConfig&) const = default;
};

/// Named loss components and the weights that combine them into `total`.
struct LossBreakdown {
  struct Component {
    std::string name;
    double value;
    double weight;
  };

  double total = 0.0;
  std::vector<Component> components;

  void add(std::string name, double value, double weight);
  /// Sum of weight * value; `total` matches it by construction.
  double weighted_sum() const;
  /// Value of a named component; throws InvalidArgument if absent.
  double at(const std::string& name) const;
};

// --- tape forms ------------------------------------------------------------

/// Mean over rows of -log softmax(z)[y].
Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels);

/// Mean over rows of tau^2 * KL(softmax(t / tau) || softmax(s / tau)). The
/// teacher distribution is the first KL argument.
Var kd_loss(Tape& tape, const Matrix& teacher_logits, Var student_logits, double tau);

/// gamma * kd(large, small) + (1 - gamma) * kd(medium, small).
struct TernaryTerms {
  Var from_large;
  Var from_medium;
  Var total;
};
TernaryTerms ternary_loss_terms(Tape& tape, const Matrix& large_logits, const Matrix& medium_logits,
                                Var small_logits, double gamma, double tau);
Var ternary_loss(Tape& tape, const Matrix& large_logits, const Matrix& medium_logits,
                 Var small_logits, double gamma, double tau);

// --- single-sample forms ---------------------------------------------------

double cross_entropy(std::span<const double> z, std::size_t y);
double kd_loss(std::span<const double> teacher, std::span<const double> student, double tau);

/// d cross_entropy / d z, by reverse sweep.
RealVector cross_entropy_grad(std::span<const double> z, std::size_t y);
/// d kd_loss / d student, by reverse sweep.
RealVector kd_loss_grad(std::span<const double> teacher, std::span<const double> student, double tau);

/// Online mutual learning over a cohort: for each student i,
/// CE(y, z_i) + beta * sum_{j != i} kd(z_j, z_i).
std::vector<double> mutual_loss(std::span<const RealVector> cohort, std::size_t y, double beta,
                                double tau);

/// Pyramid objective: [CE_M + alpha kd(L, M)] + [CE_S + beta kd(M, S)], plus
/// CE_L when include_large_ce so the large model keeps training. Components:
/// ce_L, ce_M, ce_S, kd_LM, kd_MS.
LossBreakdown pyramid_loss(std::span<const double> z_large, std::span<const double> z_medium,
                           std::span<const double> z_small, std::size_t y, const DistillConfig& cfg,
                           bool include_large_ce = true);

double ternary_loss(std::span<const double> z_large, std::span<const double> z_medium,
                    std::span<const double> z_small, double gamma, double tau);

}  // namespace pdistill
