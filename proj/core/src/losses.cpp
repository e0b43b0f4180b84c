// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/losses.hpp"

#include <cmath>

#include "pdistill/errors.hpp"

namespace pdistill {

void DistillConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("distill.tau must be positive");
  if (!(alpha >= 0.0)) throw InvalidArgument("distill.alpha must be non-negative");
  if (!(beta >= 0.0)) throw InvalidArgument("distill.beta must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("distill.gamma must lie in [0, 1]");
}

void LossBreakdown::add(std::string name, double value, double weight) {
  components.push_back({std::move(name), value, weight});
  total = weighted_sum();
}

double LossBreakdown::weighted_sum() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight * c.value;
  return s;
}

double LossBreakdown::at(const std::string& name) const {
  for (const auto& c : components) {
    if (c.name == name) return c.value;
  }
  throw InvalidArgument("no loss component named '" + name + "'");
}

// ---------------------------------------------------------------------------

Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  Var log_probs = tape.log_softmax(logits, 1.0);
  return tape.scale(tape.mean(tape.pick(log_probs, labels)), -1.0);
}

Var kd_loss(Tape& tape, const Matrix& teacher_logits, Var student_logits, double tau) {
  const Matrix& student = tape.value(student_logits);
  if (teacher_logits.rows != student.rows || teacher_logits.cols != student.cols) {
    throw InvalidArgument("teacher and student logits differ in shape");
  }
  Matrix teacher_log_probs(student.rows, student.cols);
  Matrix teacher_probs(student.rows, student.cols);
  for (std::size_t i = 0; i < student.rows; ++i) {
    const RealVector lp = log_softmax(teacher_logits.row_span(i), tau);
    for (std::size_t j = 0; j < lp.size(); ++j) {
      teacher_log_probs(i, j) = lp[j];
      teacher_probs(i, j) = std::exp(lp[j]);
    }
  }
  // KL(p_t || p_s) = sum_j p_t[j] * (log p_t[j] - log p_s[j])
  Var log_gap = tape.add_const(tape.scale(tape.log_softmax(student_logits, tau), -1.0), teacher_log_probs);
  Var per_row = tape.row_dot(log_gap, teacher_probs);
  return tape.scale(tape.mean(per_row), tau * tau);
}

TernaryTerms ternary_loss_terms(Tape& tape, const Matrix& large_logits, const Matrix& medium_logits,
                                Var small_logits, double gamma, double tau) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
  Var from_large = kd_loss(tape, large_logits, small_logits, tau);
  Var from_medium = kd_loss(tape, medium_logits, small_logits, tau);
  Var total = tape.add(tape.scale(from_large, gamma), tape.scale(from_medium, 1.0 - gamma));
  return {from_large, from_medium, total};
}

Var ternary_loss(Tape& tape, const Matrix& large_logits, const Matrix& medium_logits,
                 Var small_logits, double gamma, double tau) {
  return ternary_loss_terms(tape, large_logits, medium_logits, small_logits, gamma, tau).total;
}

// ---------------------------------------------------------------------------

namespace {

void check_label(std::span<const double> z, std::size_t y) {
  if (z.empty()) throw InvalidArgument("empty logits");
  if (y >= z.size()) throw InvalidArgument("class index out of range");
}

void check_same_dims(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("logit dimensions differ");
  if (a.empty()) throw InvalidArgument("empty logits");
}

}  // namespace

double cross_entropy(std::span<const double> z, std::size_t y) {
  check_label(z, y);
  Tape tape;
  const std::size_t labels[] = {y};
  return tape.scalar(cross_entropy(tape, tape.leaf(Matrix::row(z)), labels));
}

double kd_loss(std::span<const double> teacher, std::span<const double> student, double tau) {
  check_same_dims(teacher, student);
  Tape tape;
  return tape.scalar(kd_loss(tape, Matrix::row(teacher), tape.leaf(Matrix::row(student)), tau));
}

RealVector cross_entropy_grad(std::span<const double> z, std::size_t y) {
  check_label(z, y);
  Tape tape;
  const std::size_t labels[] = {y};
  Var logits = tape.leaf(Matrix::row(z));
  tape.backward(cross_entropy(tape, logits, labels));
  return tape.grad(logits).data;
}

RealVector kd_loss_grad(std::span<const double> teacher, std::span<const double> student, double tau) {
  check_same_dims(teacher, student);
  Tape tape;
  Var logits = tape.leaf(Matrix::row(student));
  tape.backward(kd_loss(tape, Matrix::row(teacher), logits, tau));
  return tape.grad(logits).data;
}

std::vector<double> mutual_loss(std::span<const RealVector> cohort, std::size_t y, double beta,
                                double tau) {
  if (cohort.size() < 2) throw InvalidArgument("mutual learning needs at least two students");
  for (const auto& z : cohort) check_same_dims(cohort.front(), z);
  check_label(cohort.front(), y);
  std::vector<double> losses;
  losses.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    double peer_sum = 0.0;
    for (std::size_t j = 0; j < cohort.size(); ++j) {
      if (j != i) peer_sum += kd_loss(cohort[j], cohort[i], tau);
    }
    losses.push_back(cross_entropy(cohort[i], y) + beta * peer_sum);
  }
  return losses;
}

LossBreakdown pyramid_loss(std::span<const double> z_large, std::span<const double> z_medium,
                           std::span<const double> z_small, std::size_t y, const DistillConfig& cfg,
                           bool include_large_ce) {
  check_same_dims(z_large, z_medium);
  check_same_dims(z_medium, z_small);
  check_label(z_large, y);
  cfg.validate();
  LossBreakdown out;
  out.add("ce_L", cross_entropy(z_large, y), include_large_ce ? 1.0 : 0.0);
  out.add("ce_M", cross_entropy(z_medium, y), 1.0);
  out.add("kd_LM", kd_loss(z_large, z_medium, cfg.tau), cfg.enabled ? cfg.alpha : 0.0);
  out.add("ce_S", cross_entropy(z_small, y), 1.0);
  out.add("kd_MS", kd_loss(z_medium, z_small, cfg.tau), cfg.enabled ? cfg.beta : 0.0);
  return out;
}

double ternary_loss(std::span<const double> z_large, std::span<const double> z_medium,
                    std::span<const double> z_small, double gamma, double tau) {
  check_same_dims(z_large, z_small);
  check_same_dims(z_medium, z_small);
  Tape tape;
  return tape.scalar(ternary_loss(tape, Matrix::row(z_large), Matrix::row(z_medium),
                                  tape.leaf(Matrix::row(z_small)), gamma, tau));
}

}  // namespace pdistill
