// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices, a flat parameter store, and a reverse-mode tape
// over matrix-valued nodes. Everything is 64-bit.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pdistill {

using RealVector = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix row(std::span<const double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row_span(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row_span(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Temperature softmax, sum-to-one, via max subtraction.
RealVector softmax(std::span<const double> z, double tau = 1.0);

/// log(softmax(z / tau)) computed with log-sum-exp, never forming softmax.
RealVector log_softmax(std::span<const double> z, double tau = 1.0);

/// Flat parameter vector with a same-shape gradient buffer, split into named
/// row-major blocks.
class Parameters {
 public:
  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t size() const { return rows * cols; }
  };

  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return values_.size(); }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(std::size_t id) const { return blocks_.at(id); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  std::span<double> block_values(std::size_t id);
  std::span<const double> block_values(std::size_t id) const;

  void zero_grad();

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Block> blocks_;
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id;
};

/// Records matrix operations in forward order and differentiates a scalar
/// output in one reverse sweep. A tape is single-use: a second backward()
/// throws StateError; build a new tape for the next step.
class Tape {
 public:
  explicit Tape(Parameters* params = nullptr) : params_(params) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  /// Leaf bound to a parameter block; its gradient lands in the Parameters.
  Var param(std::size_t block_id);
  /// Free leaf; its gradient is readable through grad() after backward.
  Var leaf(Matrix value);

  Var matmul(Var a, Var b);
  /// x (B x m) + bias (1 x m) broadcast over rows.
  Var add_row(Var x, Var bias);
  Var tanh(Var x);
  Var scale(Var x, double factor);
  Var add(Var a, Var b);
  /// x + c for a constant matrix c of the same shape.
  Var add_const(Var x, const Matrix& c);
  /// Row-wise log(softmax(x / tau)).
  Var log_softmax(Var x, double tau);
  /// out[i] = x[i, idx[i]], shape B x 1.
  Var pick(Var x, std::span<const std::size_t> idx);
  /// out[i] = sum_j w[i, j] * x[i, j] for a constant w, shape B x 1.
  Var row_dot(Var x, const Matrix& w);
  /// Mean of all entries, shape 1 x 1.
  Var mean(Var x);
  /// Sum of squared entries, shape 1 x 1.
  Var sum_squares(Var x);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;

  /// Reverse sweep from a 1 x 1 node. Overwrites (never accumulates) the
  /// bound Parameters' gradient buffer.
  void backward(Var loss);

  /// Gradient of the last backward's loss with respect to any node.
  const Matrix& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool differentiated() const { return differentiated_; }

 private:
  enum class Op {
    Constant, Param, Leaf, MatMul, AddRow, Tanh, Scale, Add, AddConst,
    LogSoftmax, Pick, RowDot, Mean, SumSquares
  };

  struct Node {
    Op op;
    Matrix value{};
    std::size_t a = 0;
    std::size_t b = 0;
    double factor = 0.0;
    std::size_t block = 0;
    std::vector<std::size_t> indices{};
    Matrix aux{};
  };

  Var push(Node node);
  const Node& node(Var v) const;

  Parameters* params_;
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  bool differentiated_ = false;
};

/// A loss with its analytic gradient. Must fill `grad` (same size as `p`)
/// whenever `grad` is non-empty.
using GradientFn = std::function<double(std::span<const double> p, std::span<double> grad)>;

/// Max over parameters of |analytic - numeric| / max(1, |numeric|) using
/// central differences with step eps. eps must lie in [1e-8, 1e-3].
double fd_check(const GradientFn& fn, std::span<const double> params, double eps);

}  // namespace pdistill
