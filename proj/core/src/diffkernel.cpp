// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "pdistill/diffkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdistill/errors.hpp"

namespace pdistill {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("temperature must be a positive finite number");
  }
}

// Writes log(softmax(z / tau)) into out and, when probs is non-empty, the
// matching probabilities.
void log_softmax_into(std::span<const double> z, double tau, std::span<double> out,
                      std::span<double> probs) {
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double v : z) max_scaled = std::max(max_scaled, v / tau);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v / tau - max_scaled);
  const double log_norm = max_scaled + std::log(sum);
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = z[i] / tau - log_norm;
    if (!probs.empty()) probs[i] = std::exp(out[i]);
  }
}

}  // namespace

Matrix Matrix::row(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data.begin());
  return m;
}

RealVector softmax(std::span<const double> z, double tau) {
  check_tau(tau);
  if (z.empty()) throw InvalidArgument("softmax of an empty vector");
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double v : z) max_scaled = std::max(max_scaled, v / tau);
  RealVector out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] / tau - max_scaled);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

RealVector log_softmax(std::span<const double> z, double tau) {
  check_tau(tau);
  if (z.empty()) throw InvalidArgument("log_softmax of an empty vector");
  RealVector out(z.size());
  log_softmax_into(z, tau, out, {});
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

std::size_t Parameters::add_block(std::string name, std::size_t rows, std::size_t cols) {
  const std::size_t offset = values_.size();
  blocks_.push_back(Block{std::move(name), offset, rows, cols});
  values_.resize(offset + rows * cols, 0.0);
  grads_.resize(offset + rows * cols, 0.0);
  return blocks_.size() - 1;
}

std::span<double> Parameters::block_values(std::size_t id) {
  const Block& b = blocks_.at(id);
  return {values_.data() + b.offset, b.size()};
}

std::span<const double> Parameters::block_values(std::size_t id) const {
  const Block& b = blocks_.at(id);
  return {values_.data() + b.offset, b.size()};
}

void Parameters::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Tape: forward

Var Tape::push(Node n) {
  if (differentiated_) throw StateError("tape already differentiated; record a new tape");
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::constant(Matrix value) { return push(Node{.op = Op::Constant, .value = std::move(value)}); }

Var Tape::leaf(Matrix value) { return push(Node{.op = Op::Leaf, .value = std::move(value)}); }

Var Tape::param(std::size_t block_id) {
  if (params_ == nullptr) throw StateError("tape has no bound parameters");
  const auto& b = params_->block(block_id);
  Matrix m(b.rows, b.cols);
  const auto src = params_->block_values(block_id);
  std::copy(src.begin(), src.end(), m.data.begin());
  return push(Node{.op = Op::Param, .value = std::move(m), .block = block_id});
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& x = node(a).value;
  const Matrix& w = node(b).value;
  if (x.cols != w.rows) throw InvalidArgument("matmul shape mismatch");
  Matrix out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* o = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      const double* wr = w.data.data() + k * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) o[j] += xik * wr[j];
    }
  }
  return push(Node{.op = Op::MatMul, .value = std::move(out), .a = a.id, .b = b.id});
}

Var Tape::add_row(Var x, Var bias) {
  const Matrix& xv = node(x).value;
  const Matrix& bv = node(bias).value;
  if (bv.rows != 1 || bv.cols != xv.cols) throw InvalidArgument("add_row shape mismatch");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bv.data[j];
  return push(Node{.op = Op::AddRow, .value = std::move(out), .a = x.id, .b = bias.id});
}

Var Tape::tanh(Var x) {
  Matrix out = node(x).value;
  for (double& v : out.data) v = std::tanh(v);
  return push(Node{.op = Op::Tanh, .value = std::move(out), .a = x.id});
}

Var Tape::scale(Var x, double factor) {
  Matrix out = node(x).value;
  for (double& v : out.data) v *= factor;
  return push(Node{.op = Op::Scale, .value = std::move(out), .a = x.id, .factor = factor});
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.rows != bv.rows || av.cols != bv.cols) throw InvalidArgument("add shape mismatch");
  Matrix out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  return push(Node{.op = Op::Add, .value = std::move(out), .a = a.id, .b = b.id});
}

Var Tape::add_const(Var x, const Matrix& c) {
  const Matrix& xv = node(x).value;
  if (xv.rows != c.rows || xv.cols != c.cols) throw InvalidArgument("add_const shape mismatch");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
  return push(Node{.op = Op::AddConst, .value = std::move(out), .a = x.id});
}

Var Tape::log_softmax(Var x, double tau) {
  check_tau(tau);
  const Matrix& xv = node(x).value;
  if (xv.cols == 0) throw InvalidArgument("log_softmax of an empty row");
  Matrix out(xv.rows, xv.cols);
  Matrix probs(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    log_softmax_into(xv.row_span(i), tau, out.row_span(i), probs.row_span(i));
  }
  return push(Node{.op = Op::LogSoftmax, .value = std::move(out), .a = x.id, .factor = tau,
                   .aux = std::move(probs)});
}

Var Tape::pick(Var x, std::span<const std::size_t> idx) {
  const Matrix& xv = node(x).value;
  if (idx.size() != xv.rows) throw InvalidArgument("pick needs one index per row");
  Matrix out(xv.rows, 1);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    if (idx[i] >= xv.cols) throw InvalidArgument("pick index out of range");
    out(i, 0) = xv(i, idx[i]);
  }
  return push(Node{.op = Op::Pick, .value = std::move(out), .a = x.id,
                   .indices = std::vector<std::size_t>(idx.begin(), idx.end())});
}

Var Tape::row_dot(Var x, const Matrix& w) {
  const Matrix& xv = node(x).value;
  if (xv.rows != w.rows || xv.cols != w.cols) throw InvalidArgument("row_dot shape mismatch");
  Matrix out(xv.rows, 1);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < xv.cols; ++j) s += w(i, j) * xv(i, j);
    out(i, 0) = s;
  }
  return push(Node{.op = Op::RowDot, .value = std::move(out), .a = x.id, .aux = w});
}

Var Tape::mean(Var x) {
  const Matrix& xv = node(x).value;
  if (xv.data.empty()) throw InvalidArgument("mean of an empty matrix");
  double s = 0.0;
  for (double v : xv.data) s += v;
  Matrix out(1, 1, s / static_cast<double>(xv.data.size()));
  return push(Node{.op = Op::Mean, .value = std::move(out), .a = x.id});
}

Var Tape::sum_squares(Var x) {
  double s = 0.0;
  for (double v : node(x).value.data) s += v * v;
  return push(Node{.op = Op::SumSquares, .value = Matrix(1, 1, s), .a = x.id});
}

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  if (m.rows != 1 || m.cols != 1) throw InvalidArgument("node is not a scalar");
  return m.data[0];
}

// ---------------------------------------------------------------------------
// Tape: reverse sweep

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward called before any forward computation");
  if (differentiated_) throw StateError("backward already ran on this tape");
  const Matrix& lv = node(loss).value;
  if (lv.rows != 1 || lv.cols != 1) throw InvalidArgument("backward needs a scalar loss");

  // Nodes that do not depend on a leaf or parameter need no gradient.
  std::vector<char> needs(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::Constant: break;
      case Op::Param:
      case Op::Leaf: needs[i] = 1; break;
      case Op::MatMul:
      case Op::AddRow:
      case Op::Add: needs[i] = needs[n.a] || needs[n.b]; break;
      default: needs[i] = needs[n.a]; break;
    }
  }

  grads_.assign(nodes_.size(), Matrix{});
  auto grad_of = [&](std::size_t id) -> Matrix& {
    Matrix& g = grads_[id];
    if (g.data.empty()) g = Matrix(nodes_[id].value.rows, nodes_[id].value.cols);
    return g;
  };
  grad_of(loss.id).data[0] = 1.0;

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!needs[id] || grads_[id].data.empty()) continue;
    const Node& n = nodes_[id];
    const Matrix& g = grads_[id];
    switch (n.op) {
      case Op::Constant:
      case Op::Param:
      case Op::Leaf: break;
      case Op::MatMul: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& w = nodes_[n.b].value;
        if (needs[n.a]) {
          Matrix& gx = grad_of(n.a);
          for (std::size_t i = 0; i < x.rows; ++i) {
            const double* gr = g.data.data() + i * g.cols;
            for (std::size_t k = 0; k < x.cols; ++k) {
              const double* wr = w.data.data() + k * w.cols;
              double s = 0.0;
              for (std::size_t j = 0; j < w.cols; ++j) s += gr[j] * wr[j];
              gx(i, k) += s;
            }
          }
        }
        if (needs[n.b]) {
          Matrix& gw = grad_of(n.b);
          for (std::size_t i = 0; i < x.rows; ++i) {
            const double* gr = g.data.data() + i * g.cols;
            for (std::size_t k = 0; k < x.cols; ++k) {
              const double xik = x(i, k);
              double* gwr = gw.data.data() + k * gw.cols;
              for (std::size_t j = 0; j < w.cols; ++j) gwr[j] += xik * gr[j];
            }
          }
        }
        break;
      }
      case Op::AddRow: {
        if (needs[n.a]) {
          Matrix& gx = grad_of(n.a);
          for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        }
        if (needs[n.b]) {
          Matrix& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j) gb.data[j] += g(i, j);
        }
        break;
      }
      case Op::Tanh: {
        Matrix& gx = grad_of(n.a);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.value.data[i];
          gx.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Scale: {
        Matrix& gx = grad_of(n.a);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += n.factor * g.data[i];
        break;
      }
      case Op::Add: {
        if (needs[n.a]) {
          Matrix& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (needs[n.b]) {
          Matrix& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::AddConst: {
        Matrix& gx = grad_of(n.a);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        break;
      }
      case Op::LogSoftmax: {
        Matrix& gx = grad_of(n.a);
        const Matrix& p = n.aux;
        for (std::size_t i = 0; i < g.rows; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < g.cols; ++j) gsum += g(i, j);
          for (std::size_t j = 0; j < g.cols; ++j) gx(i, j) += (g(i, j) - p(i, j) * gsum) / n.factor;
        }
        break;
      }
      case Op::Pick: {
        Matrix& gx = grad_of(n.a);
        for (std::size_t i = 0; i < g.rows; ++i) gx(i, n.indices[i]) += g(i, 0);
        break;
      }
      case Op::RowDot: {
        Matrix& gx = grad_of(n.a);
        for (std::size_t i = 0; i < gx.rows; ++i)
          for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += g(i, 0) * n.aux(i, j);
        break;
      }
      case Op::Mean: {
        Matrix& gx = grad_of(n.a);
        const double share = g.data[0] / static_cast<double>(gx.data.size());
        for (double& v : gx.data) v += share;
        break;
      }
      case Op::SumSquares: {
        Matrix& gx = grad_of(n.a);
        const Matrix& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] += 2.0 * x.data[i] * g.data[0];
        break;
      }
    }
  }

  if (params_ != nullptr) {
    params_->zero_grad();
    auto out = params_->grads();
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id].op != Op::Param || grads_[id].data.empty()) continue;
      const auto& b = params_->block(nodes_[id].block);
      for (std::size_t i = 0; i < b.size(); ++i) out[b.offset + i] += grads_[id].data[i];
    }
  }
  // Nodes that did not influence the loss report zeros of their shape.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (grads_[id].data.empty()) grads_[id] = Matrix(nodes_[id].value.rows, nodes_[id].value.cols);
  }
  differentiated_ = true;
}

const Matrix& Tape::grad(Var v) const {
  if (!differentiated_) throw StateError("gradient requested before backward");
  node(v);
  return grads_[v.id];
}

// ---------------------------------------------------------------------------

double fd_check(const GradientFn& fn, std::span<const double> params, double eps) {
  if (!(eps >= 1e-8 && eps <= 1e-3)) throw InvalidArgument("fd_check eps must lie in [1e-8, 1e-3]");
  if (params.empty()) return 0.0;
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> analytic(p.size());
  fn(p, analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double up = fn(p, {});
    p[i] = saved - eps;
    const double down = fn(p, {});
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace pdistill
