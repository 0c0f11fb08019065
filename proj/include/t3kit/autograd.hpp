// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace t3kit::ag {

/// Row-major so that one row is one token / one sample throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable (or frozen) tensor. Gradients accumulate across backward
/// passes until zero_grad() is called.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. One Graph per forward pass; parameters live outside
/// and receive their gradients when backward() runs.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var parameter(Parameter& p) { return push(p.value, p.trainable, &p); }

  /// Treat a parameter as a constant for this pass (frozen modules).
  Var frozen(const Parameter& p) { return push(p.value, false, nullptr); }

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  Matrix& grad(int id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Records an op. `backward` is only kept when some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, std::function<void(Graph&, int)> backward) {
    bool any = false;
    for (const Var& v : inputs) {
      if (v.graph() != this) throw std::invalid_argument("t3kit::ag: mixing vars from different graphs");
      any = any || nodes_[v.id()].needs_grad;
    }
    Var out = push(std::move(value), any, nullptr);
    if (any) nodes_[out.id()].backward = std::move(backward);
    return out;
  }

  Var record_many(Matrix value, const std::vector<Var>& inputs, std::function<void(Graph&, int)> backward) {
    bool any = false;
    for (const Var& v : inputs) {
      if (v.graph() != this) throw std::invalid_argument("t3kit::ag: mixing vars from different graphs");
      any = any || nodes_[v.id()].needs_grad;
    }
    Var out = push(std::move(value), any, nullptr);
    if (any) nodes_[out.id()].backward = std::move(backward);
    return out;
  }

  /// Backpropagates from a 1×1 node and accumulates into Parameter::grad.
  void backward(Var loss, double seed = 1.0) {
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward() needs a scalar");
    if (!nodes_[loss.id()].needs_grad) return;
    grad(loss.id())(0, 0) += seed;
    for (int id = loss.id(); id >= 0; --id) {
      auto& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Graph&, int)> backward;
  };

  Var push(Matrix value, bool needs_grad, Parameter* p) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, p, {}});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

namespace detail {
inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("t3kit::ag::") + op + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}
inline void accumulate(Graph& g, const Var& v, const Matrix& d) {
  if (g.needs_grad(v.id())) g.grad(v.id()) += d;
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("t3kit::ag::matmul: inner dimension mismatch");
  Graph& g = *a.graph();
  return g.record(a.value() * b.value(), {a, b}, [a, b](Graph& g, int self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) g.grad(a.id()).noalias() += d * b.value().transpose();
    if (g.needs_grad(b.id())) g.grad(b.id()).noalias() += a.value().transpose() * d;
  });
}

/// a · bᵀ
inline Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("t3kit::ag::matmul_nt: inner dimension mismatch");
  Graph& g = *a.graph();
  return g.record(a.value() * b.value().transpose(), {a, b}, [a, b](Graph& g, int self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) g.grad(a.id()).noalias() += d * b.value();
    if (g.needs_grad(b.id())) g.grad(b.id()).noalias() += d.transpose() * a.value();
  });
}

inline Var add(Var a, Var b) {
  detail::check_same_shape(a, b, "add");
  Graph& g = *a.graph();
  return g.record(a.value() + b.value(), {a, b}, [a, b](Graph& g, int self) {
    const Matrix d = g.grad(self);
    detail::accumulate(g, a, d);
    detail::accumulate(g, b, d);
  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_shape(a, b, "sub");
  Graph& g = *a.graph();
  return g.record(a.value() - b.value(), {a, b}, [a, b](Graph& g, int self) {
    const Matrix d = g.grad(self);
    detail::accumulate(g, a, d);
    detail::accumulate(g, b, -d);
  });
}

/// Broadcasts a 1×n row over every row of `a`.
inline Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("t3kit::ag::add_row: bias shape mismatch");
  Graph& g = *a.graph();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.record(std::move(out), {a, row}, [a, row](Graph& g, int self) {
    const Matrix d = g.grad(self);
    detail::accumulate(g, a, d);
    if (g.needs_grad(row.id())) g.grad(row.id()) += d.colwise().sum();
  });
}

/// Broadcasts an n×1 column over every column of `a`.
inline Var add_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("t3kit::ag::add_col: shape mismatch");
  Graph& g = *a.graph();
  Matrix out = a.value().colwise() + col.value().col(0);
  return g.record(std::move(out), {a, col}, [a, col](Graph& g, int self) {
    const Matrix d = g.grad(self);
    detail::accumulate(g, a, d);
    if (g.needs_grad(col.id())) g.grad(col.id()) += d.rowwise().sum();
  });
}

inline Var mul(Var a, Var b) {
  detail::check_same_shape(a, b, "mul");
  Graph& g = *a.graph();
  return g.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Graph& g, int self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(a.id())) g.grad(a.id()) += d.cwiseProduct(b.value());
    if (g.needs_grad(b.id())) g.grad(b.id()) += d.cwiseProduct(a.value());
  });
}

inline Var scale(Var a, double s) {
  Graph& g = *a.graph();
  return g.record(a.value() * s, {a}, [a, s](Graph& g, int self) { g.grad(a.id()) += g.grad(self) * s; });
}

inline Var relu(Var a) {
  Graph& g = *a.graph();
  return g.record(a.value().cwiseMax(0.0), {a}, [a](Graph& g, int self) {
    g.grad(a.id()) += (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g.grad(self));
  });
}

inline Var sigmoid(Var a) {
  Graph& g = *a.graph();
  Matrix y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return g.record(y, {a}, [a](Graph& g, int self) {
    const Matrix& y = g.value(self);
    g.grad(a.id()).array() += g.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

inline Var tanh(Var a) {
  Graph& g = *a.graph();
  Matrix y = a.value().array().tanh().matrix();
  return g.record(y, {a}, [a](Graph& g, int self) {
    const Matrix& y = g.value(self);
    g.grad(a.id()).array() += g.grad(self).array() * (1.0 - y.array().square());
  });
}

inline Var transpose(Var a) {
  Graph& g = *a.graph();
  return g.record(a.value().transpose(), {a}, [a](Graph& g, int self) { g.grad(a.id()) += g.grad(self).transpose(); });
}

inline Var sum(Var a) {
  Graph& g = *a.graph();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.record(std::move(out), {a}, [a](Graph& g, int self) { g.grad(a.id()).array() += g.grad(self)(0, 0); });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// Sum over columns: r×c → r×1.
inline Var row_sum(Var a) {
  Graph& g = *a.graph();
  Matrix out = a.value().rowwise().sum();
  return g.record(std::move(out), {a}, [a](Graph& g, int self) {
    g.grad(a.id()).colwise() += g.grad(self).col(0);
  });
}

/// Mean over rows: r×c → 1×c.
inline Var col_mean(Var a) {
  Graph& g = *a.graph();
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  return g.record(std::move(out), {a}, [a, n](Graph& g, int self) {
    g.grad(a.id()).rowwise() += g.grad(self).row(0) / n;
  });
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("t3kit::ag::slice_rows");
  Graph& g = *a.graph();
  return g.record(a.value().middleRows(start, count), {a}, [a, start, count](Graph& g, int self) {
    g.grad(a.id()).middleRows(start, count) += g.grad(self);
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("t3kit::ag::slice_cols");
  Graph& g = *a.graph();
  return g.record(a.value().middleCols(start, count), {a}, [a, start, count](Graph& g, int self) {
    g.grad(a.id()).middleCols(start, count) += g.grad(self);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("t3kit::ag::concat_rows: empty");
  Graph& g = *parts.front().graph();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("t3kit::ag::concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.record_many(std::move(out), parts, [parts](Graph& g, int self) {
    Eigen::Index r = 0;
    for (const Var& p : parts) {
      if (g.needs_grad(p.id())) g.grad(p.id()) += g.grad(self).middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("t3kit::ag::concat_cols: empty");
  Graph& g = *parts.front().graph();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("t3kit::ag::concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return g.record_many(std::move(out), parts, [parts](Graph& g, int self) {
    Eigen::Index c = 0;
    for (const Var& p : parts) {
      if (g.needs_grad(p.id())) g.grad(p.id()) += g.grad(self).middleCols(c, p.cols());
      c += p.cols();
    }
  });
}

/// Selects rows of `table` by index (embedding lookup).
inline Var gather_rows(Var table, const std::vector<int>& ids) {
  Graph& g = *table.graph();
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("t3kit::ag::gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return g.record(std::move(out), {table}, [table, ids](Graph& g, int self) {
    Matrix& gt = g.grad(table.id());
    const Matrix& d = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += d.row(static_cast<Eigen::Index>(i));
  });
}

/// Row-wise softmax. `key_mask`, when non-empty, has one entry per column;
/// false columns get exactly zero probability.
inline Var softmax_rows(Var a, const std::vector<bool>& key_mask = {}) {
  if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != a.cols())
    throw std::invalid_argument("t3kit::ag::softmax_rows: mask width mismatch");
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (key_mask.empty() || key_mask[c]) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) throw std::invalid_argument("t3kit::ag::softmax_rows: every key is masked");
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!key_mask.empty() && !key_mask[c]) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    y.row(r) /= z;
  }
  return g.record(y, {a}, [a](Graph& g, int self) {
    const Matrix& y = g.value(self);
    const Matrix& d = g.grad(self);
    const Eigen::VectorXd dot = d.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(d.colwise() - dot);
    g.grad(a.id()) += dx;
  });
}

/// Per-row layer normalization with learned gain/bias rows.
inline Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-6) {
  const Eigen::Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) throw std::invalid_argument("t3kit::ag::layer_norm_rows: width mismatch");
  Graph& g = *x.graph();
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return g.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Graph& g, int self) {
    const Matrix& d = g.grad(self);
    const double n = static_cast<double>(xhat.cols());
    if (g.needs_grad(gamma.id())) g.grad(gamma.id()) += d.cwiseProduct(xhat).colwise().sum();
    if (g.needs_grad(beta.id())) g.grad(beta.id()) += d.colwise().sum();
    if (g.needs_grad(x.id())) {
      Matrix dxhat = (d.array().rowwise() * gamma.value().row(0).array()).matrix();
      Matrix& gx = g.grad(x.id());
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const double m1 = dxhat.row(r).sum();
        const double m2 = dxhat.row(r).dot(xhat.row(r));
        gx.row(r).array() += inv_std(r) / n * (n * dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

/// Scales every row to unit Euclidean norm.
inline Var l2_normalize_rows(Var a, double eps = 1e-12) {
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(eps);
  Matrix y = x.array().colwise() / norms.array();
  return g.record(y, {a}, [a, norms](Graph& g, int self) {
    const Matrix& y = g.value(self);
    const Matrix& d = g.grad(self);
    const Eigen::VectorXd dot = d.cwiseProduct(y).rowwise().sum();
    Matrix dx = (d.array() - y.array().colwise() * dot.array()).matrix();
    dx.array().colwise() /= norms.array();
    g.grad(a.id()) += dx;
  });
}

/// Mean softmax cross-entropy over rows; targets hold one class per row.
inline Var cross_entropy(Var logits, const std::vector<int>& targets) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows())
    throw std::invalid_argument("t3kit::ag::cross_entropy: target count mismatch");
  Graph& g = *logits.graph();
  Matrix probs(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= x.cols()) throw std::out_of_range("t3kit::ag::cross_entropy: class id out of range");
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    probs.row(r) = (x.row(r).array() - lse).exp();
    loss += lse - x(r, t);
  }
  const double n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return g.record(std::move(out), {logits}, [logits, probs, targets, n](Graph& g, int self) {
    Matrix d = probs;
    for (std::size_t r = 0; r < targets.size(); ++r) d(static_cast<Eigen::Index>(r), targets[r]) -= 1.0;
    g.grad(logits.id()) += d * (g.grad(self)(0, 0) / n);
  });
}

/// Mean binary cross-entropy of sigmoid(logits) against `targets` (same shape,
/// entries in [0,1]), evaluated in the numerically stable logit form.
inline Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols())
    throw std::invalid_argument("t3kit::ag::bce_with_logits: target shape mismatch");
  Graph& g = *logits.graph();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = x.data()[i];
    const double y = targets.data()[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(x.size());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return g.record(std::move(out), {logits}, [logits, targets, n](Graph& g, int self) {
    Matrix s = logits.value().unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
    g.grad(logits.id()) += (s - targets) * (g.grad(self)(0, 0) / n);
  });
}

struct ConvGeometry {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace detail {
inline Matrix im2col(const Matrix& x, const ConvGeometry& geo) {
  const int oh = geo.out_height(), ow = geo.out_width(), k = geo.kernel;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(geo.in_channels) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < geo.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        double* dst = cols.row(row).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * geo.stride - geo.pad + ky;
          if (iy < 0 || iy >= geo.height) continue;
          const double* src = x.row(c).data() + static_cast<std::ptrdiff_t>(iy) * geo.width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * geo.stride - geo.pad + kx;
            if (ix >= 0 && ix < geo.width) dst[oy * ow + ox] = src[ix];
          }
        }
      }
  return cols;
}

inline void col2im_add(const Matrix& cols, const ConvGeometry& geo, Matrix& dx) {
  const int oh = geo.out_height(), ow = geo.out_width(), k = geo.kernel;
  for (int c = 0; c < geo.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        const double* src = cols.row(row).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * geo.stride - geo.pad + ky;
          if (iy < 0 || iy >= geo.height) continue;
          double* dst = dx.row(c).data() + static_cast<std::ptrdiff_t>(iy) * geo.width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * geo.stride - geo.pad + kx;
            if (ix >= 0 && ix < geo.width) dst[ix] += src[oy * ow + ox];
          }
        }
      }
}
}  // namespace detail

/// 2-D convolution. `x` is C×(H·W) (one channel per row, row-major pixels),
/// `weight` is C_out×(C·k·k) and `bias` is C_out×1. Output is C_out×(H'·W').
inline Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& geo) {
  if (x.rows() != geo.in_channels || x.cols() != static_cast<Eigen::Index>(geo.height) * geo.width)
    throw std::invalid_argument("t3kit::ag::conv2d: input does not match geometry");
  if (weight.cols() != static_cast<Eigen::Index>(geo.in_channels) * geo.kernel * geo.kernel)
    throw std::invalid_argument("t3kit::ag::conv2d: weight does not match geometry");
  if (bias.rows() != weight.rows() || bias.cols() != 1) throw std::invalid_argument("t3kit::ag::conv2d: bias shape");
  if (geo.out_height() <= 0 || geo.out_width() <= 0) throw std::invalid_argument("t3kit::ag::conv2d: empty output");
  Graph& g = *x.graph();
  Matrix cols = detail::im2col(x.value(), geo);
  Matrix out = weight.value() * cols;
  out.colwise() += bias.value().col(0);
  return g.record(std::move(out), {x, weight, bias}, [x, weight, bias, geo, cols = std::move(cols)](Graph& g, int self) {
    const Matrix& d = g.grad(self);
    if (g.needs_grad(weight.id())) g.grad(weight.id()).noalias() += d * cols.transpose();
    if (g.needs_grad(bias.id())) g.grad(bias.id()) += d.rowwise().sum();
    if (g.needs_grad(x.id())) {
      Matrix dcols = weight.value().transpose() * d;
      detail::col2im_add(dcols, geo, g.grad(x.id()));
    }
  });
}

/// C×(H·W) → 1×C mean over spatial positions.
inline Var global_avg_pool(Var x) {
  Graph& g = *x.graph();
  const double n = static_cast<double>(x.cols());
  Matrix out = x.value().rowwise().mean().transpose();
  return g.record(std::move(out), {x}, [x, n](Graph& g, int self) {
    g.grad(x.id()).colwise() += g.grad(self).row(0).transpose() / n;
  });
}

}  // namespace t3kit::ag
