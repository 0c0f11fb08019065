// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace t3kit::nn {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::Var;

using Rng = std::mt19937_64;

/// Uniform double in [0,1) from 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline Matrix glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -bound, bound);
  return m;
}

using ParameterList = std::vector<Parameter*>;

inline void append(ParameterList& dst, const ParameterList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

inline std::size_t count(const ParameterList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

/// Binds a parameter as trainable or frozen depending on its flag.
inline Var bind(Graph& g, Parameter& p) { return p.trainable ? g.parameter(p) : g.frozen(p); }

inline void set_trainable(const ParameterList& params, bool on) {
  for (Parameter* p : params) p->trainable = on;
}

inline void zero_grad(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

/// FNV-1a over the raw bytes of every parameter value, in list order.
inline std::uint64_t checksum(const ParameterList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

/// y = x·W + b with W stored in×out.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng)
      : weight_(name + ".weight", glorot(rng, in, out, in, out)), bias_(name + ".bias", Matrix::Zero(1, out)) {}

  Var forward(Graph& g, Var x) { return ag::add_row(ag::matmul(x, bind(g, weight_)), bind(g, bias_)); }

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int width)
      : gamma_(name + ".gamma", Matrix::Ones(1, width)), beta_(name + ".beta", Matrix::Zero(1, width)) {}

  Var forward(Graph& g, Var x) { return ag::layer_norm_rows(x, bind(g, gamma_), bind(g, beta_)); }
  ParameterList parameters() { return {&gamma_, &beta_}; }

 private:
  Parameter gamma_;
  Parameter beta_;
};

/// Optional sink for post-softmax attention maps, one entry per head call.
struct AttentionTrace {
  std::vector<Matrix> maps;
};

/// Scaled dot-product multi-head attention with separate query and
/// key/value inputs. `key_mask` marks valid key rows (empty = all valid).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng)
      : heads_(heads),
        dim_(dim),
        q_(name + ".q", dim, dim, rng),
        k_(name + ".k", dim, dim, rng),
        v_(name + ".v", dim, dim, rng),
        o_(name + ".o", dim, dim, rng) {
    if (heads <= 0 || dim % heads != 0)
      throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) + " not divisible by " +
                                  std::to_string(heads) + " heads");
  }

  Var forward(Graph& g, Var query, Var key_value, const std::vector<bool>& key_mask = {},
              AttentionTrace* trace = nullptr) {
    if (query.cols() != dim_ || key_value.cols() != dim_)
      throw std::invalid_argument("MultiHeadAttention: input width mismatch");
    if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != key_value.rows())
      throw std::invalid_argument("MultiHeadAttention: mask length mismatch");
    Var q = q_.forward(g, query);
    Var k = k_.forward(g, key_value);
    Var v = v_.forward(g, key_value);
    const int dh = dim_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      Var qh = ag::slice_cols(q, h * dh, dh);
      Var kh = ag::slice_cols(k, h * dh, dh);
      Var vh = ag::slice_cols(v, h * dh, dh);
      Var att = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), key_mask);
      if (trace != nullptr) trace->maps.push_back(att.value());
      outs.push_back(ag::matmul(att, vh));
    }
    Var merged = heads_ == 1 ? outs.front() : ag::concat_cols(outs);
    return o_.forward(g, merged);
  }

  int heads() const { return heads_; }
  int dim() const { return dim_; }
  Linear& value_proj() { return v_; }
  Linear& output_proj() { return o_; }

  ParameterList parameters() {
    ParameterList p;
    append(p, q_.parameters());
    append(p, k_.parameters());
    append(p, v_.parameters());
    append(p, o_.parameters());
    return p;
  }

 private:
  int heads_ = 1;
  int dim_ = 0;
  Linear q_, k_, v_, o_;
};

/// Two-layer ReLU MLP.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, int in, int hidden, int out, Rng& rng)
      : fc1_(name + ".fc1", in, hidden, rng), fc2_(name + ".fc2", hidden, out, rng) {}

  Var forward(Graph& g, Var x) { return fc2_.forward(g, ag::relu(fc1_.forward(g, x))); }

  Linear& last() { return fc2_; }

  ParameterList parameters() {
    ParameterList p = fc1_.parameters();
    append(p, fc2_.parameters());
    return p;
  }

 private:
  Linear fc1_, fc2_;
};

/// Single-layer LSTM; gate order in the packed weights is (i, f, g, o).
class LSTM {
 public:
  LSTM() = default;
  LSTM(const std::string& name, int in, int hidden, Rng& rng)
      : hidden_(hidden),
        wx_(name + ".wx", glorot(rng, in, 4 * hidden, in, hidden)),
        wh_(name + ".wh", glorot(rng, hidden, 4 * hidden, hidden, hidden)),
        b_(name + ".b", Matrix::Zero(1, 4 * hidden)) {
    b_.value.middleCols(hidden, hidden).setOnes();  // forget-gate bias
  }

  /// x: T×in → T×hidden, processing rows in order.
  Var forward(Graph& g, Var x) {
    Var wx = bind(g, wx_);
    Var wh = bind(g, wh_);
    Var b = bind(g, b_);
    Var xproj = ag::add_row(ag::matmul(x, wx), b);
    Var h = g.constant(Matrix::Zero(1, hidden_));
    Var c = g.constant(Matrix::Zero(1, hidden_));
    std::vector<Var> hs;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      Var gates = ag::add(ag::slice_rows(xproj, t, 1), ag::matmul(h, wh));
      Var i = ag::sigmoid(ag::slice_cols(gates, 0, hidden_));
      Var f = ag::sigmoid(ag::slice_cols(gates, hidden_, hidden_));
      Var gg = ag::tanh(ag::slice_cols(gates, 2 * hidden_, hidden_));
      Var o = ag::sigmoid(ag::slice_cols(gates, 3 * hidden_, hidden_));
      c = ag::add(ag::mul(f, c), ag::mul(i, gg));
      h = ag::mul(o, ag::tanh(c));
      hs.push_back(h);
    }
    return ag::concat_rows(hs);
  }

  int hidden() const { return hidden_; }
  ParameterList parameters() { return {&wx_, &wh_, &b_}; }

 private:
  int hidden_ = 0;
  Parameter wx_, wh_, b_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, int vocab, int width, Rng& rng) : table_(name + ".table", Matrix(vocab, width)) {
    for (Eigen::Index i = 0; i < table_.value.size(); ++i) table_.value.data()[i] = uniform(rng, -0.5, 0.5);
    table_.zero_grad();
  }

  Var forward(Graph& g, const std::vector<int>& ids) { return ag::gather_rows(bind(g, table_), ids); }

  Parameter& table() { return table_; }
  ParameterList parameters() { return {&table_}; }

 private:
  Parameter table_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng)
      : in_ch_(in_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        weight_(name + ".weight", glorot(rng, out_ch, in_ch * kernel * kernel, in_ch * kernel * kernel,
                                         out_ch * kernel * kernel)),
        bias_(name + ".bias", Matrix::Zero(out_ch, 1)) {}

  /// x is C×(H·W); returns C_out×(H'·W') and updates height/width in place.
  Var forward(Graph& g, Var x, int& height, int& width) {
    ag::ConvGeometry geo{in_ch_, height, width, kernel_, stride_, pad_};
    Var y = ag::conv2d(x, bind(g, weight_), bind(g, bias_), geo);
    height = geo.out_height();
    width = geo.out_width();
    return y;
  }

  int out_channels() const { return static_cast<int>(weight_.value.rows()); }
  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  int in_ch_ = 0, kernel_ = 3, stride_ = 1, pad_ = 0;
  Parameter weight_;
  Parameter bias_;
};

}  // namespace t3kit::nn
