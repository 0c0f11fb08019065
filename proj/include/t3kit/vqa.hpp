// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/nn.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::vqa {

using ag::Matrix;
using nn::Graph;
using nn::Var;

/// Per-frame detector output: one row per object. `valid` marks real rows;
/// padded rows are zero and masked out of every attention.
struct ObjectFeatureSet {
  Matrix features;
  int frame = 0;
  std::vector<bool> valid;

  int num_objects() const { return static_cast<int>(features.rows()); }
  int num_valid() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }

  static ObjectFeatureSet dense(Matrix f, int frame = 0) {
    ObjectFeatureSet s{std::move(f), frame, {}};
    s.valid.assign(static_cast<std::size_t>(s.features.rows()), true);
    return s;
  }
};

/// Pads with masked zero rows, or truncates, to exactly `max_objects` rows.
inline ObjectFeatureSet pad_or_truncate(const ObjectFeatureSet& in, int max_objects) {
  if (max_objects <= 0) throw std::invalid_argument("max_objects must be positive");
  if (in.num_objects() < 1) throw std::invalid_argument("frame has no objects");
  ObjectFeatureSet out;
  out.frame = in.frame;
  out.features = Matrix::Zero(max_objects, in.features.cols());
  out.valid.assign(static_cast<std::size_t>(max_objects), false);
  const int keep = std::min(max_objects, in.num_objects());
  out.features.topRows(keep) = in.features.topRows(keep);
  for (int i = 0; i < keep; ++i) out.valid[static_cast<std::size_t>(i)] = in.valid.empty() || in.valid[static_cast<std::size_t>(i)];
  return out;
}

struct MCANConfig {
  int dim = 512;
  int layers = 6;
  int heads = 8;
  int num_answers = 16;
  bool fqca = true;
  int feature_dim = 2048;
  int word_dim = 300;
  int vocab_size = 1;
  int ffn_mult = 4;
  int pool_hidden = 512;
  int max_objects = 36;

  static MCANConfig small() { return MCANConfig{}; }
  static MCANConfig large() {
    MCANConfig c;
    c.dim = 1024;
    return c;
  }

  void validate() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
      throw std::invalid_argument("mcan dim " + std::to_string(dim) + " must be divisible by heads " +
                                  std::to_string(heads));
    if (num_answers < 2) throw std::invalid_argument("answer vocabulary needs at least 2 answers");
    if (layers < 1) throw std::invalid_argument("mcan needs at least one layer");
    if (feature_dim <= 0 || word_dim <= 0 || vocab_size <= 0 || ffn_mult <= 0 || pool_hidden <= 0 || max_objects <= 0)
      throw std::invalid_argument("mcan widths must be positive");
  }
};

/// Embedding lookup followed by an LSTM to the hidden width.
class QuestionEncoder {
 public:
  QuestionEncoder() = default;
  QuestionEncoder(const std::string& name, int vocab, int word_dim, int dim, nn::Rng& rng)
      : embed_(name + ".embed", vocab, word_dim, rng), lstm_(name + ".lstm", word_dim, dim, rng) {}

  Var embed(Graph& g, const std::vector<int>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("question has no tokens");
    return embed_.forward(g, tokens);
  }

  /// tokens → N^s×dim
  Var forward(Graph& g, const std::vector<int>& tokens) { return lstm_.forward(g, embed(g, tokens)); }

  nn::Embedding& embedding() { return embed_; }
  nn::ParameterList parameters() {
    nn::ParameterList p = embed_.parameters();
    nn::append(p, lstm_.parameters());
    return p;
  }

 private:
  nn::Embedding embed_;
  nn::LSTM lstm_;
};

/// x = LN(x + MHSA(x)); x = LN(x + FFN(x))
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(const std::string& name, const MCANConfig& c, nn::Rng& rng)
      : att_(name + ".att", c.dim, c.heads, rng),
        ln1_(name + ".ln1", c.dim),
        ffn_(name + ".ffn", c.dim, c.dim * c.ffn_mult, c.dim, rng),
        ln2_(name + ".ln2", c.dim) {}

  Var forward(Graph& g, Var x, const std::vector<bool>& mask, nn::AttentionTrace* trace) {
    x = ln1_.forward(g, ag::add(x, att_.forward(g, x, x, mask, trace)));
    return ln2_.forward(g, ag::add(x, ffn_.forward(g, x)));
  }

  nn::ParameterList parameters() {
    nn::ParameterList p = att_.parameters();
    nn::append(p, ln1_.parameters());
    nn::append(p, ffn_.parameters());
    nn::append(p, ln2_.parameters());
    return p;
  }

 private:
  nn::MultiHeadAttention att_;
  nn::LayerNorm ln1_;
  nn::FeedForward ffn_;
  nn::LayerNorm ln2_;
};

/// Self-attention over objects, then guided attention with the objects as
/// queries and the final question states as keys/values, then FFN.
class GuidedAttentionBlock {
 public:
  GuidedAttentionBlock() = default;
  GuidedAttentionBlock(const std::string& name, const MCANConfig& c, nn::Rng& rng)
      : self_(name + ".self", c.dim, c.heads, rng),
        ln1_(name + ".ln1", c.dim),
        guided_(name + ".guided", c.dim, c.heads, rng),
        ln2_(name + ".ln2", c.dim),
        ffn_(name + ".ffn", c.dim, c.dim * c.ffn_mult, c.dim, rng),
        ln3_(name + ".ln3", c.dim) {}

  Var forward(Graph& g, Var x, const std::vector<bool>& x_mask, Var guide, const std::vector<bool>& guide_mask,
              nn::AttentionTrace* trace) {
    x = ln1_.forward(g, ag::add(x, self_.forward(g, x, x, x_mask, trace)));
    x = ln2_.forward(g, ag::add(x, guided_.forward(g, x, guide, guide_mask, trace)));
    return ln3_.forward(g, ag::add(x, ffn_.forward(g, x)));
  }

  nn::ParameterList parameters() {
    nn::ParameterList p = self_.parameters();
    nn::append(p, ln1_.parameters());
    nn::append(p, guided_.parameters());
    nn::append(p, ln2_.parameters());
    nn::append(p, ffn_.parameters());
    nn::append(p, ln3_.parameters());
    return p;
  }

 private:
  nn::MultiHeadAttention self_;
  nn::LayerNorm ln1_;
  nn::MultiHeadAttention guided_;
  nn::LayerNorm ln2_;
  nn::FeedForward ffn_;
  nn::LayerNorm ln3_;
};

/// Collapses T×dim to one dim-vector: α = softmax over T of MLP(X) (dim→1),
/// output αᵀX.
class AttentionPool {
 public:
  AttentionPool() = default;
  AttentionPool(const std::string& name, int dim, int hidden, nn::Rng& rng) : mlp_(name + ".mlp", dim, hidden, 1, rng) {}

  Var forward(Graph& g, Var x, const std::vector<bool>& mask = {}, Matrix* weights = nullptr) {
    Var alpha = ag::softmax_rows(ag::transpose(mlp_.forward(g, x)), mask);  // 1×T
    if (weights != nullptr) *weights = alpha.value();
    return ag::matmul(alpha, x);
  }

  nn::FeedForward& mlp() { return mlp_; }
  nn::ParameterList parameters() { return mlp_.parameters(); }

 private:
  nn::FeedForward mlp_;
};

/// One pooled token attends over itself plus a projected counterpart
/// sequence: out = t + FC¹(FC⁰(t) + LN(MHSA(t, [t; Linear(raw)]))).
class FrameQuestionCrossAttention {
 public:
  FrameQuestionCrossAttention() = default;
  FrameQuestionCrossAttention(const std::string& name, int dim, int raw_dim, int heads, nn::Rng& rng)
      : proj_(name + ".proj", raw_dim, dim, rng),
        att_(name + ".att", dim, heads, rng),
        ln_(name + ".ln", dim),
        fc0_(name + ".fc0", dim, dim, rng),
        fc1_(name + ".fc1", dim, dim, rng) {}

  /// tilde: 1×dim, raw: T×raw_dim, raw_mask: T entries or empty.
  Var forward(Graph& g, Var tilde, Var raw, const std::vector<bool>& raw_mask = {}, nn::AttentionTrace* trace = nullptr) {
    if (tilde.rows() != 1) throw std::invalid_argument("fqca: pooled input must be a single row");
    Var keys = ag::concat_rows({tilde, proj_.forward(g, raw)});  // (T+1)×dim
    std::vector<bool> mask;
    if (!raw_mask.empty()) {
      mask.push_back(true);
      mask.insert(mask.end(), raw_mask.begin(), raw_mask.end());
    }
    Var attended = ln_.forward(g, att_.forward(g, tilde, keys, mask, trace));
    return ag::add(tilde, fc1_.forward(g, ag::add(fc0_.forward(g, tilde), attended)));
  }

  nn::Linear& fc1() { return fc1_; }

  nn::ParameterList parameters() {
    nn::ParameterList p = proj_.parameters();
    nn::append(p, att_.parameters());
    nn::append(p, ln_.parameters());
    nn::append(p, fc0_.parameters());
    nn::append(p, fc1_.parameters());
    return p;
  }

 private:
  nn::Linear proj_;
  nn::MultiHeadAttention att_;
  nn::LayerNorm ln_;
  nn::Linear fc0_;
  nn::Linear fc1_;
};

struct ForwardOptions {
  bool use_fqca = true;
  nn::AttentionTrace* trace = nullptr;
};

struct McanOutput {
  Var logits;       // 1×N
  Var question;     // Q_L, N^s×dim
  Var objects;      // F_L, N^o×dim
  Var pooled_question;
  Var pooled_objects;
  Matrix question_weights;
  Matrix object_weights;
};

/// MCAN encoder-decoder with attention pooling, optional frame-question
/// cross-attention, and an N-way sigmoid answer classifier.
class McanModel {
 public:
  McanModel() = default;
  McanModel(const MCANConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    cfg.validate();
    question_ = QuestionEncoder("vqa.question", cfg.vocab_size, cfg.word_dim, cfg.dim, rng);
    object_proj_ = nn::Linear("vqa.object_proj", cfg.feature_dim, cfg.dim, rng);
    for (int l = 0; l < cfg.layers; ++l)
      question_layers_.emplace_back("vqa.fq.layer" + std::to_string(l), cfg, rng);
    for (int l = 0; l < cfg.layers; ++l)
      object_layers_.emplace_back("vqa.ff.layer" + std::to_string(l), cfg, rng);
    pool_question_ = AttentionPool("vqa.pool_q", cfg.dim, cfg.pool_hidden, rng);
    pool_objects_ = AttentionPool("vqa.pool_f", cfg.dim, cfg.pool_hidden, rng);
    classifier_ = nn::Linear("vqa.classifier", cfg.dim, cfg.num_answers, rng);
    if (cfg.fqca) {
      // Separate stream so the baseline parameters do not depend on the flag.
      nn::Rng fq_rng(rng());
      fqca_question_ = FrameQuestionCrossAttention("vqa.fqca_q", cfg.dim, cfg.dim, cfg.heads, fq_rng);
      fqca_objects_ = FrameQuestionCrossAttention("vqa.fqca_f", cfg.dim, cfg.dim, cfg.heads, fq_rng);
    }
  }

  McanModel(const McanModel&) = delete;
  McanModel& operator=(const McanModel&) = delete;
  McanModel(McanModel&&) = default;
  McanModel& operator=(McanModel&&) = default;

  McanOutput forward(Graph& g, const ObjectFeatureSet& objects, const std::vector<int>& tokens,
                     ForwardOptions opt = {}) {
    if (objects.features.cols() != cfg_.feature_dim)
      throw std::invalid_argument("object features have width " + std::to_string(objects.features.cols()) +
                                  ", expected " + std::to_string(cfg_.feature_dim));
    if (!objects.valid.empty() && static_cast<int>(objects.valid.size()) != objects.num_objects())
      throw std::invalid_argument("object mask length does not match object count");
    if (objects.num_objects() < 1 || (!objects.valid.empty() && objects.num_valid() == 0))
      throw std::invalid_argument("frame has no valid objects");
    const bool fqca = opt.use_fqca && cfg_.fqca;
    const std::vector<bool>& omask = objects.valid;
    const std::vector<bool> qmask;

    McanOutput out;
    Var q = question_.forward(g, tokens);
    for (auto& layer : question_layers_) q = layer.forward(g, q, qmask, opt.trace);
    Var f = object_proj_.forward(g, g.constant(objects.features));
    for (auto& layer : object_layers_) f = layer.forward(g, f, omask, q, qmask, opt.trace);
    out.question = q;
    out.objects = f;

    Var q_tilde = pool_question_.forward(g, q, qmask, &out.question_weights);
    Var f_tilde = pool_objects_.forward(g, f, omask, &out.object_weights);
    if (fqca) {
      Var q2 = fqca_question_.forward(g, q_tilde, f, omask, opt.trace);
      Var f2 = fqca_objects_.forward(g, f_tilde, q, qmask, opt.trace);
      q_tilde = q2;
      f_tilde = f2;
    }
    out.pooled_question = q_tilde;
    out.pooled_objects = f_tilde;
    out.logits = classifier_.forward(g, ag::add(q_tilde, f_tilde));
    return out;
  }

  /// Sigmoid answer scores in (0,1)^N.
  std::vector<double> scores(const ObjectFeatureSet& objects, const std::vector<int>& tokens, ForwardOptions opt = {}) {
    Graph g;
    const Matrix& z = forward(g, objects, tokens, opt).logits.value();
    std::vector<double> s(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index i = 0; i < z.cols(); ++i) s[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-z(0, i)));
    return s;
  }

  const MCANConfig& config() const { return cfg_; }
  QuestionEncoder& question_encoder() { return question_; }
  nn::Linear& classifier() { return classifier_; }
  FrameQuestionCrossAttention& fqca_question() { return fqca_question_; }
  FrameQuestionCrossAttention& fqca_objects() { return fqca_objects_; }
  AttentionPool& pool_question() { return pool_question_; }
  AttentionPool& pool_objects() { return pool_objects_; }

  nn::ParameterList parameters() {
    nn::ParameterList p = question_.parameters();
    nn::append(p, object_proj_.parameters());
    for (auto& l : question_layers_) nn::append(p, l.parameters());
    for (auto& l : object_layers_) nn::append(p, l.parameters());
    nn::append(p, pool_question_.parameters());
    nn::append(p, pool_objects_.parameters());
    nn::append(p, classifier_.parameters());
    if (cfg_.fqca) {
      nn::append(p, fqca_question_.parameters());
      nn::append(p, fqca_objects_.parameters());
    }
    return p;
  }

 private:
  MCANConfig cfg_;
  QuestionEncoder question_;
  nn::Linear object_proj_;
  std::vector<SelfAttentionBlock> question_layers_;
  std::vector<GuidedAttentionBlock> object_layers_;
  AttentionPool pool_question_, pool_objects_;
  nn::Linear classifier_;
  FrameQuestionCrossAttention fqca_question_, fqca_objects_;
};

/// Mean BCE of sigmoid(logits) against the one-hot answer vector.
inline Var answer_loss(Var logits, int answer) {
  if (answer < 0 || answer >= logits.cols()) throw std::out_of_range("answer id out of range");
  Matrix target = Matrix::Zero(1, logits.cols());
  target(0, answer) = 1.0;
  return ag::bce_with_logits(logits, target);
}

}  // namespace t3kit::vqa
