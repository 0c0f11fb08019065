// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/image.hpp"
#include "t3kit/nn.hpp"
#include "t3kit/optim.hpp"
#include "t3kit/task_heads.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::moma {

using ag::Matrix;
using nn::Graph;
using nn::Var;

struct EncoderConfig {
  std::vector<int> channels{32, 64, 128, 256};
  int kernel = 3;
  int stride = 2;

  int embed_dim() const { return channels.empty() ? 0 : channels.back(); }
};

/// Planar image → C×(H·W) matrix.
inline Matrix image_to_matrix(const Image& img) {
  Matrix m(img.channels, static_cast<Eigen::Index>(img.plane()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(img.data[static_cast<std::size_t>(i)]);
  return m;
}

/// Strided conv blocks with ReLU, then global average pooling to d_e.
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(const std::string& name, const EncoderConfig& cfg, nn::Rng& rng, int in_channels = 3) {
    if (cfg.channels.empty()) throw std::invalid_argument("encoder needs at least one block");
    int in = in_channels;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      blocks_.emplace_back(name + ".block" + std::to_string(i), in, cfg.channels[i], cfg.kernel, cfg.stride,
                           cfg.kernel / 2, rng);
      in = cfg.channels[i];
    }
  }

  Var forward(Graph& g, const Image& img) {
    int h = img.height, w = img.width;
    Var x = g.constant(image_to_matrix(img));
    for (auto& b : blocks_) x = ag::relu(b.forward(g, x, h, w));
    return ag::global_avg_pool(x);
  }

  /// bs images → bs×d_e.
  Var forward_batch(Graph& g, std::span<const Image> images) {
    std::vector<Var> rows;
    rows.reserve(images.size());
    for (const Image& img : images) rows.push_back(forward(g, img));
    return rows.size() == 1 ? rows.front() : ag::concat_rows(rows);
  }

  int embed_dim() const { return blocks_.empty() ? 0 : blocks_.back().out_channels(); }

  nn::ParameterList parameters() {
    nn::ParameterList p;
    for (auto& b : blocks_) nn::append(p, b.parameters());
    return p;
  }

 private:
  std::vector<nn::Conv2d> blocks_;
};

/// Self-attention across the rows of a batch of embeddings (each row one
/// token), residual, then unit-normalization of every row.
class EmbeddingAttention {
 public:
  EmbeddingAttention() = default;
  EmbeddingAttention(const std::string& name, int dim, int heads, nn::Rng& rng) : mha_(name + ".mha", dim, heads, rng) {}

  Var forward(Graph& g, Var batch) { return ag::l2_normalize_rows(ag::add(batch, mha_.forward(g, batch, batch))); }

  nn::MultiHeadAttention& mha() { return mha_; }
  nn::ParameterList parameters() { return mha_.parameters(); }

 private:
  nn::MultiHeadAttention mha_;
};

/// Fixed-capacity FIFO of embedding rows.
class NegativeQueue {
 public:
  NegativeQueue() = default;
  NegativeQueue(int capacity, int width) : buffer_(Matrix::Zero(capacity, width)) {
    if (capacity <= 0 || width <= 0) throw std::invalid_argument("NegativeQueue: capacity and width must be positive");
  }

  /// Appends rows in order; once full, each new row evicts the oldest.
  void enqueue(const Matrix& rows) {
    if (rows.cols() != width())
      throw std::invalid_argument("NegativeQueue: row width " + std::to_string(rows.cols()) + ", expected " +
                                  std::to_string(width()));
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      buffer_.row(head_) = rows.row(r);
      head_ = (head_ + 1) % capacity();
      if (fill_ < capacity()) ++fill_;
    }
  }

  /// Stored rows, oldest first.
  Matrix contents() const {
    Matrix out(fill_, width());
    const int start = fill_ < capacity() ? 0 : head_;
    for (int i = 0; i < fill_; ++i) out.row(i) = buffer_.row((start + i) % capacity());
    return out;
  }

  int capacity() const { return static_cast<int>(buffer_.rows()); }
  int width() const { return static_cast<int>(buffer_.cols()); }
  int fill() const { return fill_; }
  int head() const { return head_; }
  bool empty() const { return fill_ == 0; }

  const Matrix& raw() const { return buffer_; }
  void restore(Matrix raw, int head, int fill) {
    if (head < 0 || head >= raw.rows() || fill < 0 || fill > raw.rows())
      throw std::invalid_argument("NegativeQueue::restore: inconsistent state");
    buffer_ = std::move(raw);
    head_ = head;
    fill_ = fill;
  }

 private:
  Matrix buffer_;
  int head_ = 0;
  int fill_ = 0;
};

inline constexpr double kUnitNormTolerance = 1e-5;

inline void require_unit_rows(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (std::abs(m.row(r).norm() - 1.0) > kUnitNormTolerance)
      throw std::invalid_argument(std::string("infonce: ") + what + " row " + std::to_string(r) + " is not unit-norm");
}

/// Mean over rows of −log(exp(s_pos/τ) / (exp(s_pos/τ) + Σ_j exp(s_j/τ))),
/// s_pos = studentᵢ·teacherᵢ and s_j over the queue rows.
inline Var infonce_loss(Var student, Var teacher_pos, const Matrix& negatives, double tau) {
  if (student.rows() != teacher_pos.rows() || student.cols() != teacher_pos.cols())
    throw std::invalid_argument("infonce: student and teacher batches differ in shape");
  if (negatives.rows() == 0) throw std::invalid_argument("infonce: negative queue is empty");
  if (negatives.cols() != student.cols()) throw std::invalid_argument("infonce: queue width mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: temperature must be positive");
  require_unit_rows(student.value(), "student");
  require_unit_rows(teacher_pos.value(), "teacher");
  require_unit_rows(negatives, "queue");
  Graph& g = *student.graph();
  Var pos = ag::row_sum(ag::mul(student, teacher_pos));
  Var neg = ag::matmul_nt(student, g.constant(negatives));
  Var logits = ag::scale(ag::concat_cols({pos, neg}), 1.0 / tau);
  return ag::cross_entropy(logits, std::vector<int>(static_cast<std::size_t>(student.rows()), 0));
}

inline Var infonce_loss(Var student, Var teacher_pos, const NegativeQueue& queue, double tau) {
  if (queue.empty()) throw std::invalid_argument("infonce: negative queue is empty");
  return infonce_loss(student, teacher_pos, queue.contents(), tau);
}

struct MomaConfig {
  double tau = 0.07;
  double alpha = 1.0;
  double beta = 1.0;
  int queue_length = 512;
  int attention_heads = 4;
};

struct DistillLossReport {
  double ce_loss = 0.0;
  double infonce_loss = 0.0;
  double total_loss = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
};

/// Frozen teacher and trainable student (encoder, embedding attention, head).
class MomaModel {
 public:
  MomaModel() = default;
  MomaModel(const std::string& name, const EncoderConfig& enc, const HeadConfig& head, const MomaConfig& cfg,
            nn::Rng& rng)
      : teacher_(name + ".teacher.encoder", enc, rng),
        teacher_attention_(name + ".teacher.attention", enc.embed_dim(), cfg.attention_heads, rng),
        student_(teacher_),
        student_attention_(name + ".student.attention", enc.embed_dim(), cfg.attention_heads, rng),
        head_(name + ".head", head, rng) {
    if (head.embed_dim != enc.embed_dim()) throw std::invalid_argument("head embed_dim differs from encoder output");
    rename(student_.parameters(), name + ".teacher.encoder", name + ".student.encoder");
    nn::set_trainable(teacher_parameters(), false);
    for (ag::Parameter* p : teacher_parameters()) p->zero_grad();
  }

  MomaModel(const MomaModel&) = delete;
  MomaModel& operator=(const MomaModel&) = delete;
  MomaModel(MomaModel&&) = default;
  MomaModel& operator=(MomaModel&&) = default;

  ConvEncoder& student() { return student_; }
  ConvEncoder& teacher() { return teacher_; }
  EmbeddingAttention& student_attention() { return student_attention_; }
  EmbeddingAttention& teacher_attention() { return teacher_attention_; }
  TaskHead& head() { return head_; }

  /// Everything the optimizer updates.
  nn::ParameterList trainable_parameters() {
    nn::ParameterList p = student_.parameters();
    nn::append(p, student_attention_.parameters());
    nn::append(p, head_.parameters());
    return p;
  }

  nn::ParameterList teacher_parameters() {
    nn::ParameterList p = teacher_.parameters();
    nn::append(p, teacher_attention_.parameters());
    return p;
  }

  /// Encoder + head only: the parameters used at inference.
  std::size_t inference_param_count() {
    nn::ParameterList p = student_.parameters();
    nn::append(p, head_.parameters());
    return nn::count(p);
  }

  /// Student logits for each image, 1 row per image.
  Matrix logits(std::span<const Image> images) {
    Graph g;
    Var emb = student_.forward_batch(g, images);
    return head_.forward(g, emb).value();
  }

  /// Post-attention, unit-normalized teacher embeddings of a batch.
  Matrix teacher_embeddings(std::span<const Image> images) {
    Graph g;
    return teacher_attention_.forward(g, teacher_.forward_batch(g, images)).value();
  }

 private:
  static void rename(const nn::ParameterList& params, const std::string& from, const std::string& to) {
    for (ag::Parameter* p : params)
      if (p->name.rfind(from, 0) == 0) p->name = to + p->name.substr(from.size());
  }

  ConvEncoder teacher_;
  EmbeddingAttention teacher_attention_;
  ConvEncoder student_;
  EmbeddingAttention student_attention_;
  TaskHead head_;
};

struct DistillForward {
  Var total;
  Var ce;
  Var infonce;
  Matrix teacher_embeddings;  // post-attention, to be enqueued
};

/// Builds L = α·L_CE + β·L_InfoNCE for one batch on `g` without touching the
/// queue or any parameter.
inline DistillForward distill_forward(Graph& g, MomaModel& model, std::span<const Image> images,
                                      std::span<const ActionTarget> targets, const Matrix& negatives,
                                      const MomaConfig& cfg) {
  if (images.size() != targets.size() || images.empty())
    throw std::invalid_argument("train batch needs one target per image and at least one image");
  Var student = model.student().forward_batch(g, images);
  Var teacher = model.teacher_attention().forward(g, model.teacher().forward_batch(g, images));
  Var logits = model.head().forward(g, student);
  Var ce = supervised_loss(model.head().config(), logits, targets);
  Var nce = infonce_loss(model.student_attention().forward(g, student), teacher, negatives, cfg.tau);
  Var total = ag::add(ag::scale(ce, cfg.alpha), ag::scale(nce, cfg.beta));
  return {total, ce, nce, teacher.value()};
}

/// One optimizer step on the joint objective. The first call on an empty
/// queue enqueues the batch's teacher embeddings before the loss; every call
/// enqueues them after.
inline DistillLossReport train_step(MomaModel& model, std::span<const Image> images,
                                    std::span<const ActionTarget> targets, NegativeQueue& queue, optim::Adam& opt,
                                    const MomaConfig& cfg) {
  if (queue.empty()) queue.enqueue(model.teacher_embeddings(images));
  opt.zero_grad();
  Graph g;
  DistillForward f = distill_forward(g, model, images, targets, queue.contents(), cfg);
  g.backward(f.total);
  opt.step();
  queue.enqueue(f.teacher_embeddings);
  return {f.ce.scalar(), f.infonce.scalar(), f.total.scalar(), cfg.alpha, cfg.beta};
}

}  // namespace t3kit::moma
