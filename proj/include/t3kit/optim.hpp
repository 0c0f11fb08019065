// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace t3kit::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Frozen parameters are skipped.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParameterList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const ag::Parameter* p : params_) {
      m_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ag::Parameter& p = *params_[i];
      if (!p.trainable) continue;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
  }

  void zero_grad() { nn::zero_grad(params_); }

  long steps() const { return t_; }
  const nn::ParameterList& parameters() const { return params_; }
  const std::vector<ag::Matrix>& first_moments() const { return m_; }
  const std::vector<ag::Matrix>& second_moments() const { return v_; }

  void restore(long t, std::vector<ag::Matrix> m, std::vector<ag::Matrix> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
      throw std::invalid_argument("Adam::restore: state does not match parameter list");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  nn::ParameterList params_;
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
};

}  // namespace t3kit::optim
