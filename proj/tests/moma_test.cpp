// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "t3kit/moma.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <memory>

#include "fixtures.hpp"

namespace t3kit::moma {
namespace {

Matrix unit_rows(nn::Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nn::uniform(rng, -1, 1);
  m.rowwise().normalize();
  return m;
}

// Direct evaluation of −log(e^{s_p/τ} / (e^{s_p/τ} + Σ e^{s_j/τ})) for one row.
double infonce_row_oracle(const Matrix& s, const Matrix& t, const Matrix& q, Eigen::Index r, double tau) {
  double s_pos = 0.0;
  for (Eigen::Index c = 0; c < s.cols(); ++c) s_pos += s(r, c) * t(r, c);
  double denom = std::exp(s_pos / tau);
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    double sj = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) sj += s(r, c) * q(j, c);
    denom += std::exp(sj / tau);
  }
  return -std::log(std::exp(s_pos / tau) / denom);
}

double infonce_value(const Matrix& s, const Matrix& t, const Matrix& q, double tau) {
  Graph g;
  return infonce_loss(g.constant(s), g.constant(t), q, tau).scalar();
}

TEST(InfoNce, SymmetricCaseIsLogTwo) {
  Matrix e = Matrix::Zero(1, 4);
  e(0, 0) = 1.0;
  EXPECT_NEAR(infonce_value(e, e, e, 0.07), std::log(2.0), 1e-12);
}

TEST(InfoNce, OrthogonalNegativesMatchOracle) {
  Matrix s = Matrix::Zero(1, 6), q = Matrix::Zero(5, 6);
  s(0, 0) = 1.0;
  for (int j = 0; j < 5; ++j) q(j, j + 1) = 1.0;
  const double expected = std::log(1.0 + 5.0 * std::exp(-1.0 / 0.07));
  EXPECT_NEAR(infonce_value(s, s, q, 0.07), expected, 1e-12);
  EXPECT_NEAR(infonce_value(s, s, q, 0.07), infonce_row_oracle(s, s, q, 0, 0.07), 1e-12);
}

TEST(InfoNce, RandomInstancesMatchOracleAndRearrangement) {
  nn::Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int bs = 1 + trial % 5, d = 3 + trial % 7, l = 1 + trial % 11;
    const Matrix s = unit_rows(rng, bs, d), t = unit_rows(rng, bs, d), q = unit_rows(rng, l, d);
    double oracle = 0.0, rearranged = 0.0;
    for (int r = 0; r < bs; ++r) {
      oracle += infonce_row_oracle(s, t, q, r, 0.07);
      const double s_pos = s.row(r).dot(t.row(r));
      double acc = 0.0;
      for (int j = 0; j < l; ++j) acc += std::exp((s.row(r).dot(q.row(j)) - s_pos) / 0.07);
      rearranged += std::log1p(acc);
    }
    const double got = infonce_value(s, t, q, 0.07);
    EXPECT_NEAR(got, oracle / bs, 1e-6 * std::max(1.0, std::abs(oracle / bs)));
    EXPECT_NEAR(got, rearranged / bs, 1e-9 * std::max(1.0, got));
    EXPECT_GE(got, 0.0);
  }
}

TEST(InfoNce, AddingNegativesNeverDecreasesLoss) {
  nn::Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix s = unit_rows(rng, 3, 5), t = unit_rows(rng, 3, 5);
    Matrix q = unit_rows(rng, 1, 5);
    double prev = infonce_value(s, t, q, 0.07);
    for (int k = 0; k < 6; ++k) {
      Matrix grown(q.rows() + 1, q.cols());
      grown << q, unit_rows(rng, 1, 5);
      q = grown;
      const double cur = infonce_value(s, t, q, 0.07);
      EXPECT_GE(cur, prev);
      prev = cur;
    }
  }
}

TEST(InfoNce, RejectsBadInputs) {
  nn::Rng rng(33);
  const Matrix s = unit_rows(rng, 2, 4);
  EXPECT_THROW(infonce_value(s, s, Matrix(0, 4), 0.07), std::invalid_argument);
  EXPECT_THROW(infonce_value(s, s, unit_rows(rng, 3, 5), 0.07), std::invalid_argument);
  EXPECT_THROW(infonce_value(s, s, unit_rows(rng, 3, 4), 0.0), std::invalid_argument);
  EXPECT_THROW(infonce_value(2.0 * s, s, unit_rows(rng, 3, 4), 0.07), std::invalid_argument);
  Graph g;
  EXPECT_THROW(infonce_loss(g.constant(s), g.constant(s), NegativeQueue(4, 4), 0.07), std::invalid_argument);
}

TEST(InfoNce, GradientMatchesFiniteDifference) {
  nn::Rng rng(34);
  ag::Parameter raw("raw", unit_rows(rng, 3, 5) * 1.7);
  const Matrix t = unit_rows(rng, 3, 5), q = unit_rows(rng, 7, 5);
  auto loss = [&](bool backward) {
    Graph g;
    Var l = infonce_loss(ag::l2_normalize_rows(g.parameter(raw)), g.constant(t), q, 0.07);
    if (backward) g.backward(l);
    return l.scalar();
  };
  raw.zero_grad();
  loss(true);
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double num = testing::numeric_grad(raw, i, [&] { return loss(false); });
    EXPECT_LT(testing::relative_error(raw.grad.data()[i], num), 1e-3);
  }
}

TEST(NegativeQueue, FifoExamples) {
  NegativeQueue q(4, 1);
  auto rows = [](std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
  };
  q.enqueue(rows({1, 2, 3}));
  q.enqueue(rows({4, 5, 6}));
  EXPECT_EQ(q.contents(), rows({3, 4, 5, 6}));
  q.enqueue(rows({7, 8, 9, 10, 11, 12}));
  EXPECT_EQ(q.contents(), rows({9, 10, 11, 12}));
  EXPECT_EQ(q.fill(), 4);
  EXPECT_THROW(q.enqueue(Matrix::Zero(1, 2)), std::invalid_argument);
}

TEST(NegativeQueue, MatchesListModel) {
  nn::Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const int cap = 1 + static_cast<int>(rng() % 9);
    NegativeQueue q(cap, 2);
    std::deque<std::pair<double, double>> model;
    double next = 0.0;
    for (int op = 0; op < 40; ++op) {
      const int m = static_cast<int>(rng() % 5);
      Matrix batch(m, 2);
      for (int r = 0; r < m; ++r) {
        batch(r, 0) = next;
        batch(r, 1) = -next;
        model.emplace_back(next, -next);
        next += 1.0;
        if (static_cast<int>(model.size()) > cap) model.pop_front();
      }
      q.enqueue(batch);
      const Matrix c = q.contents();
      ASSERT_EQ(c.rows(), static_cast<Eigen::Index>(model.size()));
      for (std::size_t i = 0; i < model.size(); ++i) {
        EXPECT_EQ(c(static_cast<Eigen::Index>(i), 0), model[i].first);
        EXPECT_EQ(c(static_cast<Eigen::Index>(i), 1), model[i].second);
      }
    }
  }
}

TEST(NegativeQueue, RestoreRoundTrip) {
  nn::Rng rng(36);
  NegativeQueue q(5, 3);
  q.enqueue(unit_rows(rng, 7, 3));
  NegativeQueue r(5, 3);
  r.restore(q.raw(), q.head(), q.fill());
  EXPECT_EQ(r.contents(), q.contents());
  EXPECT_THROW(r.restore(q.raw(), 5, 2), std::invalid_argument);
}

TEST(EmbeddingAttention, ShapeAndUnitRows) {
  nn::Rng rng(37);
  EmbeddingAttention att("att", 256, 4, rng);
  Graph g;
  const Var out = att.forward(g, g.constant(Matrix::Random(8, 256)));
  ASSERT_EQ(out.rows(), 8);
  ASSERT_EQ(out.cols(), 256);
  for (Eigen::Index r = 0; r < 8; ++r) EXPECT_NEAR(out.value().row(r).norm(), 1.0, 1e-12);
}

TEST(EmbeddingAttention, SingleTokenUsesValuePath) {
  nn::Rng rng(38);
  EmbeddingAttention att("att", 8, 2, rng);
  const Matrix x = Matrix::Random(1, 8);
  Graph g;
  const Var out = att.forward(g, g.constant(x));
  // With one token every attention weight is 1, so MHSA(x) = O(V(x)).
  Graph g2;
  const Var v = att.mha().value_proj().forward(g2, g2.constant(x));
  const Var o = att.mha().output_proj().forward(g2, v);
  Matrix expected = x + o.value();
  expected.rowwise().normalize();
  EXPECT_LT((out.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EmbeddingAttention, ZeroOutputProjectionNormalisesInput) {
  nn::Rng rng(39);
  EmbeddingAttention att("att", 16, 4, rng);
  for (ag::Parameter* p : att.mha().output_proj().parameters()) p->value.setZero();
  const Matrix x = Matrix::Random(5, 16);
  Graph g;
  const Eigen::VectorXd norms = x.rowwise().norm();
  const Matrix expected = (x.array().colwise() / norms.array()).matrix();
  EXPECT_EQ(att.forward(g, g.constant(x)).value(), expected);
}

class MomaFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    const std::vector<VerbNoun> pairs{{0, 0}, {0, 1}, {1, 1}, {2, 0}, {1, 2}};
    dict = ActionDictionary::build(pairs, 3, 3);
    enc.channels = {4, 8};
    nn::Rng rng(40);
    model = std::make_unique<MomaModel>("m", enc, HeadConfig::from_dictionary(HeadMode::kAdg, 8, dict), cfg, rng);
    for (int i = 0; i < 3; ++i) {
      images.push_back(testing::random_video(rng, 1, 12, 12).frames[0]);
      const int a = i % dict.num_actions();
      const VerbNoun vn = dict.action_to_pair(a);
      targets.push_back({vn.verb, vn.noun, a});
    }
    negatives = unit_rows(rng, 6, 8);
  }

  ActionDictionary dict = ActionDictionary::build(std::vector<VerbNoun>{{0, 0}}, 1, 1);
  EncoderConfig enc;
  MomaConfig cfg{0.07, 1.0, 1.0, 16, 2};
  std::unique_ptr<MomaModel> model;
  std::vector<Image> images;
  std::vector<ActionTarget> targets;
  Matrix negatives;
};

TEST_F(MomaFixture, StudentStartsAsTeacherCopy) {
  const auto s = model->student().parameters(), t = model->teacher().parameters();
  ASSERT_EQ(s.size(), t.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i]->value, t[i]->value);
    EXPECT_NE(s[i]->name, t[i]->name);
    EXPECT_TRUE(s[i]->trainable);
    EXPECT_FALSE(t[i]->trainable);
  }
}

TEST_F(MomaFixture, TotalIsWeightedSum) {
  for (auto [alpha, beta] : {std::pair{1.0, 1.0}, std::pair{0.3, 2.5}, std::pair{1.0, 0.0}}) {
    MomaConfig c = cfg;
    c.alpha = alpha;
    c.beta = beta;
    Graph g;
    const DistillForward f = distill_forward(g, *model, images, targets, negatives, c);
    EXPECT_EQ(f.total.scalar(), alpha * f.ce.scalar() + beta * f.infonce.scalar());
    if (beta == 0.0) {
      Graph g2;
      const Var logits = model->head().forward(g2, model->student().forward_batch(g2, images));
      EXPECT_EQ(f.total.scalar(), supervised_loss(model->head().config(), logits, targets).scalar());
    }
  }
}

TEST_F(MomaFixture, JointObjectiveGradientCheck) {
  const nn::ParameterList params = model->trainable_parameters();
  auto loss = [&](bool backward) {
    Graph g;
    const DistillForward f = distill_forward(g, *model, images, targets, negatives, cfg);
    if (backward) g.backward(f.total);
    return f.total.scalar();
  };
  nn::zero_grad(params);
  loss(true);
  nn::Rng pick(41);
  int checked = 0;
  for (ag::Parameter* p : model->student().parameters())
    for (int k = 0; k < 6; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(p->size()));
      const double num = testing::numeric_grad(*p, i, [&] { return loss(false); });
      EXPECT_LT(testing::relative_error(p->grad.data()[i], num, 1e-7), 1e-3)
          << p->name << "[" << i << "] analytic " << p->grad.data()[i] << " numeric " << num;
      ++checked;
    }
  EXPECT_GE(checked, 20);
  for (ag::Parameter* p : model->teacher_parameters()) EXPECT_EQ(p->grad.cwiseAbs().sum(), 0.0) << p->name;
}

TEST_F(MomaFixture, TrainStepLeavesTeacherUntouched) {
  optim::Adam opt(model->trainable_parameters(), {1e-2});
  NegativeQueue queue(cfg.queue_length, 8);
  const std::uint64_t before = nn::checksum(model->teacher_parameters());
  const std::uint64_t student_before = nn::checksum(model->student().parameters());
  for (int step = 0; step < 5; ++step) {
    const DistillLossReport r = train_step(*model, images, targets, queue, opt, cfg);
    EXPECT_EQ(r.total_loss, r.ce_loss + r.infonce_loss);
    EXPECT_GE(r.infonce_loss, 0.0);
  }
  EXPECT_EQ(nn::checksum(model->teacher_parameters()), before);
  EXPECT_NE(nn::checksum(model->student().parameters()), student_before);
  // Warm-up batch plus one batch per step.
  EXPECT_EQ(queue.fill(), std::min(cfg.queue_length, 3 * 6));
}

TEST_F(MomaFixture, InferenceCountExcludesTeacherAndAttention) {
  EXPECT_EQ(model->inference_param_count(),
            nn::count(model->student().parameters()) + nn::count(model->head().parameters()));
  const Matrix logits = model->logits(images);
  EXPECT_EQ(logits.rows(), 3);
  EXPECT_EQ(logits.cols(), dict.num_actions());
}

}  // namespace
}  // namespace t3kit::moma
