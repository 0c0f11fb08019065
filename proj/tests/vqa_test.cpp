// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "t3kit/text.hpp"
#include "t3kit/vqa.hpp"
#include "t3kit/vqa_data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "fixtures.hpp"

namespace t3kit::vqa {
namespace {

Matrix random_matrix(nn::Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nn::uniform(rng, -scale, scale);
  return m;
}

MCANConfig tiny_config(bool fqca = true) {
  MCANConfig c;
  c.dim = 16;
  c.heads = 4;
  c.layers = 2;
  c.feature_dim = 12;
  c.word_dim = 8;
  c.vocab_size = 20;
  c.ffn_mult = 2;
  c.pool_hidden = 8;
  c.num_answers = 5;
  c.fqca = fqca;
  return c;
}

std::vector<int> tokens(std::initializer_list<int> t) { return t; }

struct ShapeCase {
  int dim;
  bool fqca;
};

class McanShapes : public ::testing::TestWithParam<ShapeCase> {};

TEST_P(McanShapes, FlowPoolAndLogitShapes) {
  const ShapeCase sc = GetParam();
  MCANConfig cfg = sc.dim == 512 ? MCANConfig::small() : MCANConfig::large();
  cfg.fqca = sc.fqca;
  cfg.layers = sc.dim == 512 ? 2 : 1;  // keeps the 1024-wide build within test memory
  cfg.vocab_size = 30;
  ASSERT_EQ(cfg.dim, sc.dim);
  ASSERT_EQ(cfg.num_answers, 16);
  nn::Rng rng(50 + static_cast<std::uint64_t>(sc.dim) + sc.fqca);
  McanModel model(cfg, rng);
  const auto objects = ObjectFeatureSet::dense(random_matrix(rng, 10, 2048));
  nn::AttentionTrace trace;
  Graph g;
  const McanOutput out = model.forward(g, objects, tokens({1, 2, 3, 4, 5, 6}), {true, &trace});
  EXPECT_EQ(out.objects.rows(), 10);
  EXPECT_EQ(out.objects.cols(), sc.dim);
  EXPECT_EQ(out.question.rows(), 6);
  EXPECT_EQ(out.question.cols(), sc.dim);
  EXPECT_EQ(out.pooled_question.rows(), 1);
  EXPECT_EQ(out.pooled_question.cols(), sc.dim);
  EXPECT_EQ(out.pooled_objects.cols(), sc.dim);
  EXPECT_EQ(out.logits.cols(), 16);
  // Per head: L question self maps, L×(object self + guided) maps, plus two
  // FQCA maps when enabled.
  const std::size_t per_head = static_cast<std::size_t>(3 * cfg.layers + (sc.fqca ? 2 : 0));
  ASSERT_EQ(trace.maps.size(), per_head * static_cast<std::size_t>(cfg.heads));
  if (sc.fqca) {
    // Q̃ attends over [Q̃; proj(F_L)] = (N^o+1) keys, F̃ over (N^s+1).
    const Matrix& q_map = trace.maps[trace.maps.size() - 2 * cfg.heads];
    const Matrix& f_map = trace.maps.back();
    EXPECT_EQ(q_map.rows(), 1);
    EXPECT_EQ(q_map.cols(), 11);
    EXPECT_EQ(f_map.cols(), 7);
  }
  for (const Matrix& m : trace.maps)
    for (Eigen::Index r = 0; r < m.rows(); ++r) EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-5);
  for (double s : model.scores(objects, tokens({1, 2, 3, 4, 5, 6}))) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

INSTANTIATE_TEST_SUITE_P(AllConfigs, McanShapes,
                         ::testing::Values(ShapeCase{512, false}, ShapeCase{512, true}, ShapeCase{1024, false},
                                           ShapeCase{1024, true}),
                         [](const auto& info) {
                           return "dim" + std::to_string(info.param.dim) + (info.param.fqca ? "_fqca" : "_base");
                         });

TEST(Mcan, PaddedObjectsGetNoAttentionAndChangeNothing) {
  nn::Rng rng(60);
  const MCANConfig cfg = tiny_config();
  McanModel model(cfg, rng);
  const auto dense = ObjectFeatureSet::dense(random_matrix(rng, 7, cfg.feature_dim));
  const auto padded = pad_or_truncate(dense, 36);
  ASSERT_EQ(padded.num_objects(), 36);
  ASSERT_EQ(padded.num_valid(), 7);
  const auto q = tokens({3, 1, 4, 1, 5});
  Graph g1, g2;
  nn::AttentionTrace trace;
  const McanOutput a = model.forward(g1, dense, q);
  const McanOutput b = model.forward(g2, padded, q, {true, &trace});
  EXPECT_LT((a.logits.value() - b.logits.value()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((a.pooled_objects.value() - b.pooled_objects.value()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((a.objects.value() - b.objects.value().topRows(7)).cwiseAbs().maxCoeff(), 1e-5);
  for (int i = 7; i < 36; ++i) EXPECT_EQ(b.object_weights(0, i), 0.0);
  int maps_over_objects = 0;
  for (const Matrix& m : trace.maps) {
    if (m.cols() != 36 && m.cols() != 37) continue;
    const int offset = m.cols() == 37 ? 1 : 0;  // FQCA prepends the pooled token
    ++maps_over_objects;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (int i = 7; i < 36; ++i) EXPECT_EQ(m(r, offset + i), 0.0);
  }
  EXPECT_EQ(maps_over_objects, cfg.heads * (cfg.layers + 1));
}

TEST(Mcan, TruncatesLongObjectLists) {
  nn::Rng rng(61);
  const auto many = ObjectFeatureSet::dense(random_matrix(rng, 40, 4));
  const auto cut = pad_or_truncate(many, 36);
  EXPECT_EQ(cut.num_valid(), 36);
  EXPECT_EQ(cut.features, many.features.topRows(36));
}

TEST(Mcan, FqcaOffMatchesBaselineBitForBit) {
  const auto q = tokens({2, 7, 1});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    nn::Rng ra(seed), rb(seed), rf(seed + 100);
    McanModel baseline(tiny_config(false), ra);
    McanModel with_fqca(tiny_config(true), rb);
    const auto base_params = baseline.parameters();
    const auto fq_params = with_fqca.parameters();
    ASSERT_GT(fq_params.size(), base_params.size());
    for (std::size_t i = 0; i < base_params.size(); ++i) ASSERT_EQ(base_params[i]->value, fq_params[i]->value);
    const auto objects = ObjectFeatureSet::dense(random_matrix(rf, 5, 12));
    Graph g1, g2;
    EXPECT_EQ(baseline.forward(g1, objects, q).logits.value(), with_fqca.forward(g2, objects, q, {false}).logits.value());
    Graph g3;
    EXPECT_NE(baseline.forward(g1, objects, q).logits.value(), with_fqca.forward(g3, objects, q).logits.value());
  }
}

TEST(Fqca, ZeroFinalProjectionIsIdentity) {
  nn::Rng rng(62);
  FrameQuestionCrossAttention fqca("fq", 16, 16, 4, rng);
  for (ag::Parameter* p : fqca.fc1().parameters()) p->value.setZero();
  const Matrix tilde = random_matrix(rng, 1, 16);
  Graph g;
  EXPECT_EQ(fqca.forward(g, g.constant(tilde), g.constant(random_matrix(rng, 9, 16))).value(), tilde);
}

TEST(Fqca, OutputShapeAndKeyCount) {
  nn::Rng rng(63);
  FrameQuestionCrossAttention fqca("fq", 512, 512, 8, rng);
  nn::AttentionTrace trace;
  Graph g;
  const Var out = fqca.forward(g, g.constant(random_matrix(rng, 1, 512)), g.constant(random_matrix(rng, 10, 512)), {},
                               &trace);
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 512);
  ASSERT_EQ(trace.maps.size(), 8u);
  EXPECT_EQ(trace.maps[0].cols(), 11);
  EXPECT_THROW(fqca.forward(g, g.constant(Matrix::Zero(2, 512)), g.constant(Matrix::Zero(3, 512))),
               std::invalid_argument);
}

TEST(Fqca, GradientsMatchFiniteDifference) {
  nn::Rng rng(64);
  FrameQuestionCrossAttention fqca("fq", 8, 6, 2, rng);
  ag::Parameter tilde("tilde", random_matrix(rng, 1, 8));
  const Matrix raw = random_matrix(rng, 5, 6), w = random_matrix(rng, 1, 8);
  const std::vector<bool> mask{true, true, false, true, true};
  auto loss = [&](bool backward) {
    Graph g;
    Var l = ag::sum(ag::mul(fqca.forward(g, g.parameter(tilde), g.constant(raw), mask), g.constant(w)));
    if (backward) g.backward(l);
    return l.scalar();
  };
  nn::ParameterList params = fqca.parameters();
  params.push_back(&tilde);
  nn::zero_grad(params);
  loss(true);
  for (Eigen::Index i = 0; i < tilde.size(); ++i) {
    const double num = testing::numeric_grad(tilde, i, [&] { return loss(false); });
    EXPECT_LT(testing::relative_error(tilde.grad.data()[i], num), 1e-3) << "tilde[" << i << "]";
  }
  int checked = 0;
  for (int k = 0; k < 40; ++k) {
    ag::Parameter* p = params[rng() % (params.size() - 1)];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->size()));
    const double num = testing::numeric_grad(*p, i, [&] { return loss(false); });
    EXPECT_LT(testing::relative_error(p->grad.data()[i], num), 1e-3) << p->name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Mcan, WholeModelGradientCheck) {
  nn::Rng rng(65);
  McanModel model(tiny_config(), rng);
  const auto objects = pad_or_truncate(ObjectFeatureSet::dense(random_matrix(rng, 4, 12)), 6);
  const auto q = tokens({4, 9, 2});
  auto loss = [&](bool backward) {
    Graph g;
    Var l = answer_loss(model.forward(g, objects, q).logits, 3);
    if (backward) g.backward(l);
    return l.scalar();
  };
  const nn::ParameterList params = model.parameters();
  nn::zero_grad(params);
  loss(true);
  int checked = 0;
  for (int k = 0; k < 60; ++k) {
    ag::Parameter* p = params[rng() % params.size()];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->size()));
    const double num = testing::numeric_grad(*p, i, [&] { return loss(false); });
    EXPECT_LT(testing::relative_error(p->grad.data()[i], num, 1e-7), 1e-3)
        << p->name << "[" << i << "] analytic " << p->grad.data()[i] << " numeric " << num;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(AttentionPool, EqualScoresGiveColumnMean) {
  nn::Rng rng(66);
  AttentionPool pool("pool", 8, 4, rng);
  for (ag::Parameter* p : pool.mlp().last().parameters()) p->value.setZero();
  const Matrix x = random_matrix(rng, 5, 8);
  Graph g;
  Matrix weights;
  const Var out = pool.forward(g, g.constant(x), {}, &weights);
  EXPECT_LT((out.value() - x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index t = 0; t < 5; ++t) EXPECT_NEAR(weights(0, t), 0.2, 1e-15);
}

TEST(AttentionPool, SingleRowIsItself) {
  nn::Rng rng(67);
  AttentionPool pool("pool", 8, 4, rng);
  const Matrix x = random_matrix(rng, 1, 8);
  Graph g;
  EXPECT_EQ(pool.forward(g, g.constant(x)).value(), x);
}

TEST(AttentionPool, MatchesLoopOracle) {
  nn::Rng rng(68);
  AttentionPool pool("pool", 6, 5, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 1 + trial % 9;
    const Matrix x = random_matrix(rng, t, 6);
    // Oracle: scores via the MLP, softmax by hand, then Σ_t α_t X_t.
    Graph g0;
    const Matrix scores = pool.mlp().forward(g0, g0.constant(x)).value();
    double mx = scores.maxCoeff(), z = 0.0;
    std::vector<double> alpha(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) z += (alpha[static_cast<std::size_t>(i)] = std::exp(scores(i, 0) - mx));
    std::vector<double> expected(6, 0.0);
    for (int i = 0; i < t; ++i)
      for (int c = 0; c < 6; ++c) expected[static_cast<std::size_t>(c)] += alpha[static_cast<std::size_t>(i)] / z * x(i, c);
    Graph g;
    const Var out = pool.forward(g, g.constant(x));
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(out.value()(0, c), expected[static_cast<std::size_t>(c)], 1e-6);
  }
}

TEST(AnswerLoss, ZeroClassifierGivesLogTwo) {
  nn::Rng rng(69);
  MCANConfig cfg = tiny_config();
  cfg.num_answers = 16;
  McanModel model(cfg, rng);
  for (ag::Parameter* p : model.classifier().parameters()) p->value.setZero();
  const auto objects = ObjectFeatureSet::dense(random_matrix(rng, 3, 12));
  for (double s : model.scores(objects, tokens({1, 2}))) EXPECT_EQ(s, 0.5);
  Graph g;
  EXPECT_NEAR(answer_loss(model.forward(g, objects, tokens({1, 2})).logits, 7).scalar(), std::log(2.0), 1e-12);
}

TEST(AnswerLoss, MatchesLoopOracle) {
  nn::Rng rng(70);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 15, answer = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const Matrix z = random_matrix(rng, 1, n, 6.0);
    double expected = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z(0, i)));
      expected += i == answer ? -std::log(p) : -std::log(1.0 - p);
    }
    Graph g;
    EXPECT_NEAR(answer_loss(g.constant(z), answer).scalar(), expected / n, 1e-6);
  }
  Graph g;
  EXPECT_THROW(answer_loss(g.constant(Matrix::Zero(1, 4)), 4), std::out_of_range);
}

TEST(QuestionEncoder, ShapesAndLookupPermutationInvariance) {
  nn::Rng rng(71);
  QuestionEncoder enc("q", 10, 300, 512, rng);
  Graph g;
  EXPECT_EQ(enc.embed(g, tokens({1, 2, 3, 4, 5, 6})).cols(), 300);
  const Var six = enc.forward(g, tokens({1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(six.rows(), 6);
  EXPECT_EQ(six.cols(), 512);
  EXPECT_EQ(enc.forward(g, tokens({9})).rows(), 1);
  EXPECT_THROW(enc.forward(g, {}), std::invalid_argument);

  QuestionEncoder small("q", 10, 4, 6, rng);
  const std::vector<int> perm{3, 7, 0, 9, 1, 8, 2, 6, 4, 5};  // old id → new id
  const std::vector<int> question{2, 5, 5, 9, 0};
  Graph g1;
  const Matrix before = small.forward(g1, question).value();
  Matrix& table = small.embedding().parameters()[0]->value;
  Matrix permuted(table.rows(), table.cols());
  for (int old_id = 0; old_id < 10; ++old_id) permuted.row(perm[static_cast<std::size_t>(old_id)]) = table.row(old_id);
  table = permuted;
  std::vector<int> remapped;
  for (int t : question) remapped.push_back(perm[static_cast<std::size_t>(t)]);
  Graph g2;
  EXPECT_EQ(small.forward(g2, remapped).value(), before);
}

TEST(TokenVocabulary, UnknownWordsMapToReservedId) {
  text::TokenVocabulary v;
  v.add_sentence("Which tool is used?");
  EXPECT_EQ(v.encode("which TOOL, is used"), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(v.encode("which scalpel"), (std::vector<int>{1, text::TokenVocabulary::kUnkId}));
  const auto copy = text::TokenVocabulary::from_words(v.words());
  EXPECT_EQ(copy.words(), v.words());
}

TEST(FrameSubsampling, Examples) {
  EXPECT_EQ(subsample_frames(45), (std::vector<int>{14, 29, 44}));
  EXPECT_EQ(subsample_frames(10), (std::vector<int>{9}));
  const auto p30 = inference_partition(30);
  ASSERT_EQ(p30.size(), 2u);
  EXPECT_EQ(p30[0].representative, 14);
  EXPECT_EQ(p30[0].first, 0);
  EXPECT_EQ(p30[0].last, 14);
  EXPECT_EQ(p30[1].representative, 29);
  EXPECT_EQ(p30[1].first, 15);
  EXPECT_EQ(p30[1].last, 29);
  const auto p1 = inference_partition(1);
  ASSERT_EQ(p1.size(), 1u);
  EXPECT_EQ(p1[0].representative, 0);
  EXPECT_THROW(inference_partition(0), std::invalid_argument);
}

TEST(FrameSubsampling, CountAndCoverageForAllLengths) {
  for (int n = 1; n <= 200; ++n) {
    int expected = 0;
    for (int f = 0; f < n; ++f) expected += (f % 15 == 14 || f == n - 1) ? 1 : 0;
    const auto kept = subsample_frames(n);
    EXPECT_EQ(static_cast<int>(kept.size()), expected) << n;
    EXPECT_EQ(static_cast<int>(kept.size()), (n + 14) / 15) << n;
    std::vector<int> cover(static_cast<std::size_t>(n), 0);
    const auto blocks = inference_partition(n);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      EXPECT_EQ(blocks[b].representative, kept[b]);
      EXPECT_EQ(blocks[b].representative, blocks[b].last);
      for (int f = blocks[b].first; f <= blocks[b].last; ++f) ++cover[static_cast<std::size_t>(f)];
    }
    for (int c : cover) EXPECT_EQ(c, 1) << n;
  }
}

TEST(FeatureFile, RoundTrip) {
  namespace fs = std::filesystem;
  nn::Rng rng(72);
  const fs::path path = fs::temp_directory_path() / "t3kit_features_test.bin";
  std::vector<Matrix> frames;
  for (int f = 0; f < 4; ++f) frames.push_back(random_matrix(rng, 1 + f, 6).cast<float>().cast<double>());
  write_feature_file(path.string(), frames, 6);
  const auto back = read_feature_file(path.string(), 6);
  ASSERT_EQ(back.size(), 4u);
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(back[static_cast<std::size_t>(f)].features, frames[static_cast<std::size_t>(f)]);
    EXPECT_EQ(back[static_cast<std::size_t>(f)].frame, f);
  }
  EXPECT_EQ(fs::file_size(path), 4u * (1 + 4) + 4u * 6 * (1 + 2 + 3 + 4));
  fs::resize_file(path, fs::file_size(path) - 2);
  EXPECT_THROW(read_feature_file(path.string(), 6), std::runtime_error);
  fs::remove(path);
}

TEST(QaJsonl, RoundTripAndGrouping) {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "t3kit_qa_test.jsonl";
  const std::vector<QaAnnotation> rows{
      {"v1", 14, "what tool?", "syringe"}, {"v1", 14, "what step?", "attach"}, {"v2", 29, "what tool?", "kelly"}};
  write_qa_jsonl(path.string(), rows);
  const auto back = read_qa_jsonl(path.string());
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].answer, "kelly");
  const auto grouped = group_by_video(back);
  EXPECT_EQ(grouped.at("v1").at(14).size(), 2u);
  EXPECT_EQ(grouped.at("v2").at(29).front().question, "what tool?");
  std::ofstream(path) << "{\"video_id\": \"v\"}\n";
  EXPECT_THROW(read_qa_jsonl(path.string()), std::runtime_error);
  fs::remove(path);
}

}  // namespace
}  // namespace t3kit::vqa
