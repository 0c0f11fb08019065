// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/harness/checkpoint.hpp"
#include "t3kit/harness/config.hpp"
#include "t3kit/harness/recognition.hpp"
#include "t3kit/text.hpp"
#include "t3kit/vqa.hpp"
#include "t3kit/vqa_data.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace t3kit::harness {

struct VqaData {
  std::vector<std::string> answers;
  std::vector<vqa::QaAnnotation> qa;
  std::map<std::string, std::string> split;  // video id → split
  std::map<std::string, std::vector<vqa::ObjectFeatureSet>> features;
};

inline VqaData load_vqa_data(const std::filesystem::path& root, int feature_dim) {
  VqaData d;
  {
    std::ifstream in(root / "answers.txt");
    if (!in) throw std::runtime_error("cannot open " + (root / "answers.txt").string());
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) d.answers.push_back(line);
  }
  d.qa = vqa::read_qa_jsonl((root / "qa.jsonl").string());
  {
    std::ifstream in(root / "splits.csv");
    if (!in) throw std::runtime_error("cannot open " + (root / "splits.csv").string());
    const csv::Table t = csv::read(in, (root / "splits.csv").string());
    for (const auto& r : t.rows) d.split[r.at(0)] = r.at(1);
  }
  for (const auto& [id, split] : d.split)
    d.features.emplace(id, vqa::read_feature_file((root / "features" / (id + ".bin")).string(), feature_dim));
  std::set<std::string> known(d.answers.begin(), d.answers.end());
  for (const auto& q : d.qa) {
    if (!d.features.count(q.video_id)) throw std::runtime_error("qa.jsonl references unknown video " + q.video_id);
    const int n = static_cast<int>(d.features.at(q.video_id).size());
    if (q.frame_idx < 0 || q.frame_idx >= n)
      throw std::runtime_error("qa.jsonl: frame " + std::to_string(q.frame_idx) + " outside video " + q.video_id);
    if (!known.count(q.answer)) throw std::runtime_error("qa.jsonl: answer '" + q.answer + "' not in answers.txt");
  }
  return d;
}

/// Question vocabulary from every annotated question, sorted for stability.
inline text::TokenVocabulary build_vocabulary(const std::vector<vqa::QaAnnotation>& qa) {
  std::set<std::string> words;
  for (const auto& q : qa)
    for (const auto& t : text::tokenize(q.question)) words.insert(t);
  return text::TokenVocabulary::from_words({words.begin(), words.end()});
}

/// Representative frame answering for `frame`, per the 15-frame partition.
inline int representative_frame(int frame, int num_frames) {
  for (const auto& b : vqa::inference_partition(num_frames))
    if (frame >= b.first && frame <= b.last) return b.representative;
  throw std::out_of_range("frame outside the video");
}

/// Vocabulary words without the reserved unknown token.
inline std::vector<std::string> vocabulary_words(const text::TokenVocabulary& v) {
  return {v.words().begin() + 1, v.words().end()};
}

class VqaSystem {
 public:
  VqaSystem(const RunConfig& cfg, std::vector<std::string> vocab_words, std::vector<std::string> answers)
      : cfg_(cfg), answers_(std::move(answers)) {
    vocab_ = text::TokenVocabulary::from_words(vocab_words);
    if (static_cast<int>(answers_.size()) != cfg.mcan.num_answers)
      throw std::runtime_error("dataset lists " + std::to_string(answers_.size()) + " answers, config expects " +
                               std::to_string(cfg.mcan.num_answers));
    vqa::MCANConfig m = cfg.mcan;
    m.vocab_size = vocab_.size();
    nn::Rng rng(derive_seed(cfg.seed, 0x7A));
    model_ = std::make_unique<vqa::McanModel>(m, rng);
    opt_ = optim::Adam(model_->parameters(), cfg.adam());
  }

  std::vector<int> encode(const std::string& question) const { return vocab_.encode(question); }
  int answer_id(const std::string& a) const {
    for (std::size_t i = 0; i < answers_.size(); ++i)
      if (answers_[i] == a) return static_cast<int>(i);
    throw std::out_of_range("unknown answer '" + a + "'");
  }
  const std::string& answer(int id) const { return answers_.at(static_cast<std::size_t>(id)); }

  vqa::ObjectFeatureSet prepare(const vqa::ObjectFeatureSet& f) const {
    return vqa::pad_or_truncate(f, cfg_.mcan.max_objects);
  }

  /// Mean sigmoid BCE over the batch, one optimizer step.
  double train_step(const std::vector<const vqa::ObjectFeatureSet*>& objects, const std::vector<std::vector<int>>& tokens,
                    const std::vector<int>& answers) {
    opt_.zero_grad();
    ag::Graph g;
    std::vector<ag::Var> losses;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto out = model_->forward(g, prepare(*objects[i]), tokens[i]);
      losses.push_back(vqa::answer_loss(out.logits, answers[i]));
    }
    ag::Var total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = ag::add(total, losses[i]);
    total = ag::scale(total, 1.0 / static_cast<double>(losses.size()));
    g.backward(total);
    opt_.step();
    return total.scalar();
  }

  std::vector<double> scores(const vqa::ObjectFeatureSet& f, const std::vector<int>& tokens) {
    return model_->scores(prepare(f), tokens);
  }

  void save_state(Checkpoint& ck) {
    store_params(ck, model_->parameters());
    ck.optimizers.push_back(adam_to_json(opt_));
    ck.extra["vocabulary"] = vocabulary_words(vocab_);
    ck.extra["answers"] = answers_;
  }

  void load_state(const Checkpoint& ck) {
    load_params(ck, model_->parameters());
    if (ck.optimizers.size() != 1) throw std::runtime_error("vqa checkpoint must hold one optimizer state");
    adam_from_json(opt_, ck.optimizers.front());
  }

  vqa::McanModel& model() { return *model_; }

 private:
  RunConfig cfg_;
  text::TokenVocabulary vocab_;
  std::vector<std::string> answers_;
  std::unique_ptr<vqa::McanModel> model_;
  optim::Adam opt_;
};

/// Argmax of the checkpoint-averaged sigmoid scores.
inline int answer_question(const std::vector<VqaSystem*>& systems, const vqa::ObjectFeatureSet& f,
                           const std::string& question) {
  std::vector<std::vector<double>> sets;
  for (VqaSystem* s : systems) sets.push_back(s->scores(f, s->encode(question)));
  return argmax(metrics::aggregate(sets));
}

}  // namespace t3kit::harness
