// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/action_dictionary.hpp"
#include "t3kit/nn.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit {

enum class HeadMode { kSingleVerb, kSingleNoun, kMulti, kAdg };

inline const char* to_string(HeadMode m) {
  switch (m) {
    case HeadMode::kSingleVerb: return "single_verb";
    case HeadMode::kSingleNoun: return "single_noun";
    case HeadMode::kMulti: return "multi";
    case HeadMode::kAdg: return "adg";
  }
  return "?";
}

inline HeadMode parse_head_mode(const std::string& s) {
  for (HeadMode m : {HeadMode::kSingleVerb, HeadMode::kSingleNoun, HeadMode::kMulti, HeadMode::kAdg})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown head mode '" + s + "'");
}

struct HeadConfig {
  HeadMode mode = HeadMode::kAdg;
  int embed_dim = 256;
  int num_verbs = 0;
  int num_nouns = 0;
  int num_actions = 0;

  static HeadConfig from_dictionary(HeadMode mode, int embed_dim, const ActionDictionary& d) {
    return {mode, embed_dim, d.num_verbs(), d.num_nouns(), d.num_actions()};
  }

  int logit_width() const {
    switch (mode) {
      case HeadMode::kSingleVerb: return num_verbs;
      case HeadMode::kSingleNoun: return num_nouns;
      case HeadMode::kMulti: return num_verbs + num_nouns;
      case HeadMode::kAdg: return num_actions;
    }
    return 0;
  }

  void validate(const ActionDictionary& d) const {
    if (embed_dim <= 0) throw std::invalid_argument("head embed_dim must be positive");
    if (num_verbs != d.num_verbs() || num_nouns != d.num_nouns() || num_actions != d.num_actions())
      throw std::invalid_argument("head class counts do not match the action dictionary");
  }
};

/// Supervision for one clip. `action` is required in adg mode only.
struct ActionTarget {
  int verb = 0;
  int noun = 0;
  int action = -1;
};

struct ActionPrediction {
  int verb = -1;
  int noun = -1;
  std::optional<int> action;
  std::vector<double> logits;
};

/// One linear layer per output block: verb | noun | verb+noun | action.
class TaskHead {
 public:
  TaskHead() = default;
  TaskHead(const std::string& name, const HeadConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    switch (cfg.mode) {
      case HeadMode::kSingleVerb: first_ = nn::Linear(name + ".verb", cfg.embed_dim, cfg.num_verbs, rng); break;
      case HeadMode::kSingleNoun: first_ = nn::Linear(name + ".noun", cfg.embed_dim, cfg.num_nouns, rng); break;
      case HeadMode::kMulti:
        first_ = nn::Linear(name + ".verb", cfg.embed_dim, cfg.num_verbs, rng);
        second_ = nn::Linear(name + ".noun", cfg.embed_dim, cfg.num_nouns, rng);
        break;
      case HeadMode::kAdg: first_ = nn::Linear(name + ".action", cfg.embed_dim, cfg.num_actions, rng); break;
    }
  }

  /// rows×d_e embeddings → rows×logit_width.
  nn::Var forward(nn::Graph& g, nn::Var embedding) {
    if (embedding.cols() != cfg_.embed_dim)
      throw std::invalid_argument("TaskHead: embedding width " + std::to_string(embedding.cols()) + ", expected " +
                                  std::to_string(cfg_.embed_dim));
    nn::Var a = first_.forward(g, embedding);
    if (cfg_.mode != HeadMode::kMulti) return a;
    return ag::concat_cols({a, second_.forward(g, embedding)});
  }

  const HeadConfig& config() const { return cfg_; }

  nn::ParameterList parameters() {
    nn::ParameterList p = first_.parameters();
    if (cfg_.mode == HeadMode::kMulti) nn::append(p, second_.parameters());
    return p;
  }

 private:
  HeadConfig cfg_;
  nn::Linear first_, second_;
};

/// Lowest index wins ties.
inline int argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

/// Works on logits or on (aggregated) probabilities: only per-block argmax matters.
inline ActionPrediction decode(const HeadConfig& cfg, std::span<const double> scores, const ActionDictionary& dict) {
  if (static_cast<int>(scores.size()) != cfg.logit_width())
    throw std::invalid_argument("decode: expected " + std::to_string(cfg.logit_width()) + " scores, got " +
                                std::to_string(scores.size()));
  ActionPrediction p;
  p.logits.assign(scores.begin(), scores.end());
  switch (cfg.mode) {
    case HeadMode::kAdg: {
      const int a = argmax(scores);
      const VerbNoun vn = dict.action_to_pair(a);
      p.verb = vn.verb;
      p.noun = vn.noun;
      p.action = a;
      break;
    }
    case HeadMode::kMulti:
      p.verb = argmax(scores.subspan(0, static_cast<std::size_t>(cfg.num_verbs)));
      p.noun = argmax(scores.subspan(static_cast<std::size_t>(cfg.num_verbs)));
      p.action = dict.pair_to_action(p.verb, p.noun);
      break;
    case HeadMode::kSingleVerb: p.verb = argmax(scores); break;
    case HeadMode::kSingleNoun: p.noun = argmax(scores); break;
  }
  return p;
}

/// Combines the outputs of the separate verb and noun models.
inline ActionPrediction merge_single_task(const ActionPrediction& verb_model, const ActionPrediction& noun_model,
                                          const ActionDictionary& dict) {
  ActionPrediction p;
  p.verb = verb_model.verb;
  p.noun = noun_model.noun;
  p.action = dict.pair_to_action(p.verb, p.noun);
  p.logits = verb_model.logits;
  p.logits.insert(p.logits.end(), noun_model.logits.begin(), noun_model.logits.end());
  return p;
}

inline std::vector<double> softmax(std::span<const double> x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
  for (double& v : out) v /= z;
  return out;
}

/// Softmax per output block (the verb and noun blocks separately in multi mode).
inline std::vector<double> head_probabilities(const HeadConfig& cfg, std::span<const double> logits) {
  if (cfg.mode != HeadMode::kMulti) return softmax(logits);
  std::vector<double> v = softmax(logits.subspan(0, static_cast<std::size_t>(cfg.num_verbs)));
  std::vector<double> n = softmax(logits.subspan(static_cast<std::size_t>(cfg.num_verbs)));
  v.insert(v.end(), n.begin(), n.end());
  return v;
}

/// Cross-entropy for the mode; multi mode sums the verb and noun terms.
inline nn::Var supervised_loss(const HeadConfig& cfg, nn::Var logits, std::span<const ActionTarget> targets) {
  if (logits.cols() != cfg.logit_width()) throw std::invalid_argument("supervised_loss: logit width mismatch");
  std::vector<int> verbs, nouns, actions;
  for (const ActionTarget& t : targets) {
    verbs.push_back(t.verb);
    nouns.push_back(t.noun);
    actions.push_back(t.action);
  }
  switch (cfg.mode) {
    case HeadMode::kSingleVerb: return ag::cross_entropy(logits, verbs);
    case HeadMode::kSingleNoun: return ag::cross_entropy(logits, nouns);
    case HeadMode::kAdg: return ag::cross_entropy(logits, actions);
    case HeadMode::kMulti: {
      nn::Var v = ag::cross_entropy(ag::slice_cols(logits, 0, cfg.num_verbs), verbs);
      nn::Var n = ag::cross_entropy(ag::slice_cols(logits, cfg.num_verbs, cfg.num_nouns), nouns);
      return ag::add(v, n);
    }
  }
  throw std::logic_error("unreachable");
}

/// Anticipation pairs clip i with the label of clip i+1 in the same stream;
/// the final clip of a stream has no successor and is dropped.
template <typename Label>
std::vector<Label> anticipation_targets(std::span<const Label> stream) {
  if (stream.size() < 2) return {};
  return std::vector<Label>(stream.begin() + 1, stream.end());
}

/// Trainable parameters of the full system for a head design: single-task
/// needs two encoders (one per model), the others share one.
inline std::size_t system_param_count(HeadMode mode, int embed_dim, int num_verbs, int num_nouns, int num_actions,
                                      std::size_t encoder_params) {
  auto head = [&](int classes) { return static_cast<std::size_t>(embed_dim) * classes + classes; };
  switch (mode) {
    case HeadMode::kSingleVerb:
    case HeadMode::kSingleNoun: return 2 * encoder_params + head(num_verbs) + head(num_nouns);
    case HeadMode::kMulti: return encoder_params + head(num_verbs) + head(num_nouns);
    case HeadMode::kAdg: return encoder_params + head(num_actions);
  }
  return 0;
}

}  // namespace t3kit
