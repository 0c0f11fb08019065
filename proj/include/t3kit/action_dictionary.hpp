// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/csv.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace t3kit {

struct VerbNoun {
  int verb = 0;
  int noun = 0;

  friend bool operator==(const VerbNoun&, const VerbNoun&) = default;
};

inline std::string to_string(const VerbNoun& p) {
  return "(" + std::to_string(p.verb) + ", " + std::to_string(p.noun) + ")";
}

/// Dense id ↔ unique name mapping for one label space (verbs, nouns or actions).
class LabelSpace {
 public:
  LabelSpace() = default;

  /// Anonymous space of `size` labels named by their id.
  static LabelSpace numbered(int size) {
    std::vector<std::string> names;
    for (int i = 0; i < size; ++i) names.push_back(std::to_string(i));
    return LabelSpace(std::move(names));
  }

  explicit LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!by_name_.emplace(names_[i], static_cast<int>(i)).second)
        throw std::invalid_argument("duplicate label name '" + names_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> by_name_;
};

/// Bijection between unified action ids and (verb, noun) pairs. Action ids
/// follow the order of the pairs given at construction. Immutable once built.
class ActionDictionary {
 public:
  ActionDictionary() = default;

  /// Fails on a duplicate pair or a verb/noun id outside the label spaces.
  static ActionDictionary build(std::span<const VerbNoun> pairs, int num_verbs, int num_nouns) {
    return build(pairs, LabelSpace::numbered(num_verbs), LabelSpace::numbered(num_nouns), {});
  }

  static ActionDictionary build(std::span<const VerbNoun> pairs, LabelSpace verbs, LabelSpace nouns,
                                std::vector<std::string> action_names) {
    if (verbs.size() <= 0 || nouns.size() <= 0) throw std::invalid_argument("empty verb or noun label space");
    ActionDictionary d;
    d.verbs_ = std::move(verbs);
    d.nouns_ = std::move(nouns);
    d.inverse_.assign(static_cast<std::size_t>(d.verbs_.size()) * static_cast<std::size_t>(d.nouns_.size()), -1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const VerbNoun& p = pairs[i];
      if (p.verb < 0 || p.verb >= d.verbs_.size())
        throw std::invalid_argument("action " + std::to_string(i) + " references unknown verb id " +
                                    std::to_string(p.verb));
      if (p.noun < 0 || p.noun >= d.nouns_.size())
        throw std::invalid_argument("action " + std::to_string(i) + " references unknown noun id " +
                                    std::to_string(p.noun));
      int& slot = d.inverse_[d.slot(p.verb, p.noun)];
      if (slot >= 0)
        throw std::invalid_argument("duplicate verb/noun pair " + to_string(p) + " at actions " +
                                    std::to_string(slot) + " and " + std::to_string(i));
      slot = static_cast<int>(i);
      d.forward_.push_back(p);
    }
    if (action_names.empty()) {
      for (const VerbNoun& p : d.forward_) action_names.push_back(d.verbs_.name(p.verb) + " " + d.nouns_.name(p.noun));
    }
    if (action_names.size() != d.forward_.size()) throw std::invalid_argument("action name count mismatch");
    d.actions_ = LabelSpace(std::move(action_names));
    return d;
  }

  int num_verbs() const { return verbs_.size(); }
  int num_nouns() const { return nouns_.size(); }
  int num_actions() const { return static_cast<int>(forward_.size()); }

  VerbNoun action_to_pair(int action) const {
    if (action < 0 || action >= num_actions())
      throw std::out_of_range("action id " + std::to_string(action) + " outside [0, " + std::to_string(num_actions()) +
                              ")");
    return forward_[static_cast<std::size_t>(action)];
  }

  /// Absent when the pair is not a dictionary action; throws only on ids
  /// outside the verb/noun spaces.
  std::optional<int> pair_to_action(int verb, int noun) const {
    if (verb < 0 || verb >= num_verbs()) throw std::out_of_range("verb id " + std::to_string(verb) + " out of range");
    if (noun < 0 || noun >= num_nouns()) throw std::out_of_range("noun id " + std::to_string(noun) + " out of range");
    const int a = inverse_[slot(verb, noun)];
    if (a < 0) return std::nullopt;
    return a;
  }

  const std::vector<VerbNoun>& pairs() const { return forward_; }
  const LabelSpace& verbs() const { return verbs_; }
  const LabelSpace& nouns() const { return nouns_; }
  const LabelSpace& actions() const { return actions_; }

 private:
  std::size_t slot(int verb, int noun) const {
    return static_cast<std::size_t>(verb) * static_cast<std::size_t>(num_nouns()) + static_cast<std::size_t>(noun);
  }

  LabelSpace verbs_, nouns_, actions_;
  std::vector<VerbNoun> forward_;
  std::vector<int> inverse_;
};

inline constexpr const char* kDictionaryHeader = "verb_class,verb,noun_class,noun,action_class,action";

namespace detail {
// Collects id→name for one label space, checking consistency and density.
inline LabelSpace collect_space(const std::vector<std::pair<int, std::string>>& seen, const char* what) {
  int max_id = -1;
  for (const auto& [id, _] : seen) max_id = std::max(max_id, id);
  std::vector<std::string> names(static_cast<std::size_t>(max_id + 1));
  std::vector<bool> present(names.size(), false);
  for (const auto& [id, name] : seen) {
    if (id < 0) throw std::invalid_argument(std::string("negative ") + what + " id");
    auto& slot = names[static_cast<std::size_t>(id)];
    if (present[static_cast<std::size_t>(id)] && slot != name)
      throw std::invalid_argument(std::string(what) + " id " + std::to_string(id) + " has two names: '" + slot +
                                  "' and '" + name + "'");
    slot = name;
    present[static_cast<std::size_t>(id)] = true;
  }
  for (std::size_t i = 0; i < present.size(); ++i)
    if (!present[i]) throw std::invalid_argument(std::string(what) + " ids are not dense: " + std::to_string(i) + " missing");
  return LabelSpace(std::move(names));
}
}  // namespace detail

/// Parses the dictionary CSV. Rows must list action_class 0, 1, 2, … in file
/// order, and verb/noun ids must each form a dense range.
inline ActionDictionary read_dictionary_csv(std::istream& in, const std::string& context = "dictionary") {
  const csv::Table t = csv::read(in, context);
  if (t.header != csv::split(kDictionaryHeader))
    throw std::invalid_argument(context + ": header must be '" + std::string(kDictionaryHeader) + "'");
  std::vector<std::pair<int, std::string>> verbs, nouns;
  std::vector<VerbNoun> pairs;
  std::vector<std::string> action_names;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const int v = static_cast<int>(csv::to_int(r[0], context + " verb_class"));
    const int n = static_cast<int>(csv::to_int(r[2], context + " noun_class"));
    const long a = csv::to_int(r[4], context + " action_class");
    if (a != static_cast<long>(i))
      throw std::invalid_argument(context + ": row " + std::to_string(i + 1) + " has action_class " + std::to_string(a) +
                                  ", expected " + std::to_string(i));
    verbs.emplace_back(v, r[1]);
    nouns.emplace_back(n, r[3]);
    pairs.push_back({v, n});
    action_names.push_back(r[5]);
  }
  return ActionDictionary::build(pairs, detail::collect_space(verbs, "verb"), detail::collect_space(nouns, "noun"),
                                 std::move(action_names));
}

inline ActionDictionary load_dictionary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dictionary file " + path);
  return read_dictionary_csv(in, path);
}

inline void write_dictionary_csv(std::ostream& out, const ActionDictionary& d) {
  out << kDictionaryHeader << '\n';
  for (int a = 0; a < d.num_actions(); ++a) {
    const VerbNoun p = d.action_to_pair(a);
    out << p.verb << ',' << d.verbs().name(p.verb) << ',' << p.noun << ',' << d.nouns().name(p.noun) << ',' << a << ','
        << d.actions().name(a) << '\n';
  }
}

}  // namespace t3kit
