// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace t3kit::text {

/// Lowercase, drop ASCII punctuation, split on whitespace.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Dense string ↔ id table in insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words) {
    for (auto& w : words) add(w);
  }

  int add(const std::string& w) {
    auto [it, inserted] = ids_.emplace(w, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(w);
    return it->second;
  }

  std::optional<int> find(const std::string& w) const {
    auto it = ids_.find(w);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& w) const {
    auto it = ids_.find(w);
    if (it == ids_.end()) throw std::out_of_range("unknown entry '" + w + "'");
    return it->second;
  }

  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

/// Question-token vocabulary with a reserved unknown token at id 0.
class TokenVocabulary {
 public:
  static constexpr const char* kUnk = "<unk>";

  TokenVocabulary() { vocab_.add(kUnk); }

  static TokenVocabulary from_words(const std::vector<std::string>& words) {
    TokenVocabulary v;
    for (const auto& w : words) v.vocab_.add(w);
    return v;
  }

  void add_sentence(std::string_view s) {
    for (const auto& t : tokenize(s)) vocab_.add(t);
  }

  std::vector<int> encode(std::string_view s) const {
    std::vector<int> ids;
    for (const auto& t : tokenize(s)) ids.push_back(vocab_.find(t).value_or(kUnkId));
    return ids;
  }

  static constexpr int kUnkId = 0;
  int size() const { return vocab_.size(); }
  const std::vector<std::string>& words() const { return vocab_.words(); }

 private:
  Vocabulary vocab_;
};

}  // namespace t3kit::text
