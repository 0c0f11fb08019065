// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "t3kit/action_dictionary.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"

namespace t3kit {
namespace {

TEST(ActionDictionary, ReferenceSpotRows) {
  const ActionDictionary d = testing::reference_dictionary();
  EXPECT_EQ(d.num_verbs(), 41);
  EXPECT_EQ(d.num_nouns(), 45);
  EXPECT_EQ(d.num_actions(), 114);
  EXPECT_EQ(d.action_to_pair(0), (VerbNoun{4, 36}));
  EXPECT_EQ(d.action_to_pair(1), (VerbNoun{26, 28}));
  EXPECT_EQ(d.action_to_pair(2), (VerbNoun{33, 36}));
  EXPECT_EQ(d.action_to_pair(113), (VerbNoun{4, 0}));
  EXPECT_EQ(d.actions().name(0), "attach syringe");
  EXPECT_EQ(d.actions().name(1), "prep site");
  EXPECT_EQ(d.actions().name(2), "take kelly");
  EXPECT_EQ(d.actions().name(113), "attach ambubag");
  EXPECT_EQ(d.pair_to_action(4, 36), 0);
  EXPECT_EQ(d.pair_to_action(4, 0), 113);
}

TEST(ActionDictionary, Singleton) {
  const std::vector<VerbNoun> pairs{{0, 0}};
  const auto d = ActionDictionary::build(pairs, 1, 1);
  EXPECT_EQ(d.num_actions(), 1);
  EXPECT_EQ(d.action_to_pair(0), (VerbNoun{0, 0}));
  EXPECT_EQ(d.pair_to_action(0, 0), 0);
}

TEST(ActionDictionary, DuplicatePairIsRejectedByName) {
  const std::vector<VerbNoun> pairs{{0, 1}, {0, 1}};
  try {
    ActionDictionary::build(pairs, 2, 2);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(ActionDictionary, DanglingIdsAreRejected) {
  const std::vector<VerbNoun> bad_verb{{2, 0}};
  const std::vector<VerbNoun> bad_noun{{0, -1}};
  EXPECT_THROW(ActionDictionary::build(bad_verb, 2, 2), std::invalid_argument);
  EXPECT_THROW(ActionDictionary::build(bad_noun, 2, 2), std::invalid_argument);
}

TEST(ActionDictionary, OutOfRangeAction) {
  const auto d = testing::reference_dictionary();
  EXPECT_THROW(d.action_to_pair(114), std::out_of_range);
  EXPECT_THROW(d.action_to_pair(-1), std::out_of_range);
  EXPECT_THROW(d.pair_to_action(41, 0), std::out_of_range);
}

TEST(ActionDictionary, MissingPairIsAbsent) {
  const auto d = testing::reference_dictionary();
  int absent = 0;
  for (int v = 0; v < d.num_verbs(); ++v)
    for (int n = 0; n < d.num_nouns(); ++n) absent += d.pair_to_action(v, n).has_value() ? 0 : 1;
  EXPECT_EQ(absent, 41 * 45 - 114);
}

TEST(ActionDictionary, RoundTripOnRandomDictionaries) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 12), h = 1 + static_cast<int>(rng() % 12);
    std::vector<VerbNoun> all;
    for (int v = 0; v < k; ++v)
      for (int n = 0; n < h; ++n) all.push_back({v, n});
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(1 + rng() % all.size());
    const auto d = ActionDictionary::build(all, k, h);
    std::set<int> ids;
    for (int a = 0; a < d.num_actions(); ++a) {
      const VerbNoun p = d.action_to_pair(a);
      EXPECT_EQ(p, all[static_cast<std::size_t>(a)]);
      EXPECT_EQ(d.pair_to_action(p.verb, p.noun), a);
      ids.insert(a);
    }
    EXPECT_EQ(static_cast<int>(ids.size()), d.num_actions());
    // Rebuilding from the same ordered pairs is deterministic.
    EXPECT_EQ(ActionDictionary::build(all, k, h).pairs(), d.pairs());
  }
}

TEST(ActionDictionaryCsv, RoundTripsThroughFile) {
  const auto d = testing::reference_dictionary();
  std::stringstream ss;
  write_dictionary_csv(ss, d);
  const auto back = read_dictionary_csv(ss);
  EXPECT_EQ(back.pairs(), d.pairs());
  EXPECT_EQ(back.verbs().names(), d.verbs().names());
  EXPECT_EQ(back.actions().names(), d.actions().names());
}

TEST(ActionDictionaryCsv, RejectsInconsistentFiles) {
  auto parse = [](const std::string& body) {
    std::stringstream ss(std::string(kDictionaryHeader) + "\n" + body);
    return read_dictionary_csv(ss);
  };
  EXPECT_NO_THROW(parse("0,a,0,x,0,a x\n1,b,1,y,1,b y\n"));
  EXPECT_THROW(parse("0,a,0,x,1,a x\n"), std::invalid_argument);                 // action ids not in file order
  EXPECT_THROW(parse("0,a,0,x,0,a x\n0,b,1,y,1,b y\n"), std::invalid_argument);  // verb 0 named twice
  EXPECT_THROW(parse("1,a,0,x,0,a x\n"), std::invalid_argument);                 // verb ids not dense
  EXPECT_THROW(parse("0,a,0,x,0,a x\n0,a,0,x,1,again\n"), std::invalid_argument);  // duplicate pair
  std::stringstream bad_header("verb,noun\n");
  EXPECT_THROW(read_dictionary_csv(bad_header), std::invalid_argument);
}

}  // namespace
}  // namespace t3kit
