#include <gtest/gtest.h>

#include "conversation_suite.hpp"

using namespace testing_support;

TEST(Conversations, FixtureHasEnoughCoverage) {
  auto all = load_conversations();
  EXPECT_GE(all.size(), 10u);
  std::set<std::string> flows;
  for (const auto& c : all) flows.insert(c.at("flow").get<std::string>());
  EXPECT_EQ(flows.size(), 3u);
}

TEST(Conversations, EveryTurnMatchesItsTrace) {
  for (const auto& c : load_conversations()) {
    auto o = replay_conversation(c);
    EXPECT_EQ(o.turns, c.at("turns").size()) << o.name;
    for (const auto& f : o.failures) ADD_FAILURE() << o.name << ": " << f;
  }
}
