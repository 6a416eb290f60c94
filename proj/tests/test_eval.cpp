#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace testing_support;
using backend::MockBackend;
using backend::MockEntry;
using backend::Purpose;

namespace {

using Table = std::map<std::string, json>;

MockEntry no_intent() { return MockEntry{Purpose::intent, std::string("intent"), {}, "none", std::nullopt, 0}; }

void expect_table(const chief::ChiefGraph& g, const std::string& target, const Table& expected) {
  auto program = compiler::compile(g);
  for (const auto& [var, rule] : program.helper_rules) {
    auto it = expected.find(var);
    json want = it == expected.end() ? json(nullptr) : it->second;
    EXPECT_EQ(eval::approx_value_at(g, target, var), want) << target << " / " << var;
  }
}

std::string ref_for(const json& args) { return "REF-" + util::sha256_hex(util::canonical_dump(args)).substr(0, 6); }

}  // namespace

TEST(DfsPath, FirstPathInDocumentOrder) {
  auto g = load_graph("restaurant.json");
  auto p = eval::dfs_path(g, "done");
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0]->target, "offer");
  EXPECT_EQ(p[1]->target, "book");
  EXPECT_EQ(p[2]->target, "done");
  EXPECT_TRUE(eval::dfs_path(g, "ask").empty());
}

TEST(Polarity, CueWords) {
  EXPECT_EQ(eval::condition_polarity("the user confirms the booking"), "yes");
  EXPECT_EQ(eval::condition_polarity("the user declines the booking"), "no");
  EXPECT_EQ(eval::condition_polarity("the user does not confirm"), "no");
  EXPECT_EQ(eval::condition_polarity("the user wants pizza"), std::nullopt);
  EXPECT_EQ(eval::condition_polarity(std::nullopt), std::nullopt);
}

TEST(Approx, TaxiTable) {
  auto g = load_graph("taxi.json");
  expect_table(g, "n1", {});
  expect_table(g, "n2", {{"action_n2", nullptr}, {"inform_n3", nullptr}});
  expect_table(g, "n3", {{"action_n2", eval::kExecuted}, {"inform_n3", false}});
}

TEST(Approx, ConfirmBranchingTable) {
  auto g = load_graph("restaurant.json");
  expect_table(g, "ask", {});
  expect_table(g, "offer", {{"inform_offer", false}, {"answered_offer", false}});
  expect_table(g, "book", {{"inform_offer", true}, {"answered_offer", "yes"}, {"action_book", nullptr}});
  expect_table(g, "done",
               {{"inform_offer", true}, {"answered_offer", "yes"}, {"action_book", eval::kExecuted}, {"inform_done", false}});
  expect_table(g, "cancelled", {{"inform_offer", true}, {"answered_offer", "no"}, {"inform_cancelled", false}});
}

TEST(Approx, ThroughActionMapping) {
  auto g = load_graph("taxi.json");
  std::map<std::string, std::optional<std::string>> m{{"book", "n3"}, {"chitchat", std::nullopt}};
  EXPECT_EQ(eval::approx_wizard_state(g, m, "book", "action_n2"), eval::kExecuted);
  EXPECT_THROW(eval::approx_wizard_state(g, m, "chitchat", "action_n2"), eval::UnmappedAction);
  EXPECT_THROW(eval::approx_wizard_state(g, m, "weather", "action_n2"), eval::UnmappedAction);
}

TEST(Approx, UnreachableTarget) {
  auto g = load_graph("taxi.json");
  g.edges.pop_back();
  EXPECT_THROW(eval::approx_value_at(g, "n3", "inform_n3"), eval::NoPath);
  EXPECT_THROW(eval::approx_value_at(g, "n7", "inform_n3"), chief::UnknownNode);
}

TEST(Approx, Deterministic) {
  auto g = load_graph("restaurant.json");
  for (int i = 0; i < 5; ++i) EXPECT_EQ(eval::approx_value_at(g, "cancelled", "answered_offer"), json("no"));
}

TEST(Dialogues, JsonlRoundTrip) {
  auto ds = eval::load_dialogues(fixture_path("taxi_dialogues.jsonl"));
  ASSERT_EQ(ds.size(), 10u);
  for (const auto& d : ds) {
    auto again = eval::dialogue_from_json(eval::to_json(d));
    EXPECT_EQ(eval::to_json(again), eval::to_json(d));
  }
  std::istringstream bad("{\"id\": 1}\n");
  EXPECT_THROW(eval::load_dialogues(bad), Error);
}

TEST(Evaluate, ThreeTurnDialogueAllCorrect) {
  auto g = load_graph("taxi.json");
  auto p = compiler::compile(g);
  MockBackend mock({no_intent()});
  script_dst(mock, p, {{"departure", "Downtown"}});
  script_dst(mock, p, {{"departure", "Downtown"}, {"time", "12:00"}});
  auto ref = ref_for({{"arrival", nullptr}, {"departure", "Downtown"}, {"time", "12:00"}});
  eval::GroundTruthDialogue d{"d", "taxi",
                              {{"hi", "Hello! How can I help you today?", "greet", std::nullopt},
                               {"from Downtown", "Could you please tell me the time?", "ask", std::nullopt},
                               {"at 12:00", "Your taxi is booked with reference number " + ref, "book", std::nullopt}},
                              {{"greet", "hello"}, {"ask", "n1"}, {"book", "n3"}}};
  auto rep = eval::evaluate(p, g, {d}, mock, fixture_registry());
  EXPECT_DOUBLE_EQ(rep.actions.micro_f1, 100);
  EXPECT_DOUBLE_EQ(rep.actions.accuracy, 100);
  EXPECT_DOUBLE_EQ(rep.bleu, 100);
  EXPECT_EQ(rep.api_calls, 1u);
  EXPECT_DOUBLE_EQ(rep.api_precision(), 100);
  for (const auto& [kind, e] : rep.state_errors) EXPECT_EQ(e.wrong, 0u) << kind;
}

TEST(Evaluate, FixtureTaskMatchesConfusionMatrix) {
  auto g = load_graph("taxi.json");
  auto p = compiler::compile(g);
  auto ds = eval::load_dialogues(fixture_path("taxi_dialogues.jsonl"));
  MockBackend mock({no_intent()});
  for (int k = 0; k < 10; ++k) {
    if (k == 7) {
      MockEntry fail = MockEntry::reply_to(Purpose::value_from_instruction, "departure", "");
      fail.error = "ServerError";
      mock.add(fail);
    } else if (k == 9) {
      script_dst(mock, p, {{"departure", "Downtown"}, {"time", "12:00"}});
    } else {
      script_dst(mock, p, {{"departure", "Downtown"}});
    }
  }
  auto rep = eval::evaluate(p, g, ds, mock, fixture_registry());
  ASSERT_EQ(rep.turns.size(), 20u);

  // Confusion matrix (gold -> predicted), counted by hand from the fixture:
  //   hello -> hello 10, n1 -> n1 6, n3 -> n1 1, n3 -> (failed) 1, n3 -> n3 1.
  // The chitchat turn has no mapped label and is not scored.
  EXPECT_EQ(rep.actions.turns, 19u);
  EXPECT_EQ(rep.actions.correct, 17u);
  double precision = 17.0 / 18, recall = 17.0 / 19;
  EXPECT_NEAR(rep.actions.micro_f1, 100 * 2 * precision * recall / (precision + recall), 1e-9);
  EXPECT_NEAR(rep.actions.accuracy, 100.0 * 17 / 19, 1e-9);

  EXPECT_TRUE(rep.turns[15].error.has_value());
  EXPECT_EQ(rep.turns[15].predicted_action, "");
  EXPECT_EQ(rep.turns[19].api_calls, std::vector<std::string>{"n2"});
  EXPECT_EQ(rep.api_correct, 1u);

  // Gold states on 16 turns; only d5 disagrees (departure).
  ASSERT_TRUE(rep.jga.has_value());
  EXPECT_NEAR(*rep.jga, 100.0 * 15 / 16, 1e-9);

  std::vector<std::string> hyps, refs;
  for (const auto& t : rep.turns) hyps.push_back(t.predicted_utterance), refs.push_back(t.reference);
  EXPECT_DOUBLE_EQ(rep.bleu, metrics::bleu4(hyps, refs));

  auto j = eval::to_json(rep);
  EXPECT_EQ(j["aggregates"]["scored_turns"], 19);
  EXPECT_EQ(j["turns"].size(), 20u);
  auto csv = eval::to_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_TRUE(util::contains(eval::summary_table(rep), "micro F1"));
}

TEST(Evaluate, ParallelMatchesSerial) {
  auto g = load_graph("taxi.json");
  auto p = compiler::compile(g);
  auto ds = eval::load_dialogues(fixture_path("taxi_dialogues.jsonl"));
  ds.resize(6);
  // Order-independent script: every dialogue sees the same replies.
  MockBackend mock({no_intent(), MockEntry::reply_to(Purpose::value_from_instruction, "departure", "Downtown", 0)});
  mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "arrival", "None", 0));
  mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "time", "None", 0));
  auto serial = eval::evaluate(p, g, ds, mock, fixture_registry());
  eval::EvalOptions opt;
  opt.parallelism = 3;
  auto parallel = eval::evaluate(p, g, ds, mock, fixture_registry(), opt);
  EXPECT_EQ(eval::to_json(serial), eval::to_json(parallel));
}

TEST(Evaluate, OracleStateOverwritesSlots) {
  auto g = load_graph("taxi.json");
  auto p = compiler::compile(g);
  // The agent hears nothing, but the gold state says departure is known:
  // with the oracle the second turn asks only for the time.
  eval::GroundTruthDialogue d{"o", "taxi",
                              {{"taxi please", "Where from?", "ask", metrics::SlotState{{"departure", "Downtown"}}},
                               {"soon", "What time?", "ask", std::nullopt}},
                              {{"ask", "n1"}}};
  auto run = [&](bool oracle) {
    MockBackend mock({no_intent()});
    script_dst(mock, p, {});
    script_dst(mock, p, {});
    eval::EvalOptions opt;
    opt.oracle_state = oracle;
    opt.runtime.dst_skip_filled = true;
    return eval::evaluate(p, g, {d}, mock, fixture_registry(), opt);
  };
  auto with = run(true);
  EXPECT_EQ(with.turns[1].predicted_state.at("departure"), json("Downtown"));
  EXPECT_EQ(with.turns[1].predicted_utterance, "Could you please tell me the time?");
  auto without = run(false);
  EXPECT_EQ(without.turns[1].predicted_state.at("departure"), json(nullptr));
}

TEST(StateErrors, PerfectRunIsZero) {
  auto g = load_graph("restaurant.json");
  auto p = compiler::compile(g);
  MockBackend mock({no_intent()});
  script_dst(mock, p, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  eval::GroundTruthDialogue d{"r", "restaurant",
                              {{"Pizza Hut for 2", "A table for 2 at Pizza Hut is available. Shall I book it?", "offer",
                                metrics::SlotState{{"restaurant", "Pizza Hut"}, {"people", "2"}}}},
                              {{"offer", "offer"}}};
  auto rates = eval::state_error_report(p, g, {d}, mock, fixture_registry());
  ASSERT_FALSE(rates.empty());
  for (const auto& [kind, r] : rates) EXPECT_EQ(r, 0.0) << kind;
}

TEST(StateErrors, InjectedHelperError) {
  auto g = load_graph("taxi.json");
  auto p = compiler::compile(g);
  // The wizard is still collecting details at n1, but the agent books: its
  // action_n2 is set where the approximation says null.
  MockBackend mock({no_intent()});
  script_dst(mock, p, {{"departure", "Downtown"}, {"time", "12:00"}});
  eval::GroundTruthDialogue d{"x", "taxi", {{"Downtown at noon", "Where to?", "ask", std::nullopt}}, {{"ask", "n1"}}};
  auto rep = eval::evaluate(p, g, {d}, mock, fixture_registry());
  EXPECT_EQ(rep.state_errors.at("external_action").compared, 1u);
  EXPECT_EQ(rep.state_errors.at("external_action").wrong, 1u);
  EXPECT_EQ(rep.state_errors.at("inform").wrong, 1u);
  EXPECT_EQ(rep.api_calls, 1u);
  EXPECT_EQ(rep.api_correct, 0u);
}
