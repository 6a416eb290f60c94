#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace testing_support;
using backend::MockBackend;
using backend::MockEntry;
using backend::Purpose;
using runtime::ConversationState;
using runtime::TurnResult;

namespace {

MockEntry no_intent() { return MockEntry{Purpose::intent, std::string("intent"), {}, "none", std::nullopt, 0}; }

std::string taxi_ref(const json& args) { return "REF-" + util::sha256_hex(util::canonical_dump(args)).substr(0, 6); }

struct Harness {
  explicit Harness(const std::string& fixture)
      : graph(load_graph(fixture)), program(compiler::compile(graph)), registry(fixture_registry()),
        agent(program, mock, registry), state(runtime::initial_state(program)) {}

  TurnResult say(const std::string& text) {
    auto [r, s] = agent.run_turn(state, text);
    state = std::move(s);
    return r;
  }

  chief::ChiefGraph graph;
  ir::GuardrailProgram program;
  MockBackend mock;
  runtime::FunctionRegistry registry;
  runtime::Agent agent;
  ConversationState state;
};

}  // namespace

TEST(PostProcess, QuotesThenLiterals) {
  EXPECT_EQ(runtime::postprocess_value("\"London\""), json("London"));
  EXPECT_EQ(runtime::postprocess_value("42"), json(42));
  EXPECT_EQ(runtime::postprocess_value("3.5"), json(3.5));
  EXPECT_EQ(runtime::postprocess_value("\"True\""), json(true));
  EXPECT_EQ(runtime::postprocess_value("None"), json(nullptr));
  EXPECT_EQ(runtime::postprocess_value("Downtown Hotel"), json("Downtown Hotel"));
  EXPECT_EQ(runtime::postprocess_value("'12:00'\n"), json("12:00"));
  EXPECT_EQ(runtime::postprocess_value("\"unbalanced"), json("\"unbalanced"));
  EXPECT_EQ(runtime::postprocess_value(""), json(""));
}

TEST(External, BookTaxiStubIsStable) {
  auto reg = runtime::FunctionRegistry::with_stubs();
  ir::NodeAction a;
  a.kind = ir::NodeKind::external_action;
  a.function = "book_taxi";
  a.params = {{"departure", "departure"}, {"time", "time"}};
  ConversationState s;
  s.slots = {{"departure", "A"}, {"time", "12:00"}};
  auto v = runtime::run_external_action(a, s, reg);
  EXPECT_EQ(v, json(taxi_ref({{"departure", "A"}, {"time", "12:00"}})));
  EXPECT_EQ(v.get<std::string>().size(), 10u);
  EXPECT_EQ(runtime::run_external_action(a, s, reg), v);
  a.function = "teleport";
  EXPECT_THROW(runtime::run_external_action(a, s, reg), runtime::UnknownFunction);
}

TEST(External, FailureBecomesExternalActionError) {
  runtime::FunctionRegistry reg;
  reg.add("explode", [](const json&) -> json { throw std::runtime_error("kaput"); });
  ir::NodeAction a;
  a.kind = ir::NodeKind::external_action;
  a.function = "explode";
  EXPECT_THROW(runtime::run_external_action(a, {}, reg), runtime::ExternalActionError);
}

TEST(RunTurn, GlobalActionShortCircuits) {
  Harness h("taxi.json");
  auto r = h.say("hello");
  EXPECT_EQ(r.action, "hello");
  EXPECT_EQ(r.origin, "global");
  EXPECT_EQ(r.utterance, "Hello! How can I help you today?");
  EXPECT_TRUE(h.mock.call_log().empty());
  EXPECT_TRUE(r.state_delta.empty());
  EXPECT_EQ(h.state.history.size(), 2u);
}

TEST(RunTurn, TaxiAsksForTimeWhenOnlyDepartureKnown) {
  Harness h("taxi.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"departure", "Downtown"}});
  auto r = h.say("I need a taxi from Downtown");
  EXPECT_EQ(r.action, "n1");
  EXPECT_EQ(r.origin, "nap");
  EXPECT_EQ(r.utterance, "Could you please tell me the time?");
  EXPECT_EQ(h.state.slots.at("departure"), json("Downtown"));
  EXPECT_EQ(r.state_delta.at("departure"), (std::pair<json, json>{nullptr, "Downtown"}));
  EXPECT_EQ(h.mock.calls(Purpose::value_from_instruction), 3u);
}

TEST(RunTurn, TaxiBooksAndInformsInOneTurn) {
  Harness h("taxi.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"departure", "Downtown"}});
  h.say("I need a taxi from Downtown");
  script_dst(h.mock, h.program, {{"departure", "Downtown"}, {"time", "12:00"}});
  auto r = h.say("at 12:00 please");
  auto ref = taxi_ref({{"arrival", nullptr}, {"departure", "Downtown"}, {"time", "12:00"}});
  EXPECT_EQ(r.executed, (std::vector<std::string>{"n2", "n3"}));
  EXPECT_EQ(r.action, "n3");
  EXPECT_EQ(r.utterance, "Your taxi is booked with reference number " + ref);
  EXPECT_EQ(h.state.helpers.at("action_n2"), json(ref));
  EXPECT_EQ(h.state.helpers.at("inform_n3"), json(true));
  EXPECT_EQ(h.state.history.size(), 4u);
}

TEST(RunTurn, SlotChangeInvalidatesDependents) {
  Harness h("taxi.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"departure", "Downtown"}, {"time", "12:00"}});
  h.say("Downtown at noon");
  ASSERT_EQ(h.state.helpers.at("inform_n3"), json(true));
  script_dst(h.mock, h.program, {{"departure", "Station"}, {"time", "12:00"}});
  auto r = h.say("actually from the station");
  // Rebooked in the same turn: both helpers were reset, then re-established.
  EXPECT_EQ(r.executed, (std::vector<std::string>{"n2", "n3"}));
  auto ref = taxi_ref({{"arrival", nullptr}, {"departure", "Station"}, {"time", "12:00"}});
  EXPECT_EQ(h.state.helpers.at("action_n2"), json(ref));
  bool saw_reset = false;
  for (const auto& t : r.trace) saw_reset = saw_reset || (t.point == "dst:departure" && util::contains(t.outcome, "reset"));
  EXPECT_TRUE(saw_reset);
}

TEST(RunTurn, DstUpdateResetsHelpers) {
  Harness h("taxi.json");
  h.state.slots["departure"] = "Downtown";
  h.state.helpers["action_n2"] = "REF123";
  h.state.helpers["inform_n3"] = true;
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "departure", "\"Airport\""));
  auto [value, changed] = h.agent.dst_update(h.state, *h.program.dst_entry("departure"));
  EXPECT_EQ(value, json("Airport"));
  EXPECT_TRUE(changed);
  EXPECT_EQ(h.state.helpers.at("action_n2"), json(nullptr));
  EXPECT_EQ(h.state.helpers.at("inform_n3"), json(false));
}

TEST(RunTurn, DstPromptIsSystemPlusOneUserMessage) {
  Harness h("taxi.json");
  h.state.context_preamble = "Right now, it is Tuesday, 12 PM.";
  h.state.history.push_back({"user", "taxi to the airport"});
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "arrival", "Airport"));
  h.agent.dst_update(h.state, *h.program.dst_entry("arrival"));
  auto call = h.mock.call_log().at(0);
  EXPECT_TRUE(util::starts_with(call.system, "Right now, it is Tuesday, 12 PM."));
  auto hist = call.user.find("User: taxi to the airport");
  auto instr = call.user.find("Instruction: ");
  ASSERT_NE(hist, std::string::npos);
  ASSERT_NE(instr, std::string::npos);
  EXPECT_LT(hist, instr);
}

TEST(RunTurn, MissingPlaceholderLeftVerbatimWithWarning) {
  Harness h("taxi.json");
  h.state.slots = {{"departure", "A"}, {"arrival", nullptr}, {"time", "1"}};
  h.registry.add("book_taxi", [](const json&) { return json::object({{"other", 1}}); });
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"departure", "A"}, {"time", "1"}});
  auto r = h.say("go");
  EXPECT_EQ(r.utterance, "Your taxi is booked with reference number [ref_no]");
  bool warned = false;
  for (const auto& t : r.trace) warned = warned || t.outcome == "unresolved placeholder";
  EXPECT_TRUE(warned);
}

TEST(RunTurn, ConfirmYesBooks) {
  Harness h("restaurant.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  auto r = h.say("a table at Pizza Hut for 2");
  EXPECT_EQ(r.action, "offer");
  EXPECT_EQ(r.utterance, "A table for 2 at Pizza Hut is available. Shall I book it?");
  EXPECT_EQ(h.state.helpers.at("answered_offer"), json(false));

  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "answered_offer", "Yes"));
  script_bool(h.mock, "the user confirms the booking", true);
  script_bool(h.mock, "the user confirms the booking", true);
  r = h.say("yes please");
  EXPECT_EQ(h.state.helpers.at("answered_offer"), json("yes"));
  EXPECT_EQ(r.executed, (std::vector<std::string>{"book", "done"}));
  auto ref = h.state.helpers.at("action_book").get<std::string>();
  EXPECT_EQ(r.utterance, "Booked! Your reference is " + ref + ".");
  EXPECT_EQ(h.mock.pending(), 0u);
}

TEST(RunTurn, ConfirmNoRoutesToDeclineBranch) {
  Harness h("restaurant.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  h.say("a table at Pizza Hut for 2");
  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "answered_offer", "no"));
  script_bool(h.mock, "the user confirms the booking", false);
  script_bool(h.mock, "the user declines the booking", true);
  auto r = h.say("no thanks");
  EXPECT_EQ(r.action, "cancelled");
  EXPECT_EQ(r.utterance, "No problem, I did not make the booking.");
  EXPECT_EQ(h.state.helpers.at("action_book"), json(nullptr));
  std::vector<std::string> points;
  for (const auto& t : r.trace)
    if (util::starts_with(t.point, "edge:offer")) points.push_back(t.point + "=" + t.outcome);
  EXPECT_EQ(points, (std::vector<std::string>{"edge:offer->book=not taken", "edge:offer->cancelled=taken"}));
}

TEST(RunTurn, UnclearAnswerRepeatsQuestion) {
  Harness h("restaurant.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  h.say("a table at Pizza Hut for 2");
  script_dst(h.mock, h.program, {{"restaurant", "Pizza Hut"}, {"people", "2"}});
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "answered_offer", "maybe later"));
  auto r = h.say("hmm what time is it");
  EXPECT_EQ(r.action, "offer");
  EXPECT_EQ(h.state.helpers.at("answered_offer"), json(false));
}

TEST(RunTurn, NapNullTriggersFallback) {
  Harness h("bank.json");
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"account_id", "AC-1001"}});
  auto r = h.say("balance of AC-1001");
  EXPECT_EQ(r.utterance, "The balance of AC-1001 is 250 pounds.");
  script_dst(h.mock, h.program, {{"account_id", "AC-1001"}});
  h.mock.add(MockEntry::reply_to(Purpose::fallback_choice, "fallback", "goodbye"));
  r = h.say("that is all");
  EXPECT_EQ(r.origin, "fallback");
  EXPECT_TRUE(r.nap_null);
  EXPECT_EQ(r.action, "goodbye");
  EXPECT_EQ(r.utterance, "Goodbye!");
}

TEST(RunTurn, UnknownFallbackChoiceIsOutOfScope) {
  Harness h("bank.json");
  h.state.slots["account_id"] = "AC-1001";
  h.state.helpers = {{"action_lookup", 250}, {"inform_report", true}};
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"account_id", "AC-1001"}});
  h.mock.add(MockEntry::reply_to(Purpose::fallback_choice, "fallback", "sing a song"));
  auto r = h.say("tell me a joke");
  EXPECT_EQ(r.action, "out_of_scope");
  EXPECT_EQ(r.utterance, "Sorry, I can only check balances.");
}

TEST(RunTurn, FallbackChoosingNodeRunsItsAction) {
  Harness h("bank.json");
  h.state.slots["account_id"] = "AC-1001";
  h.state.helpers = {{"action_lookup", 250}, {"inform_report", true}};
  h.mock.add(no_intent());
  script_dst(h.mock, h.program, {{"account_id", "AC-1001"}});
  h.mock.add(MockEntry::reply_to(Purpose::fallback_choice, "fallback", "report"));
  auto r = h.say("say it again");
  EXPECT_EQ(r.origin, "fallback");
  EXPECT_EQ(r.executed, (std::vector<std::string>{"report"}));
  EXPECT_EQ(r.utterance, "The balance of AC-1001 is 250 pounds.");
}

TEST(RunTurn, BackendErrorCarriesPartialTrace) {
  Harness h("taxi.json");
  h.mock.add(no_intent());
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "departure", "Downtown"));
  h.mock.add(MockEntry{Purpose::value_from_instruction, std::string("arrival"), {}, "", std::string("upstream down"), 1});
  try {
    h.say("from Downtown");
    FAIL();
  } catch (const runtime::TurnError& e) {
    EXPECT_EQ(e.kind(), "BackendError");
    ASSERT_GE(e.trace().size(), 2u);
    EXPECT_EQ(e.trace()[1].point, "dst:departure");
  }
  EXPECT_EQ(h.state.history.size(), 0u);
}

TEST(RunTurn, SkipFilledOptionAvoidsRequery) {
  Harness h("taxi.json");
  runtime::Agent agent(h.program, h.mock, h.registry, {true, true, true});
  h.state.slots["departure"] = "Downtown";
  h.mock.add(no_intent());
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "arrival", "None"));
  h.mock.add(MockEntry::reply_to(Purpose::value_from_instruction, "time", "None"));
  agent.run_turn(h.state, "hm");
  EXPECT_EQ(h.mock.calls(Purpose::value_from_instruction), 2u);
}

TEST(RunTurn, DeterministicUnderScript) {
  auto run = [] {
    Harness h("taxi.json");
    h.mock.add(no_intent());
    script_dst(h.mock, h.program, {{"departure", "Downtown"}, {"time", "12:00"}});
    return runtime::to_json(h.say("Downtown at noon")).dump();
  };
  EXPECT_EQ(run(), run());
}

TEST(Replay, ApplyTurnReproducesState) {
  Harness h("taxi.json");
  h.mock.add(no_intent());
  auto replayed = runtime::initial_state(h.program);
  std::vector<std::pair<std::string, std::map<std::string, std::string>>> turns{
      {"from Downtown", {{"departure", "Downtown"}}}, {"at noon", {{"departure", "Downtown"}, {"time", "12:00"}}}};
  for (const auto& [text, values] : turns) {
    script_dst(h.mock, h.program, values);
    auto r = h.say(text);
    runtime::apply_turn(replayed, text, runtime::turn_result_from_json(runtime::to_json(r)));
  }
  EXPECT_EQ(replayed, h.state);
}
