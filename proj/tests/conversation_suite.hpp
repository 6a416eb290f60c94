#pragma once

// Replays the scripted conversations in fixtures/conversations.json and
// reports every mismatch against the hand-traced expectations.

#include <string>
#include <vector>

#include "test_support.hpp"

namespace testing_support {

struct ConversationOutcome {
  std::string name;
  std::size_t turns = 0;
  std::vector<std::string> failures;
};

inline json load_conversations() { return json::parse(read_file(fixture_path("conversations.json"))).at("conversations"); }

inline ConversationOutcome replay_conversation(const json& conv) {
  using backend::MockEntry;
  using backend::Purpose;
  ConversationOutcome out;
  out.name = conv.at("name").get<std::string>();
  auto program = compiler::compile(load_graph(conv.at("flow").get<std::string>()));
  auto registry = fixture_registry();
  backend::MockBackend mock;
  mock.add(MockEntry{Purpose::intent, std::string("intent"), {}, "none", std::nullopt, 0});
  runtime::Agent agent(program, mock, registry);
  auto state = runtime::initial_state(program);

  auto fail = [&](std::size_t i, const std::string& what, const json& got, const json& want) {
    out.failures.push_back("turn " + std::to_string(i + 1) + " " + what + ": got " + got.dump() + ", want " + want.dump());
  };

  const auto& turns = conv.at("turns");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& t = turns[i];
    const auto& want = t.at("expect");
    if (t.contains("dst")) {
      std::map<std::string, std::string> values;
      for (auto it = t["dst"].begin(); it != t["dst"].end(); ++it) values[it.key()] = it.value().get<std::string>();
      script_dst(mock, program, values);
    }
    if (t.contains("answers"))
      for (auto it = t["answers"].begin(); it != t["answers"].end(); ++it)
        mock.add(MockEntry::reply_to(Purpose::value_from_instruction, it.key(), it.value().get<std::string>()));
    for (const auto& n : t.value("nld", json::array())) script_bool(mock, n[0].get<std::string>(), n[1].get<bool>());
    if (t.contains("fallback")) mock.add(MockEntry::reply_to(Purpose::fallback_choice, "fallback", t["fallback"].get<std::string>()));

    mock.clear_log();
    runtime::TurnResult r;
    try {
      auto [res, next] = agent.run_turn(state, t.at("user").get<std::string>());
      r = std::move(res);
      state = std::move(next);
    } catch (const std::exception& e) {
      out.failures.push_back("turn " + std::to_string(i + 1) + " threw " + e.what());
      break;
    }
    ++out.turns;

    std::size_t dst_calls = 0;
    for (const auto& c : mock.call_log())
      dst_calls += c.purpose == Purpose::value_from_instruction && program.dst_entry(c.subject) != nullptr;

    if (r.action != want.at("action")) fail(i, "action", r.action, want["action"]);
    if (r.origin != want.at("origin")) fail(i, "origin", r.origin, want["origin"]);
    if (r.utterance != want.at("utterance")) fail(i, "utterance", r.utterance, want["utterance"]);
    if (r.nap_null != want.value("nap_null", false)) fail(i, "nap_null", r.nap_null, want.value("nap_null", false));
    if (want.contains("executed") && json(r.executed) != want["executed"]) fail(i, "executed", r.executed, want["executed"]);
    if (dst_calls != want.at("dst_calls").get<std::size_t>()) fail(i, "dst calls", dst_calls, want["dst_calls"]);
    if ((r.origin == "fallback") != r.nap_null) fail(i, "fallback without null NAP", r.origin, r.nap_null);
    if (mock.pending() != 0) fail(i, "unused script entries", mock.pending(), 0);
    auto got = runtime::to_json(state);
    for (const char* side : {"slots", "helpers"})
      if (got[side] != want.at("state").at(side)) fail(i, side, got[side], want["state"][side]);
  }
  return out;
}

}  // namespace testing_support
