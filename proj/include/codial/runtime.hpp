#pragma once

// Turn-by-turn interpreter for GuardrailProgram:
//   user input -> global intent -> DST over all slots (+ invalidation)
//   -> pending confirmations -> NAP tree walk -> helper updates -> fallback

#include <charconv>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "codial/backend.hpp"
#include "codial/program.hpp"
#include "codial/util.hpp"

namespace codial::runtime {

using backend::Backend;
using backend::Purpose;
using ir::GuardrailProgram;

// ---------------------------------------------------------------------------
// State and results

struct Message {
  std::string speaker;  // "user" | "bot"
  std::string text;
  bool operator==(const Message&) const = default;
};

struct ConversationState {
  std::vector<Message> history;
  std::map<std::string, json> slots;
  std::map<std::string, json> helpers;
  std::string context_preamble;

  json get(const std::string& var) const {
    if (auto it = slots.find(var); it != slots.end()) return it->second;
    if (auto it = helpers.find(var); it != helpers.end()) return it->second;
    return nullptr;
  }

  bool operator==(const ConversationState&) const = default;
};

inline ConversationState initial_state(const GuardrailProgram& p, std::string context_preamble = {}) {
  ConversationState s;
  std::set<std::string> slot_names;
  for (const auto& e : p.dst_table) slot_names.insert(e.slot);
  for (const auto& e : p.init_block) {
    if (slot_names.count(e.var) || !ir::parse_helper(e.var)) s.slots[e.var] = e.value;
    else s.helpers[e.var] = e.value;
  }
  s.context_preamble = std::move(context_preamble);
  return s;
}

struct TraceStep {
  std::string point;
  std::string predicate;
  std::string outcome;
  bool operator==(const TraceStep&) const = default;
};

using Trace = std::vector<TraceStep>;

struct TurnResult {
  std::string action;
  std::string origin;  // "global" | "nap" | "fallback"
  std::string utterance;
  std::vector<std::string> executed;  // nodes whose actions ran this turn, in order
  bool nap_null = false;              // the last NAP walk of the turn found no node
  std::map<std::string, std::pair<json, json>> state_delta;
  Trace trace;
  bool operator==(const TurnResult&) const = default;
};

inline json to_json(const Trace& t) {
  json out = json::array();
  for (const auto& s : t) out.push_back({{"point", s.point}, {"predicate", s.predicate}, {"outcome", s.outcome}});
  return out;
}

inline json to_json(const TurnResult& r) {
  json delta = json::object();
  for (const auto& [k, v] : r.state_delta) delta[k] = {{"old", v.first}, {"new", v.second}};
  return {{"action", r.action}, {"origin", r.origin},     {"utterance", r.utterance}, {"executed", r.executed},
          {"nap_null", r.nap_null}, {"state_delta", delta}, {"trace", to_json(r.trace)}};
}

inline TurnResult turn_result_from_json(const json& j) {
  TurnResult r;
  r.action = j.at("action").get<std::string>();
  r.origin = j.at("origin").get<std::string>();
  r.utterance = j.at("utterance").get<std::string>();
  r.executed = j.value("executed", std::vector<std::string>{});
  r.nap_null = j.value("nap_null", false);
  for (auto it = j.at("state_delta").begin(); it != j.at("state_delta").end(); ++it)
    r.state_delta[it.key()] = {it->at("old"), it->at("new")};
  for (const auto& s : j.at("trace"))
    r.trace.push_back({s.at("point").get<std::string>(), s.at("predicate").get<std::string>(), s.at("outcome").get<std::string>()});
  return r;
}

inline json to_json(const ConversationState& s) {
  json history = json::array();
  for (const auto& m : s.history) history.push_back({{"speaker", m.speaker}, {"text", m.text}});
  return {{"history", history}, {"slots", s.slots}, {"helpers", s.helpers}, {"context_preamble", s.context_preamble}};
}

inline ConversationState state_from_json(const json& j) {
  ConversationState s;
  for (const auto& m : j.at("history")) s.history.push_back({m.at("speaker").get<std::string>(), m.at("text").get<std::string>()});
  for (auto it = j.at("slots").begin(); it != j.at("slots").end(); ++it) s.slots[it.key()] = it.value();
  for (auto it = j.at("helpers").begin(); it != j.at("helpers").end(); ++it) s.helpers[it.key()] = it.value();
  s.context_preamble = j.value("context_preamble", "");
  return s;
}

// Replays a recorded turn onto `state` without consulting any backend.
inline void apply_turn(ConversationState& state, const std::string& user_text, const TurnResult& r) {
  state.history.push_back({"user", user_text});
  for (const auto& [var, change] : r.state_delta) {
    if (state.slots.count(var)) state.slots[var] = change.second;
    else state.helpers[var] = change.second;
  }
  state.history.push_back({"bot", r.utterance});
}

// ---------------------------------------------------------------------------
// Errors

class UnknownFunction : public Error {
 public:
  explicit UnknownFunction(const std::string& name) : Error("UnknownFunction", "no registered function " + name) {}
};

class ExternalActionError : public Error {
 public:
  explicit ExternalActionError(const std::string& msg) : Error("ExternalActionError", msg) {}
};

// A failed turn. kind() is the underlying error class; the trace holds the
// steps completed before the failure.
class TurnError : public Error {
 public:
  TurnError(std::string kind, const std::string& msg, Trace trace, int status = 0)
      : Error(std::move(kind), msg), trace_(std::move(trace)), status_(status) {}
  const Trace& trace() const noexcept { return trace_; }
  int status() const noexcept { return status_; }

 private:
  Trace trace_;
  int status_;
};

// ---------------------------------------------------------------------------
// External functions

using ExternalFunction = std::function<json(const json& args)>;

class FunctionRegistry {
 public:
  void add(std::string name, ExternalFunction fn) { fns_[std::move(name)] = std::move(fn); }
  const ExternalFunction* find(const std::string& name) const {
    auto it = fns_.find(name);
    return it == fns_.end() ? nullptr : &it->second;
  }

  // Deterministic stand-ins used by tests and the demo flows.
  static FunctionRegistry with_stubs() {
    FunctionRegistry r;
    r.add("book_taxi", [](const json& args) { return json("REF-" + util::sha256_hex(util::canonical_dump(args)).substr(0, 6)); });
    return r;
  }

 private:
  std::map<std::string, ExternalFunction> fns_;
};

inline json run_external_action(const ir::NodeAction& action, const ConversationState& state,
                                const FunctionRegistry& registry) {
  const ExternalFunction* fn = registry.find(action.function);
  if (!fn) throw UnknownFunction(action.function);
  json args = json::object();
  for (const auto& [param, slot] : action.params) args[param] = state.get(slot);
  json result;
  try {
    result = (*fn)(args);
  } catch (const std::exception& e) {
    throw ExternalActionError(action.function + " failed: " + e.what());
  }
  if (result.is_null()) throw ExternalActionError(action.function + " returned no value");
  return result;
}

// ---------------------------------------------------------------------------
// Value post-processing

namespace detail {

inline std::optional<json> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  bool digits = false, dot = false, exp = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) digits = true;
    else if (c == '.' && !dot && !exp) dot = true;
    else if ((c == 'e' || c == 'E') && digits && !exp) {
      exp = true;
      if (i + 1 < s.size() && (s[i + 1] == '+' || s[i + 1] == '-')) ++i;
      digits = false;
    } else return std::nullopt;
  }
  if (!digits) return std::nullopt;
  const char* b = s.data() + (s[0] == '+' ? 1 : 0);
  const char* e = s.data() + s.size();
  if (!dot && !exp) {
    long long v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec == std::errc() && p == e) return json(v);
  }
  try {
    return json(std::stod(std::string(b, e)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Reply -> typed value: strip one surrounding quote pair, then read the rest
// as a literal (number, True/False, None), else keep it as text.
inline json postprocess_value(std::string_view raw) {
  auto text = util::strip_quotes(util::trim(raw));
  if (text == "None" || text == "null") return nullptr;
  if (text == "True" || text == "true") return true;
  if (text == "False" || text == "false") return false;
  if (auto n = detail::parse_number(text)) return *n;
  return text;
}

inline std::string normalize_answer(std::string_view reply) {
  auto ws = util::words(reply);
  if (ws.empty()) return "other";
  static const std::set<std::string> yes{"yes", "y", "true", "confirm", "confirmed", "accept", "accepted", "agree"};
  static const std::set<std::string> no{"no", "n", "false", "decline", "declined", "reject", "rejected", "deny"};
  if (yes.count(ws[0])) return "yes";
  if (no.count(ws[0])) return "no";
  return "other";
}

// ---------------------------------------------------------------------------
// Agent

struct RuntimeOptions {
  bool dst_skip_filled = false;       // skip DST for slots that already hold a value
  bool intent_backend_stage = true;   // ask the backend when no trigger matches
  bool chain_external_actions = true; // walk NAP again after an external action ran
};

struct NapResult {
  const ir::DecisionNode* node = nullptr;
};

class Agent {
 public:
  Agent(const GuardrailProgram& program, Backend& backend, const FunctionRegistry& registry, RuntimeOptions options = {})
      : program_(program), backend_(backend), registry_(registry), options_(options) {
    ir::for_each_check(program_.nap_tree, [&](const ir::DecisionNode& d) { index_.emplace(d.node_id, &d); });
  }

  const GuardrailProgram& program() const { return program_; }

  std::pair<TurnResult, ConversationState> run_turn(const ConversationState& before, std::string_view utterance) const {
    if (util::trim(utterance).empty()) throw Error("InvalidArgument", "empty user utterance");
    ConversationState s = before;
    TurnResult r;
    s.history.push_back({"user", std::string(utterance)});
    try {
      turn_body(s, std::string(utterance), r);
    } catch (const backend::BackendError& e) {
      throw TurnError(e.kind(), e.what(), r.trace, e.status());
    } catch (const TurnError&) {
      throw;
    } catch (const Error& e) {
      throw TurnError(e.kind(), e.what(), r.trace);
    }
    s.history.push_back({"bot", r.utterance});
    for (const auto* side : {&s.slots, &s.helpers})
      for (const auto& [var, value] : *side) {
        json old = before.get(var);
        if (old != value) r.state_delta[var] = {old, value};
      }
    return {std::move(r), std::move(s)};
  }

  // One DST step for `entry`: query, post-process, store, invalidate dependents.
  std::pair<json, bool> dst_update(ConversationState& s, const ir::DstEntry& entry) const {
    std::string user = "Conversation history:\n" + history_text(s) + "\n\nInstruction: " + entry.instruction;
    auto reply = backend_.complete(backend::make_request(Purpose::value_from_instruction, system_message(s), user, entry.slot));
    json value = postprocess_value(reply);
    json old = s.get(entry.slot);
    bool changed = value != old;
    s.slots[entry.slot] = value;
    if (changed)
      for (const auto& h : entry.invalidates) {
        auto ref = ir::parse_helper(h);
        if (ref && s.helpers.count(h)) s.helpers[h] = ir::helper_reset_value(ref->kind);
      }
    return {value, changed};
  }

  // Depth-first walk; returns the first check whose guard holds.
  NapResult nap(const ConversationState& s, Trace& trace) const {
    std::set<std::string> visited;
    for (const auto& root : program_.nap_tree)
      if (const auto* hit = walk(root, s, trace, visited)) return {hit};
    trace.push_back({"nap", "walk", "no node matched"});
    return {};
  }

  std::pair<std::string, std::string> generative_fallback(ConversationState& s, TurnResult& r) const {
    const auto& policy = program_.fallback_policy;
    std::string choice = policy.default_action;
    if (policy.generative) {
      std::vector<std::string> names;
      std::string listing;
      ir::for_each_check(program_.nap_tree, [&](const ir::DecisionNode& d) {
        names.push_back(d.node_id);
        listing += "- " + d.node_id + ": " + describe(d.action) + "\n";
      });
      for (const auto& f : policy.actions) {
        names.push_back(f.name);
        listing += "- " + f.name + ": say \"" + f.response_template + "\"\n";
      }
      std::string user = "Conversation history:\n" + history_text(s) + "\n\nCurrent state:\n" + state_text(s) +
                         "\nAvailable actions:\n" + listing +
                         "\nChoose the best next action for the assistant. Answer with the action name only.";
      auto reply = backend_.complete(backend::make_request(Purpose::fallback_choice, system_message(s), user, "fallback"));
      auto picked = util::strip_quotes(util::trim(reply));
      while (!picked.empty() && (picked.back() == '.' || picked.back() == '!')) picked.pop_back();
      auto known = std::find(names.begin(), names.end(), picked) != names.end();
      r.trace.push_back({"fallback", "choose action", known ? picked : picked + " (unknown, using " + policy.default_action + ")"});
      if (known) choice = picked;
    } else {
      r.trace.push_back({"fallback", "default action", choice});
    }
    if (auto it = index_.find(choice); it != index_.end()) {
      auto utterance = fire(*it->second, s, r);
      if (utterance.empty() && it->second->action.kind == ir::NodeKind::external_action && options_.chain_external_actions)
        utterance = chain(s, r);
      if (!utterance.empty()) return {choice, utterance};
      choice = policy.default_action;
    }
    const auto* f = program_.fallback(choice);
    return {choice, f ? f->response_template : "Sorry, I can't help with that."};
  }

 private:
  std::string system_message(const ConversationState& s) const {
    std::string msg = "You are the assistant in a task-oriented conversation. Follow the instruction exactly.";
    return s.context_preamble.empty() ? msg : s.context_preamble + "\n" + msg;
  }

  static std::string history_text(const ConversationState& s) {
    std::string out;
    for (const auto& m : s.history) out += (m.speaker == "user" ? "User: " : "Assistant: ") + m.text + "\n";
    if (!out.empty()) out.pop_back();
    return out;
  }

  static std::string state_text(const ConversationState& s) {
    std::string out;
    for (const auto* side : {&s.slots, &s.helpers})
      for (const auto& [k, v] : *side) out += k + " = " + v.dump() + "\n";
    return out;
  }

  static std::string describe(const ir::NodeAction& a) {
    switch (a.kind) {
      case ir::NodeKind::request: return "ask for " + util::join(a.slots, ", ");
      case ir::NodeKind::external_action: return "call " + a.function;
      case ir::NodeKind::inform: return "say \"" + a.template_text + "\"";
    }
    return {};
  }

  bool ask_bool(const ConversationState& s, const std::string& question, const std::string& subject) const {
    std::string user = "Conversation history:\n" + history_text(s) + "\n\nCurrent state:\n" + state_text(s) +
                       "\nQuestion: " + question + "\nAnswer True or False.";
    return backend::parse_boolean(
        backend_.complete(backend::make_request(Purpose::boolean_nld, system_message(s), user, subject)));
  }

  const ir::DecisionNode* walk(const ir::DecisionNode& d, const ConversationState& s, Trace& trace,
                               std::set<std::string>& visited) const {
    if (!visited.insert(d.node_id).second) {
      trace.push_back({"nap:" + d.node_id, "revisit", "skipped"});
      return nullptr;
    }
    auto lookup = [&](const std::string& v) { return s.get(v); };
    auto nld = [&](const std::string& text) {
      bool v = ask_bool(s, text, text);
      trace.push_back({"nld:" + d.node_id, text, v ? "true" : "false"});
      return v;
    };
    bool hit = ir::evaluate(d.guard, lookup, nld);
    trace.push_back({"nap:" + d.node_id, ir::render(d.guard), hit ? "true" : "false"});
    if (hit) return &d;
    for (const auto& b : d.branches) {
      auto point = "edge:" + d.node_id + "->" + b.target;
      if (b.condition) {
        bool taken = ask_bool(s, "Is the following true: " + *b.condition + "?", *b.condition);
        trace.push_back({point, *b.condition, taken ? "taken" : "not taken"});
        if (!taken) continue;
      } else {
        trace.push_back({point, "default", "taken"});
      }
      const ir::DecisionNode* next = b.child.empty() ? nullptr : &b.child.front();
      if (!next)
        if (auto it = index_.find(b.target); it != index_.end()) next = it->second;
      if (!next) {
        trace.push_back({point, "target check", "missing"});
        return nullptr;
      }
      return walk(*next, s, trace, visited);
    }
    return nullptr;
  }

  std::string resolve_placeholder(const std::string& name, const ConversationState& s) const {
    if (auto it = s.slots.find(name); it != s.slots.end() && !it->second.is_null()) return util::display(it->second);
    std::string found;
    ir::for_each_check(program_.nap_tree, [&](const ir::DecisionNode& d) {
      if (!found.empty() || d.action.kind != ir::NodeKind::external_action || d.action.output != name) return;
      json v = s.get(ir::helper_name(ir::HelperKind::action, d.node_id));
      if (v.is_object()) v = v.contains(name) ? v[name] : json(nullptr);
      if (!v.is_null()) found = util::display(v);
    });
    if (!found.empty()) return found;
    if (auto it = s.helpers.find(name); it != s.helpers.end() && !it->second.is_null()) return util::display(it->second);
    for (const auto& [k, v] : s.helpers)
      if (v.is_object() && v.contains(name) && !v[name].is_null()) return util::display(v[name]);
    return {};
  }

  std::string render(const std::string& tmpl, const ConversationState& s, Trace& trace) const {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
      if (tmpl[i] == '[') {
        auto close = tmpl.find(']', i);
        if (close != std::string::npos) {
          auto name = tmpl.substr(i + 1, close - i - 1);
          auto value = resolve_placeholder(name, s);
          if (value.empty()) {
            trace.push_back({"template", "[" + name + "]", "unresolved placeholder"});
            out += tmpl.substr(i, close - i + 1);
          } else {
            out += value;
          }
          i = close;
          continue;
        }
      }
      out.push_back(tmpl[i]);
    }
    return out;
  }

  // Runs the action of a check and updates that node's helpers. Returns the
  // bot utterance (empty for external actions).
  std::string fire(const ir::DecisionNode& d, ConversationState& s, TurnResult& r) const {
    const auto& a = d.action;
    r.executed.push_back(d.node_id);
    r.action = d.node_id;
    switch (a.kind) {
      case ir::NodeKind::request: {
        return ir::request_text(a, [&](const std::string& slot) { return s.get(slot).is_null(); });
      }
      case ir::NodeKind::external_action: {
        auto var = ir::helper_name(ir::HelperKind::action, d.node_id);
        if (s.helpers[var].is_null()) {
          s.helpers[var] = run_external_action(a, s, registry_);
          r.trace.push_back({"helper:" + var, a.function, util::display(s.helpers[var])});
        }
        return {};
      }
      case ir::NodeKind::inform: {
        auto text = render(a.template_text, s, r.trace);
        auto inform = ir::helper_name(ir::HelperKind::inform, d.node_id);
        if (s.helpers[inform] == json(false)) {
          s.helpers[inform] = true;
          r.trace.push_back({"helper:" + inform, "false -> true", "true"});
        }
        if (a.confirm_question) {
          text += " " + *a.confirm_question;
          s.helpers[ir::helper_name(ir::HelperKind::answered, d.node_id)] = false;
        }
        return text;
      }
    }
    return {};
  }

  // NAP walks after an external action ran, until a node produces an
  // utterance or the walk finds nothing.
  std::string chain(ConversationState& s, TurnResult& r) const {
    while (true) {
      auto hit = nap(s, r.trace);
      if (!hit.node) {
        r.nap_null = true;
        return {};
      }
      auto utterance = fire(*hit.node, s, r);
      if (!utterance.empty() || hit.node->action.kind != ir::NodeKind::external_action || !options_.chain_external_actions)
        return utterance;
    }
  }

  void resolve_confirmations(ConversationState& s, TurnResult& r, const std::string& utterance) const {
    for (const auto& [id, rule] : program_.helper_rules) {
      auto answered = ir::helper_name(ir::HelperKind::answered, id);
      auto inform = ir::helper_name(ir::HelperKind::inform, id);
      if (std::find(rule.variables.begin(), rule.variables.end(), answered) == rule.variables.end()) continue;
      if (s.get(inform) != json(true) || s.get(answered) != json(false)) continue;
      auto it = index_.find(id);
      std::string question = it != index_.end() && it->second->action.confirm_question ? *it->second->action.confirm_question : "";
      std::string user = "The assistant asked: " + question + "\nThe user replied: " + utterance +
                         "\n\nDid the user answer yes, no, or something else? Answer yes, no or other.";
      auto reply = backend_.complete(backend::make_request(Purpose::value_from_instruction, system_message(s), user, answered));
      auto value = normalize_answer(reply);
      s.helpers[answered] = value;
      r.trace.push_back({"confirm:" + id, util::trim(reply), value});
    }
  }

  void turn_body(ConversationState& s, const std::string& utterance, TurnResult& r) const {
    auto intent = backend::detect_intent(utterance, program_.intent_table,
                                         options_.intent_backend_stage ? &backend_ : nullptr, s.context_preamble);
    r.trace.push_back({"intent", "detect_intent", intent ? *intent : "none"});
    if (intent) {
      for (const auto& e : program_.intent_table)
        if (e.name == *intent) r.utterance = e.response_template;
      r.action = *intent;
      r.origin = "global";
      return;
    }

    for (const auto& entry : program_.dst_table) {
      if (options_.dst_skip_filled && !s.get(entry.slot).is_null()) {
        r.trace.push_back({"dst:" + entry.slot, "skip filled slot", util::display(s.get(entry.slot))});
        continue;
      }
      auto [value, changed] = dst_update(s, entry);
      std::string outcome = util::display(value);
      if (changed && !entry.invalidates.empty()) outcome += " (changed; reset " + util::join({entry.invalidates.begin(), entry.invalidates.end()}, ", ") + ")";
      else if (changed) outcome += " (changed)";
      r.trace.push_back({"dst:" + entry.slot, "value_from_instruction", outcome});
    }

    resolve_confirmations(s, r, utterance);

    auto hit = nap(s, r.trace);
    if (hit.node) {
      r.origin = "nap";
      r.utterance = fire(*hit.node, s, r);
      if (r.utterance.empty() && hit.node->action.kind == ir::NodeKind::external_action && options_.chain_external_actions)
        r.utterance = chain(s, r);
      if (!r.utterance.empty()) return;
      if (!r.nap_null) return;  // external action ran without chaining
    } else {
      r.nap_null = true;
    }
    r.origin = "fallback";
    auto [name, text] = generative_fallback(s, r);
    r.action = name;
    r.utterance = text;
  }

  const GuardrailProgram& program_;
  Backend& backend_;
  const FunctionRegistry& registry_;
  RuntimeOptions options_;
  std::map<std::string, const ir::DecisionNode*> index_;
};

// Free-function form of a single turn.
inline std::pair<TurnResult, ConversationState> run_turn(const GuardrailProgram& program, const ConversationState& state,
                                                         std::string_view utterance, Backend& backend,
                                                         const FunctionRegistry& registry = FunctionRegistry::with_stubs(),
                                                         RuntimeOptions options = {}) {
  return Agent(program, backend, registry, options).run_turn(state, utterance);
}

}  // namespace codial::runtime
