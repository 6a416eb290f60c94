#pragma once

// Offline evaluation over recorded user/wizard conversations.

#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "codial/backend.hpp"
#include "codial/chief.hpp"
#include "codial/metrics.hpp"
#include "codial/program.hpp"
#include "codial/runtime.hpp"

namespace codial::eval {

// ---------------------------------------------------------------------------
// Ground truth

struct GoldTurn {
  std::string user;
  std::string wizard;
  std::optional<std::string> action;  // wizard action label
  std::optional<metrics::SlotState> state;
};

struct GroundTruthDialogue {
  std::string id;
  std::string task;
  std::vector<GoldTurn> turns;
  // action label -> node id, global action or fallback name; null: unmapped
  std::map<std::string, std::optional<std::string>> action_map;
};

inline GroundTruthDialogue dialogue_from_json(const json& j) {
  GroundTruthDialogue d;
  d.id = j.at("id").get<std::string>();
  d.task = j.value("task", "");
  for (const auto& t : j.at("turns")) {
    GoldTurn g;
    g.user = t.at("user").get<std::string>();
    g.wizard = t.value("wizard", "");
    if (t.contains("action") && t["action"].is_string()) g.action = t["action"].get<std::string>();
    if (t.contains("state") && t["state"].is_object()) {
      metrics::SlotState s;
      for (auto it = t["state"].begin(); it != t["state"].end(); ++it) s[it.key()] = it.value();
      g.state = std::move(s);
    }
    d.turns.push_back(std::move(g));
  }
  if (j.contains("action_map"))
    for (auto it = j["action_map"].begin(); it != j["action_map"].end(); ++it)
      d.action_map[it.key()] = it->is_string() ? std::optional<std::string>(it->get<std::string>()) : std::nullopt;
  return d;
}

inline json to_json(const GroundTruthDialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    json jt{{"user", t.user}, {"wizard", t.wizard}};
    if (t.action) jt["action"] = *t.action;
    if (t.state) jt["state"] = *t.state;
    turns.push_back(jt);
  }
  json map = json::object();
  for (const auto& [k, v] : d.action_map) map[k] = v ? json(*v) : json(nullptr);
  return {{"id", d.id}, {"task", d.task}, {"turns", turns}, {"action_map", map}};
}

// One dialogue per line; blank lines are skipped.
inline std::vector<GroundTruthDialogue> load_dialogues(std::istream& in) {
  std::vector<GroundTruthDialogue> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(dialogue_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error("MalformedDocument", "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<GroundTruthDialogue> load_dialogues(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IOError", "cannot read " + path);
  return load_dialogues(in);
}

// ---------------------------------------------------------------------------
// Wizard state approximation

class UnmappedAction : public Error {
 public:
  explicit UnmappedAction(const std::string& label) : Error("UnmappedAction", "action " + label + " has no mapping") {}
};

class NoPath : public Error {
 public:
  explicit NoPath(const std::string& target) : Error("NoPath", "no path from the start node to " + target) {}
};

inline const json kExecuted = "executed";

// First path (as edges) from the start node to `target`, depth first in
// document edge order. Empty when target is the start node.
inline std::vector<const chief::Edge*> dfs_path(const chief::ChiefGraph& g, const std::string& target) {
  if (!g.find(target)) throw chief::UnknownNode(target);
  std::vector<const chief::Edge*> path;
  std::set<std::string> visited;
  std::function<bool(const std::string&)> go = [&](const std::string& at) {
    if (at == target) return true;
    if (!visited.insert(at).second) return false;
    for (const auto* e : g.out_edges(at)) {
      path.push_back(e);
      if (go(e->target)) return true;
      path.pop_back();
    }
    return false;
  };
  if (!go(g.start_node)) throw NoPath(target);
  return path;
}

// Yes/no reading of an edge condition; nullopt when neither reading applies.
inline std::optional<std::string> condition_polarity(const std::optional<std::string>& condition) {
  if (!condition) return std::nullopt;
  static const std::set<std::string> no{"no", "not", "decline", "declines", "declined", "refuse", "refuses",
                                        "reject", "rejects", "deny", "denies", "cancel", "cancels", "disagrees"};
  static const std::set<std::string> yes{"yes", "confirm", "confirms", "confirmed", "accept", "accepts", "agree",
                                         "agrees", "approve", "approves", "affirm", "affirms"};
  bool has_yes = false;
  for (const auto& w : util::words(*condition)) {
    if (no.count(w)) return "no";
    has_yes = has_yes || yes.count(w);
  }
  if (has_yes) return "yes";
  return std::nullopt;
}

// Wizard-state value of a helper variable when the wizard is at `target`.
// Nodes off the start-to-target path give null; the target's own helpers
// hold their initial values since its action has not run yet.
inline json approx_value_at(const chief::ChiefGraph& g, const std::string& target, const std::string& variable) {
  auto ref = ir::parse_helper(variable);
  if (!ref) return nullptr;
  auto path = dfs_path(g, target);
  if (path.empty()) return nullptr;
  if (ref->node_id == target) return ir::helper_reset_value(ref->kind);
  auto leaving = std::find_if(path.begin(), path.end(), [&](const chief::Edge* e) { return e->source == ref->node_id; });
  if (leaving == path.end()) return nullptr;
  switch (ref->kind) {
    case ir::HelperKind::action: return kExecuted;
    case ir::HelperKind::inform: return true;
    case ir::HelperKind::answered: {
      auto pol = condition_polarity((*leaving)->condition);
      return pol ? json(*pol) : json(nullptr);
    }
  }
  return nullptr;
}

inline std::optional<std::string> map_action(const std::map<std::string, std::optional<std::string>>& mapping,
                                             const std::string& label) {
  auto it = mapping.find(label);
  if (it == mapping.end()) throw UnmappedAction(label);
  return it->second;
}

inline json approx_wizard_state(const chief::ChiefGraph& g, const std::map<std::string, std::optional<std::string>>& mapping,
                                const std::string& gt_action, const std::string& variable) {
  auto target = map_action(mapping, gt_action);
  if (!target) throw UnmappedAction(gt_action);
  return approx_value_at(g, *target, variable);
}

// ---------------------------------------------------------------------------
// Evaluation

struct TurnRecord {
  std::string dialogue_id;
  std::size_t turn = 0;
  std::string user;
  std::string predicted_action;  // empty when the turn failed
  std::optional<std::string> gold_action;
  std::optional<std::string> gold_label;
  std::string predicted_utterance;
  std::string reference;
  std::optional<std::string> error;
  metrics::SlotState predicted_state;
  std::optional<metrics::SlotState> gold_state;
  std::vector<std::string> api_calls;  // external action nodes run this turn
  std::size_t api_correct = 0;
};

struct KindError {
  std::size_t compared = 0;
  std::size_t wrong = 0;
  double rate() const { return compared ? static_cast<double>(wrong) / compared : 0; }
};

struct EvalReport {
  std::vector<TurnRecord> turns;
  metrics::ActionScores actions;
  double bleu = 0;
  std::optional<double> jga;
  std::map<std::string, KindError> state_errors;  // node kind -> counts
  std::size_t api_calls = 0;
  std::size_t api_correct = 0;
  double api_precision() const { return api_calls ? 100.0 * api_correct / api_calls : 0; }
};

struct EvalOptions {
  bool oracle_state = false;
  metrics::Smoothing bleu_smoothing = metrics::Smoothing::none;
  std::string context_preamble;
  int parallelism = 1;
  runtime::RuntimeOptions runtime;
  std::map<std::string, std::optional<std::string>> action_map;  // shared; dialogues may override
};

namespace detail {

inline bool helper_matches(const json& predicted, const json& approx, ir::HelperKind kind) {
  if (kind == ir::HelperKind::action) return predicted.is_null() == approx.is_null();
  json expected = approx.is_null() ? ir::helper_reset_value(kind) : approx;
  return predicted == expected;
}

inline std::string kind_of(const chief::ChiefGraph& g, const std::string& node) {
  const auto* n = g.find(node);
  return n ? chief::to_string(n->kind()) : "unknown";
}

struct DialogueResult {
  std::vector<TurnRecord> turns;
  std::map<std::string, KindError> errors;
};

inline DialogueResult run_dialogue(const ir::GuardrailProgram& program, const chief::ChiefGraph& graph,
                                   const GroundTruthDialogue& d, backend::Backend& backend,
                                   const runtime::FunctionRegistry& registry, const EvalOptions& opt) {
  DialogueResult out;
  auto mapping = opt.action_map;
  for (const auto& [k, v] : d.action_map) mapping[k] = v;
  runtime::Agent agent(program, backend, registry, opt.runtime);
  auto state = runtime::initial_state(program, opt.context_preamble);
  std::vector<runtime::Message> history;
  std::set<std::string> slot_names;
  for (const auto& e : program.dst_table) slot_names.insert(e.slot);

  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& gt = d.turns[i];
    TurnRecord rec;
    rec.dialogue_id = d.id;
    rec.turn = i;
    rec.user = gt.user;
    rec.reference = gt.wizard;
    rec.gold_label = gt.action;
    rec.gold_state = gt.state;
    std::optional<std::string> target;
    if (gt.action) {
      auto it = mapping.find(*gt.action);
      if (it != mapping.end()) target = it->second;
      rec.gold_action = target;
    }

    state.history = history;
    runtime::ConversationState after = state;
    try {
      auto [r, s] = agent.run_turn(state, gt.user);
      rec.predicted_action = r.action;
      rec.predicted_utterance = r.utterance;
      after = std::move(s);
      for (const auto& id : r.executed)
        if (const auto* n = graph.find(id); n && n->kind() == chief::NodeKind::external_action) rec.api_calls.push_back(id);
    } catch (const Error& e) {
      rec.error = std::string(e.kind()) + ": " + e.what();
    }
    rec.predicted_state = after.slots;

    // Global and fallback labels, and nodes the start cannot reach, have no
    // wizard-state approximation.
    bool target_is_node = false;
    if (target && graph.find(*target)) {
      try {
        std::set<std::string> on_path;
        for (const auto* e : dfs_path(graph, *target)) on_path.insert(e->source);
        for (const auto& id : rec.api_calls) rec.api_correct += on_path.count(id) || id == *target;
        target_is_node = true;
      } catch (const NoPath&) {
      }
    }

    // Predicted state against the approximated wizard state, per node kind.
    // The target's own helpers describe the turn in progress and are left
    // to the agent.
    if (target_is_node && !rec.error) {
      for (const auto& [var, value] : after.helpers) {
        auto ref = ir::parse_helper(var);
        if (!ref || ref->node_id == *target) continue;
        auto& k = out.errors[kind_of(graph, ref->node_id)];
        ++k.compared;
        k.wrong += !helper_matches(value, approx_value_at(graph, *target, var), ref->kind);
      }
    }
    if (gt.state && !rec.error) {
      auto& k = out.errors["request"];
      for (const auto& slot : slot_names) {
        ++k.compared;
        json g = gt.state->count(slot) ? gt.state->at(slot) : json(nullptr);
        k.wrong += metrics::normalize_value(after.get(slot)) != metrics::normalize_value(g);
      }
    }

    state = after;
    if (target_is_node)
      for (auto& [var, value] : state.helpers) {
        auto ref = ir::parse_helper(var);
        if (ref && ref->node_id == *target) continue;
        json v = approx_value_at(graph, *target, var);
        value = v.is_null() && ref ? ir::helper_reset_value(ref->kind) : v;
      }
    if (opt.oracle_state && gt.state)
      for (const auto& slot : slot_names) state.slots[slot] = gt.state->count(slot) ? gt.state->at(slot) : json(nullptr);

    history.push_back({"user", gt.user});
    history.push_back({"bot", gt.wizard});
    out.turns.push_back(std::move(rec));
  }
  return out;
}

}  // namespace detail

inline EvalReport summarize(std::vector<TurnRecord> turns, std::map<std::string, KindError> errors,
                            metrics::Smoothing smoothing = metrics::Smoothing::none) {
  EvalReport rep;
  rep.turns = std::move(turns);
  rep.state_errors = std::move(errors);
  std::vector<metrics::LabelPair> pairs;
  std::vector<std::string> hyps, refs;
  std::vector<metrics::SlotState> pred_states, gold_states;
  for (const auto& t : rep.turns) {
    if (t.gold_action) pairs.push_back({t.predicted_action, *t.gold_action});
    hyps.push_back(t.predicted_utterance);
    refs.push_back(t.reference);
    if (t.gold_state) {
      pred_states.push_back(t.predicted_state);
      gold_states.push_back(*t.gold_state);
    }
    rep.api_calls += t.api_calls.size();
    rep.api_correct += t.api_correct;
  }
  rep.actions = metrics::action_scores(pairs);
  rep.bleu = metrics::bleu4(hyps, refs, smoothing);
  if (!gold_states.empty()) rep.jga = metrics::jga(pred_states, gold_states);
  return rep;
}

// Replays every ground-truth turn through the agent. After each turn the
// agent's helpers are overwritten with the approximated wizard state, and
// with `oracle_state` its slots with the gold belief state.
inline EvalReport evaluate(const ir::GuardrailProgram& program, const chief::ChiefGraph& graph,
                           const std::vector<GroundTruthDialogue>& dialogues, backend::Backend& backend,
                           const runtime::FunctionRegistry& registry = runtime::FunctionRegistry::with_stubs(),
                           const EvalOptions& options = {}) {
  std::vector<detail::DialogueResult> results(dialogues.size());
  std::size_t width = static_cast<std::size_t>(std::max(1, options.parallelism));
  for (std::size_t start = 0; start < dialogues.size(); start += width) {
    std::vector<std::future<detail::DialogueResult>> jobs;
    for (std::size_t i = start; i < std::min(dialogues.size(), start + width); ++i)
      jobs.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async, [&, i] {
        return detail::run_dialogue(program, graph, dialogues[i], backend, registry, options);
      }));
    for (std::size_t k = 0; k < jobs.size(); ++k) results[start + k] = jobs[k].get();
  }
  std::vector<TurnRecord> turns;
  std::map<std::string, KindError> errors;
  for (auto& r : results) {
    for (auto& t : r.turns) turns.push_back(std::move(t));
    for (const auto& [kind, e] : r.errors) {
      errors[kind].compared += e.compared;
      errors[kind].wrong += e.wrong;
    }
  }
  return summarize(std::move(turns), std::move(errors), options.bleu_smoothing);
}

inline std::map<std::string, double> state_error_report(const ir::GuardrailProgram& program, const chief::ChiefGraph& graph,
                                                         const std::vector<GroundTruthDialogue>& dialogues,
                                                         backend::Backend& backend,
                                                         const runtime::FunctionRegistry& registry = runtime::FunctionRegistry::with_stubs(),
                                                         const EvalOptions& options = {}) {
  std::map<std::string, double> out;
  for (const auto& [kind, e] : evaluate(program, graph, dialogues, backend, registry, options).state_errors)
    out[kind] = e.rate();
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const TurnRecord& t) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  return {{"dialogue", t.dialogue_id},
          {"turn", t.turn},
          {"user", t.user},
          {"predicted_action", t.predicted_action},
          {"gold_action", opt(t.gold_action)},
          {"gold_label", opt(t.gold_label)},
          {"predicted_utterance", t.predicted_utterance},
          {"reference", t.reference},
          {"error", opt(t.error)},
          {"predicted_state", t.predicted_state},
          {"gold_state", t.gold_state ? json(*t.gold_state) : json(nullptr)},
          {"api_calls", t.api_calls},
          {"api_correct", t.api_correct}};
}

inline json to_json(const EvalReport& r) {
  json turns = json::array();
  for (const auto& t : r.turns) turns.push_back(to_json(t));
  json errors = json::object();
  for (const auto& [kind, e] : r.state_errors)
    errors[kind] = {{"compared", e.compared}, {"wrong", e.wrong}, {"rate", e.rate()}};
  return {{"aggregates",
           {{"micro_f1", r.actions.micro_f1},
            {"macro_f1", r.actions.macro_f1},
            {"accuracy", r.actions.accuracy},
            {"scored_turns", r.actions.turns},
            {"bleu4", r.bleu},
            {"jga", r.jga ? json(*r.jga) : json(nullptr)},
            {"api_calls", r.api_calls},
            {"api_precision", r.api_precision()},
            {"state_errors", errors}}},
          {"turns", turns}};
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "dialogue,turn,user,predicted_action,gold_action,predicted_utterance,reference,error\n";
  for (const auto& t : r.turns)
    out << csv_field(t.dialogue_id) << ',' << t.turn << ',' << csv_field(t.user) << ',' << csv_field(t.predicted_action) << ','
        << csv_field(t.gold_action.value_or("")) << ',' << csv_field(t.predicted_utterance) << ','
        << csv_field(t.reference) << ',' << csv_field(t.error.value_or("")) << '\n';
  return out.str();
}

inline std::string summary_table(const EvalReport& r) {
  std::ostringstream out;
  auto row = [&](const std::string& name, const std::string& value) {
    out << name << std::string(name.size() < 22 ? 22 - name.size() : 1, ' ') << value << '\n';
  };
  auto num = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
  };
  row("turns", std::to_string(r.turns.size()));
  row("scored turns", std::to_string(r.actions.turns));
  row("micro F1", num(r.actions.micro_f1));
  row("macro F1", num(r.actions.macro_f1));
  row("accuracy", num(r.actions.accuracy));
  row("BLEU-4", num(r.bleu));
  row("JGA", r.jga ? num(*r.jga) : "n/a");
  row("API precision", r.api_calls ? num(r.api_precision()) : "n/a");
  for (const auto& [kind, e] : r.state_errors) row("state error " + kind, num(100 * e.rate()));
  return out.str();
}

}  // namespace codial::eval
