#pragma once

// GuardrailProgram: the compiled form of a CHIEF graph. It is everything the
// runtime needs; the graph itself is not consulted during execution.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "codial/chief.hpp"
#include "codial/util.hpp"

namespace codial::ir {

using chief::NodeKind;
using chief::ValueType;

// ---------------------------------------------------------------------------
// Helper variables

enum class HelperKind { action, inform, answered };

inline const char* prefix(HelperKind k) {
  switch (k) {
    case HelperKind::action: return "action";
    case HelperKind::inform: return "inform";
    case HelperKind::answered: return "answered";
  }
  return "action";
}

inline std::string helper_name(HelperKind k, std::string_view node_id) {
  return std::string(prefix(k)) + "_" + std::string(node_id);
}

struct HelperRef {
  HelperKind kind;
  std::string node_id;
};

inline std::optional<HelperRef> parse_helper(std::string_view name) {
  for (auto k : {HelperKind::action, HelperKind::inform, HelperKind::answered}) {
    std::string p = std::string(prefix(k)) + "_";
    if (util::starts_with(name, p) && name.size() > p.size()) return HelperRef{k, std::string(name.substr(p.size()))};
  }
  return std::nullopt;
}

// Reset value of a helper: null for action results, false for flags.
inline json helper_reset_value(HelperKind k) { return k == HelperKind::action ? json(nullptr) : json(false); }

// Helpers owned by a node, in canonical order.
inline std::vector<std::string> helpers_of(const chief::Node& n) {
  switch (n.kind()) {
    case NodeKind::request: return {};
    case NodeKind::external_action: return {helper_name(HelperKind::action, n.id)};
    case NodeKind::inform: {
      std::vector<std::string> out{helper_name(HelperKind::inform, n.id)};
      if (n.inform()->confirm_question) out.push_back(helper_name(HelperKind::answered, n.id));
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Predicates

struct Predicate {
  enum class Op { always, is_null, not_null, equals, not_, and_, or_, nld };

  Op op = Op::always;
  std::string var;             // is_null / not_null / equals
  json value;                  // equals
  std::vector<Predicate> args; // not_ / and_ / or_
  std::string text;            // nld

  static Predicate always() { return {}; }
  static Predicate is_null(std::string v) { return {Op::is_null, std::move(v), {}, {}, {}}; }
  static Predicate not_null(std::string v) { return {Op::not_null, std::move(v), {}, {}, {}}; }
  static Predicate equals(std::string v, json value) { return {Op::equals, std::move(v), std::move(value), {}, {}}; }
  static Predicate negate(Predicate p) { return {Op::not_, {}, {}, {std::move(p)}, {}}; }
  static Predicate all(std::vector<Predicate> ps) {
    if (ps.size() == 1) return std::move(ps.front());
    return {Op::and_, {}, {}, std::move(ps), {}};
  }
  static Predicate any(std::vector<Predicate> ps) {
    if (ps.size() == 1) return std::move(ps.front());
    return {Op::or_, {}, {}, std::move(ps), {}};
  }
  static Predicate nld(std::string text) { return {Op::nld, {}, {}, {}, std::move(text)}; }

  bool operator==(const Predicate&) const = default;
};

inline const char* to_string(Predicate::Op op) {
  switch (op) {
    case Predicate::Op::always: return "always";
    case Predicate::Op::is_null: return "is_null";
    case Predicate::Op::not_null: return "not_null";
    case Predicate::Op::equals: return "equals";
    case Predicate::Op::not_: return "not";
    case Predicate::Op::and_: return "and";
    case Predicate::Op::or_: return "or";
    case Predicate::Op::nld: return "nld";
  }
  return "always";
}

inline std::string render(const Predicate& p) {
  using Op = Predicate::Op;
  auto group = [](const Predicate& c) {
    auto s = render(c);
    return (c.op == Op::and_ || c.op == Op::or_) ? "(" + s + ")" : s;
  };
  switch (p.op) {
    case Op::always: return "true";
    case Op::is_null: return p.var + " == null";
    case Op::not_null: return p.var + " != null";
    case Op::equals: return p.var + " == " + p.value.dump();
    case Op::not_: return "not " + group(p.args.at(0));
    case Op::and_:
    case Op::or_: {
      std::vector<std::string> parts;
      for (const auto& a : p.args) parts.push_back(group(a));
      return util::join(parts, p.op == Op::and_ ? " and " : " or ");
    }
    case Op::nld: return "nld(" + json(p.text).dump() + ")";
  }
  return "true";
}

inline json to_json(const Predicate& p) {
  using Op = Predicate::Op;
  json j{{"op", to_string(p.op)}};
  switch (p.op) {
    case Op::is_null:
    case Op::not_null: j["var"] = p.var; break;
    case Op::equals: j["var"] = p.var; j["value"] = p.value; break;
    case Op::not_:
    case Op::and_:
    case Op::or_:
      j["args"] = json::array();
      for (const auto& a : p.args) j["args"].push_back(to_json(a));
      break;
    case Op::nld: j["text"] = p.text; break;
    case Op::always: break;
  }
  return j;
}

inline Predicate predicate_from_json(const json& j) {
  using Op = Predicate::Op;
  auto op = j.at("op").get<std::string>();
  Predicate p;
  if (op == "always") p.op = Op::always;
  else if (op == "is_null") p = Predicate::is_null(j.at("var").get<std::string>());
  else if (op == "not_null") p = Predicate::not_null(j.at("var").get<std::string>());
  else if (op == "equals") p = Predicate::equals(j.at("var").get<std::string>(), j.at("value"));
  else if (op == "nld") p = Predicate::nld(j.at("text").get<std::string>());
  else if (op == "not" || op == "and" || op == "or") {
    p.op = op == "not" ? Op::not_ : op == "and" ? Op::and_ : Op::or_;
    for (const auto& a : j.at("args")) p.args.push_back(predicate_from_json(a));
    if (p.op == Op::not_ && p.args.size() != 1) throw Error("SchemaViolation", "'not' takes one argument");
  } else {
    throw Error("SchemaViolation", "unknown predicate op '" + op + "'");
  }
  return p;
}

// Variables a predicate reads.
inline void collect_vars(const Predicate& p, std::set<std::string>& out) {
  if (!p.var.empty()) out.insert(p.var);
  for (const auto& a : p.args) collect_vars(a, out);
}

inline bool uses_nld(const Predicate& p) {
  if (p.op == Predicate::Op::nld) return true;
  for (const auto& a : p.args)
    if (uses_nld(a)) return true;
  return false;
}

// Short-circuit evaluation. NLD leaves are delegated to `nld`.
inline bool evaluate(const Predicate& p, const std::function<json(const std::string&)>& lookup,
                     const std::function<bool(const std::string&)>& nld) {
  using Op = Predicate::Op;
  switch (p.op) {
    case Op::always: return true;
    case Op::is_null: return lookup(p.var).is_null();
    case Op::not_null: return !lookup(p.var).is_null();
    case Op::equals: return lookup(p.var) == p.value;
    case Op::not_: return !evaluate(p.args.at(0), lookup, nld);
    case Op::and_:
      for (const auto& a : p.args)
        if (!evaluate(a, lookup, nld)) return false;
      return true;
    case Op::or_:
      for (const auto& a : p.args)
        if (evaluate(a, lookup, nld)) return true;
      return false;
    case Op::nld: return nld(p.text);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Decision tree

struct NodeAction {
  NodeKind kind = NodeKind::request;
  // request: slots to ask for and how to join them ("and" / "or"), plus
  // slots that are needed regardless of the group
  std::vector<std::string> slots;
  std::string joiner = "and";
  std::vector<std::string> required;
  // external_action
  std::string function;
  std::map<std::string, std::string> params;
  std::optional<std::string> output;
  // inform
  std::string template_text;
  std::optional<std::string> confirm_question;

  bool operator==(const NodeAction&) const = default;
};

// Question text of a request action. `missing(slot)` tells whether the slot
// still lacks a value; pass a function returning true for the static form.
inline std::string request_text(const NodeAction& a, const std::function<bool(const std::string&)>& missing) {
  auto spoken = [](std::vector<std::string> names) {
    for (auto& n : names) std::replace(n.begin(), n.end(), '_', ' ');
    return names;
  };
  auto pick = [&](const std::vector<std::string>& from) {
    std::vector<std::string> out;
    for (const auto& s : from)
      if (missing(s)) out.push_back(s);
    return out;
  };
  std::vector<std::string> parts;
  auto group = pick(a.slots);
  bool group_open = a.joiner == "or" ? group.size() == a.slots.size() : !group.empty();
  if (group_open) parts.push_back(util::join_list(spoken(a.joiner == "or" ? a.slots : group), a.joiner));
  for (const auto& r : spoken(pick(a.required))) parts.push_back(r);
  if (parts.empty()) {
    parts.push_back(util::join_list(spoken(a.slots), a.joiner));
    for (const auto& r : spoken(a.required)) parts.push_back(r);
  }
  return "Could you please tell me the " + util::join_list(parts, "and") + "?";
}

struct DecisionNode;

struct Branch {
  std::optional<std::string> condition;  // nullopt: default branch
  std::string target;
  // The target's check, inlined when this branch is the target's first
  // occurrence in depth-first order. Empty means a jump to a check placed
  // elsewhere in the tree.
  std::vector<DecisionNode> child;

  bool operator==(const Branch&) const;
};

struct DecisionNode {
  std::string node_id;
  Predicate guard;
  NodeAction action;
  std::vector<Branch> branches;

  bool operator==(const DecisionNode&) const = default;
};

inline bool Branch::operator==(const Branch& o) const {
  return condition == o.condition && target == o.target && child == o.child;
}

// Pre-order visit of every check in a forest.
template <class F>
void for_each_check(const std::vector<DecisionNode>& roots, const F& f) {
  std::function<void(const DecisionNode&)> go = [&](const DecisionNode& d) {
    f(d);
    for (const auto& b : d.branches)
      for (const auto& c : b.child) go(c);
  };
  for (const auto& r : roots) go(r);
}

template <class F>
void for_each_check_mut(std::vector<DecisionNode>& roots, const F& f) {
  std::function<void(DecisionNode&)> go = [&](DecisionNode& d) {
    f(d);
    for (auto& b : d.branches)
      for (auto& c : b.child) go(c);
  };
  for (auto& r : roots) go(r);
}

// ---------------------------------------------------------------------------
// Program

struct InitEntry {
  std::string var;
  json value;
  bool operator==(const InitEntry&) const = default;
};

struct DstEntry {
  std::string slot;
  std::string node_id;  // owning request node
  std::string instruction;
  std::set<std::string> invalidates;
  ValueType value_type = ValueType::text;
  bool operator==(const DstEntry&) const = default;
};

struct IntentEntry {
  std::string name;
  std::vector<std::string> trigger_examples;
  std::string response_template;
  bool operator==(const IntentEntry&) const = default;
};

struct HelperRule {
  std::string node_id;
  std::vector<std::string> variables;
  bool operator==(const HelperRule&) const = default;
};

struct FallbackEntry {
  std::string name;
  std::string response_template;
  bool operator==(const FallbackEntry&) const = default;
};

struct FallbackPolicy {
  std::vector<FallbackEntry> actions;
  std::string default_action = "out_of_scope";
  bool generative = true;
  bool operator==(const FallbackPolicy&) const = default;
};

struct GuardrailProgram {
  std::vector<InitEntry> init_block;
  std::vector<DstEntry> dst_table;
  std::vector<IntentEntry> intent_table;
  // nap_tree.front() is rooted at the start node; further roots only exist
  // for nodes the start node cannot reach.
  std::vector<DecisionNode> nap_tree;
  std::map<std::string, HelperRule> helper_rules;
  FallbackPolicy fallback_policy;
  std::string start_node;
  std::string source_graph_hash;

  const DstEntry* dst_entry(std::string_view slot) const {
    for (const auto& e : dst_table)
      if (e.slot == slot) return &e;
    return nullptr;
  }

  const DecisionNode* check(std::string_view node_id) const {
    const DecisionNode* found = nullptr;
    for_each_check(nap_tree, [&](const DecisionNode& d) {
      if (!found && d.node_id == node_id) found = &d;
    });
    return found;
  }

  const FallbackEntry* fallback(std::string_view name) const {
    for (const auto& f : fallback_policy.actions)
      if (f.name == name) return &f;
    return nullptr;
  }

  bool operator==(const GuardrailProgram&) const = default;
};

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const NodeAction& a) {
  json j{{"kind", chief::to_string(a.kind)}};
  switch (a.kind) {
    case NodeKind::request:
      j["slots"] = a.slots;
      j["joiner"] = a.joiner;
      j["required"] = a.required;
      break;
    case NodeKind::external_action:
      j["function"] = a.function;
      j["params"] = a.params;
      j["output"] = a.output ? json(*a.output) : json(nullptr);
      break;
    case NodeKind::inform:
      j["template"] = a.template_text;
      j["confirm_question"] = a.confirm_question ? json(*a.confirm_question) : json(nullptr);
      break;
  }
  return j;
}

inline NodeAction action_from_json(const json& j) {
  NodeAction a;
  auto kind = chief::node_kind_from(j.at("kind").get<std::string>());
  if (!kind) throw Error("SchemaViolation", "unknown action kind");
  a.kind = *kind;
  switch (a.kind) {
    case NodeKind::request:
      a.slots = j.at("slots").get<std::vector<std::string>>();
      a.joiner = j.value("joiner", "and");
      a.required = j.value("required", std::vector<std::string>{});
      break;
    case NodeKind::external_action:
      a.function = j.at("function").get<std::string>();
      a.params = j.value("params", std::map<std::string, std::string>{});
      if (j.contains("output") && j["output"].is_string()) a.output = j["output"].get<std::string>();
      break;
    case NodeKind::inform:
      a.template_text = j.at("template").get<std::string>();
      if (j.contains("confirm_question") && j["confirm_question"].is_string())
        a.confirm_question = j["confirm_question"].get<std::string>();
      break;
  }
  return a;
}

inline json to_json(const DecisionNode& d) {
  json branches = json::array();
  for (const auto& b : d.branches) {
    json bj{{"condition", b.condition ? json(*b.condition) : json(nullptr)}, {"target", b.target}};
    bj["child"] = b.child.empty() ? json(nullptr) : to_json(b.child.front());
    branches.push_back(std::move(bj));
  }
  return json{{"node", d.node_id}, {"guard", to_json(d.guard)}, {"action", to_json(d.action)}, {"branches", branches}};
}

inline DecisionNode decision_from_json(const json& j) {
  DecisionNode d;
  d.node_id = j.at("node").get<std::string>();
  d.guard = predicate_from_json(j.at("guard"));
  d.action = action_from_json(j.at("action"));
  for (const auto& bj : j.at("branches")) {
    Branch b;
    if (bj.contains("condition") && bj["condition"].is_string()) b.condition = bj["condition"].get<std::string>();
    b.target = bj.at("target").get<std::string>();
    if (bj.contains("child") && !bj["child"].is_null()) b.child.push_back(decision_from_json(bj["child"]));
    d.branches.push_back(std::move(b));
  }
  return d;
}

inline json to_json(const GuardrailProgram& p) {
  json j;
  j["format"] = "codial-ir/1";
  j["start_node"] = p.start_node;
  j["source_graph_hash"] = p.source_graph_hash;
  j["init_block"] = json::array();
  for (const auto& e : p.init_block) j["init_block"].push_back({{"var", e.var}, {"value", e.value}});
  j["dst_table"] = json::array();
  for (const auto& e : p.dst_table)
    j["dst_table"].push_back({{"slot", e.slot}, {"node", e.node_id}, {"instruction", e.instruction},
                              {"invalidates", e.invalidates}, {"value_type", chief::to_string(e.value_type)}});
  j["intent_table"] = json::array();
  for (const auto& e : p.intent_table)
    j["intent_table"].push_back(
        {{"name", e.name}, {"trigger_examples", e.trigger_examples}, {"response_template", e.response_template}});
  j["nap_tree"] = json::array();
  for (const auto& d : p.nap_tree) j["nap_tree"].push_back(to_json(d));
  j["helper_rules"] = json::object();
  for (const auto& [id, r] : p.helper_rules) j["helper_rules"][id] = {{"node", r.node_id}, {"variables", r.variables}};
  json fb = json::array();
  for (const auto& f : p.fallback_policy.actions) fb.push_back({{"name", f.name}, {"response_template", f.response_template}});
  j["fallback_policy"] = {{"actions", fb},
                          {"default_action", p.fallback_policy.default_action},
                          {"generative", p.fallback_policy.generative}};
  return j;
}

inline GuardrailProgram program_from_json(const json& j) {
  try {
    GuardrailProgram p;
    p.start_node = j.at("start_node").get<std::string>();
    p.source_graph_hash = j.value("source_graph_hash", "");
    for (const auto& e : j.at("init_block")) p.init_block.push_back({e.at("var").get<std::string>(), e.at("value")});
    for (const auto& e : j.at("dst_table")) {
      DstEntry d;
      d.slot = e.at("slot").get<std::string>();
      d.node_id = e.at("node").get<std::string>();
      d.instruction = e.at("instruction").get<std::string>();
      d.invalidates = e.at("invalidates").get<std::set<std::string>>();
      auto vt = chief::value_type_from(e.at("value_type").get<std::string>());
      if (!vt) throw Error("SchemaViolation", "unknown value type");
      d.value_type = *vt;
      p.dst_table.push_back(std::move(d));
    }
    for (const auto& e : j.at("intent_table"))
      p.intent_table.push_back({e.at("name").get<std::string>(), e.at("trigger_examples").get<std::vector<std::string>>(),
                                e.at("response_template").get<std::string>()});
    for (const auto& d : j.at("nap_tree")) p.nap_tree.push_back(decision_from_json(d));
    for (auto it = j.at("helper_rules").begin(); it != j.at("helper_rules").end(); ++it)
      p.helper_rules[it.key()] = {it->at("node").get<std::string>(), it->at("variables").get<std::vector<std::string>>()};
    const json& fp = j.at("fallback_policy");
    for (const auto& f : fp.at("actions"))
      p.fallback_policy.actions.push_back({f.at("name").get<std::string>(), f.at("response_template").get<std::string>()});
    p.fallback_policy.default_action = fp.value("default_action", "out_of_scope");
    p.fallback_policy.generative = fp.value("generative", true);
    return p;
  } catch (const json::exception& e) {
    throw Error("SchemaViolation", std::string("invalid program IR: ") + e.what());
  }
}

inline std::string serialize_program(const GuardrailProgram& p) { return to_json(p).dump(2) + "\n"; }

inline GuardrailProgram parse_program(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("MalformedDocument", e.what());
  }
  return program_from_json(j);
}

}  // namespace codial::ir
