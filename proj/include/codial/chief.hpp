#pragma once

// CHIEF dialogue-flow graphs: typed nodes, conditioned edges, global and
// fallback actions, and their JSON encoding.
//
// Document schema (all keys besides those listed are kept verbatim in
// `extra` and written back on serialization):
//
//   {
//     "start_node": "n1",                         // optional, default: first node
//     "nodes": [
//       {"id": "n1", "type": "request", "rule": "...",
//        "slots": [{"name": "departure", "type": "text", "examples": ["Downtown"], "rule": "..."}]},
//       {"id": "n2", "type": "external_action", "function": "book_taxi",
//        "params": {"departure": "departure"}, "output": "ref_no"},
//       {"id": "n3", "type": "inform", "template": "Booked [ref_no]", "confirm_question": "..."}
//     ],
//     "edges": [{"source": "n1", "target": "n2", "condition": "..."}],
//     "global_actions": [{"name": "hello", "response_template": "...", "trigger_examples": ["hi"]}],
//     "fallback_actions": [{"name": "goodbye", "response_template": "..."}]
//   }

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "codial/diagnostic.hpp"
#include "codial/util.hpp"

namespace codial::chief {

enum class ValueType { text, categorical, number, boolean, datetime };
enum class NodeKind { request, external_action, inform };

inline const char* to_string(ValueType t) {
  switch (t) {
    case ValueType::text: return "text";
    case ValueType::categorical: return "categorical";
    case ValueType::number: return "number";
    case ValueType::boolean: return "boolean";
    case ValueType::datetime: return "datetime";
  }
  return "text";
}

inline std::optional<ValueType> value_type_from(std::string_view s) {
  if (s == "text") return ValueType::text;
  if (s == "categorical") return ValueType::categorical;
  if (s == "number") return ValueType::number;
  if (s == "boolean") return ValueType::boolean;
  if (s == "datetime") return ValueType::datetime;
  return std::nullopt;
}

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::request: return "request";
    case NodeKind::external_action: return "external_action";
    case NodeKind::inform: return "inform";
  }
  return "request";
}

inline std::optional<NodeKind> node_kind_from(std::string_view s) {
  if (s == "request") return NodeKind::request;
  if (s == "external_action") return NodeKind::external_action;
  if (s == "inform") return NodeKind::inform;
  return std::nullopt;
}

struct Slot {
  std::string name;
  ValueType value_type = ValueType::text;
  std::vector<std::string> examples;
  std::optional<std::string> rule;
  json extra = json::object();

  bool operator==(const Slot&) const = default;
};

struct RequestPayload {
  std::vector<Slot> slots;
  std::optional<std::string> rule;

  bool operator==(const RequestPayload&) const = default;
};

struct ExternalActionPayload {
  std::string function;
  std::map<std::string, std::string> params;  // parameter name -> slot name
  std::optional<std::string> output;          // placeholder name for the return value

  bool operator==(const ExternalActionPayload&) const = default;
};

struct InformPayload {
  std::string template_text;
  std::optional<std::string> confirm_question;

  bool operator==(const InformPayload&) const = default;
};

struct Node {
  std::string id;
  std::variant<RequestPayload, ExternalActionPayload, InformPayload> payload;
  json extra = json::object();

  NodeKind kind() const { return static_cast<NodeKind>(payload.index()); }
  const RequestPayload* request() const { return std::get_if<RequestPayload>(&payload); }
  const ExternalActionPayload* external_action() const { return std::get_if<ExternalActionPayload>(&payload); }
  const InformPayload* inform() const { return std::get_if<InformPayload>(&payload); }

  bool operator==(const Node&) const = default;
};

struct Edge {
  std::string source;
  std::string target;
  std::optional<std::string> condition;
  json extra = json::object();

  bool operator==(const Edge&) const = default;
};

struct GlobalAction {
  std::string name;
  std::string response_template;
  std::vector<std::string> trigger_examples;
  json extra = json::object();

  bool operator==(const GlobalAction&) const = default;
};

struct FallbackAction {
  std::string name;
  std::string response_template;
  json extra = json::object();

  bool operator==(const FallbackAction&) const = default;
};

struct ChiefGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<GlobalAction> global_actions;
  std::vector<FallbackAction> fallback_actions;
  std::string start_node;
  json extra = json::object();

  const Node* find(std::string_view id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  // Outgoing edges of `id`, in document order.
  std::vector<const Edge*> out_edges(std::string_view id) const {
    std::vector<const Edge*> out;
    for (const auto& e : edges)
      if (e.source == id) out.push_back(&e);
    return out;
  }

  bool operator==(const ChiefGraph&) const = default;
};

class MalformedDocument : public Error {
 public:
  explicit MalformedDocument(const std::string& msg) : Error("MalformedDocument", msg) {}
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(std::string path, const std::string& msg)
      : Error("SchemaViolation", path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class UnknownNode : public Error {
 public:
  explicit UnknownNode(const std::string& id) : Error("UnknownNode", "unknown node " + id) {}
};

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaViolation(util::json_path(path, key), "missing field");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw SchemaViolation(util::json_path(path, key), "expected string");
  return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaViolation(util::json_path(path, key), "expected string");
  return it->get<std::string>();
}

inline std::vector<std::string> string_list(const json& obj, const char* key, const std::string& path) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  auto p = util::json_path(path, key);
  if (!it->is_array()) throw SchemaViolation(p, "expected array");
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& v = (*it)[i];
    // Example values are often numbers or booleans; they are kept as their JSON text.
    if (v.is_string()) out.push_back(v.get<std::string>());
    else if (v.is_primitive() && !v.is_null()) out.push_back(v.dump());
    else throw SchemaViolation(util::json_path(p, i), "expected scalar");
  }
  return out;
}

inline const json& require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw SchemaViolation(path, "expected object");
  return v;
}

inline json extra_fields(const json& obj, std::initializer_list<const char*> known) {
  json extra = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool k = false;
    for (const char* name : known) k = k || it.key() == name;
    if (!k) extra[it.key()] = it.value();
  }
  return extra;
}

inline Slot parse_slot(const json& j, const std::string& path) {
  require_object(j, path);
  Slot s;
  s.name = require_string(j, "name", path);
  auto type = require_string(j, "type", path);
  auto vt = value_type_from(type);
  if (!vt) throw SchemaViolation(util::json_path(path, "type"), "unknown slot type '" + type + "'");
  s.value_type = *vt;
  s.examples = string_list(j, "examples", path);
  s.rule = optional_string(j, "rule", path);
  s.extra = extra_fields(j, {"name", "type", "examples", "rule"});
  return s;
}

inline Node parse_node(const json& j, const std::string& path) {
  require_object(j, path);
  Node n;
  n.id = require_string(j, "id", path);
  auto type = require_string(j, "type", path);
  auto kind = node_kind_from(type);
  if (!kind) throw SchemaViolation(util::json_path(path, "type"), "unknown node type '" + type + "'");
  switch (*kind) {
    case NodeKind::request: {
      RequestPayload p;
      const json& slots = require(j, "slots", path);
      auto sp = util::json_path(path, "slots");
      if (!slots.is_array()) throw SchemaViolation(sp, "expected array");
      for (std::size_t i = 0; i < slots.size(); ++i) p.slots.push_back(parse_slot(slots[i], util::json_path(sp, i)));
      p.rule = optional_string(j, "rule", path);
      n.payload = std::move(p);
      n.extra = extra_fields(j, {"id", "type", "slots", "rule"});
      break;
    }
    case NodeKind::external_action: {
      ExternalActionPayload p;
      p.function = require_string(j, "function", path);
      if (auto it = j.find("params"); it != j.end()) {
        auto pp = util::json_path(path, "params");
        if (!it->is_object()) throw SchemaViolation(pp, "expected object");
        for (auto kv = it->begin(); kv != it->end(); ++kv) {
          if (!kv.value().is_string()) throw SchemaViolation(util::json_path(pp, kv.key()), "expected string");
          p.params[kv.key()] = kv.value().get<std::string>();
        }
      }
      p.output = optional_string(j, "output", path);
      n.payload = std::move(p);
      n.extra = extra_fields(j, {"id", "type", "function", "params", "output"});
      break;
    }
    case NodeKind::inform: {
      InformPayload p;
      p.template_text = require_string(j, "template", path);
      p.confirm_question = optional_string(j, "confirm_question", path);
      n.payload = std::move(p);
      n.extra = extra_fields(j, {"id", "type", "template", "confirm_question"});
      break;
    }
  }
  return n;
}

inline Edge parse_edge(const json& j, const std::string& path) {
  require_object(j, path);
  Edge e;
  e.source = require_string(j, "source", path);
  e.target = require_string(j, "target", path);
  e.condition = optional_string(j, "condition", path);
  e.extra = extra_fields(j, {"source", "target", "condition"});
  return e;
}

template <class F>
void each(const json& doc, const char* key, const F& f) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  auto p = util::json_path("", key);
  if (!it->is_array()) throw SchemaViolation(p, "expected array");
  for (std::size_t i = 0; i < it->size(); ++i) f((*it)[i], util::json_path(p, i));
}

}  // namespace detail

inline ChiefGraph from_json(const json& doc) {
  detail::require_object(doc, "");
  detail::require(doc, "nodes", "");
  detail::require(doc, "edges", "");
  ChiefGraph g;
  detail::each(doc, "nodes", [&](const json& j, const std::string& p) { g.nodes.push_back(detail::parse_node(j, p)); });
  detail::each(doc, "edges", [&](const json& j, const std::string& p) { g.edges.push_back(detail::parse_edge(j, p)); });
  detail::each(doc, "global_actions", [&](const json& j, const std::string& p) {
    detail::require_object(j, p);
    GlobalAction a;
    a.name = detail::require_string(j, "name", p);
    a.response_template = detail::require_string(j, "response_template", p);
    a.trigger_examples = detail::string_list(j, "trigger_examples", p);
    a.extra = detail::extra_fields(j, {"name", "response_template", "trigger_examples"});
    g.global_actions.push_back(std::move(a));
  });
  detail::each(doc, "fallback_actions", [&](const json& j, const std::string& p) {
    detail::require_object(j, p);
    FallbackAction a;
    a.name = detail::require_string(j, "name", p);
    a.response_template = detail::require_string(j, "response_template", p);
    a.extra = detail::extra_fields(j, {"name", "response_template"});
    g.fallback_actions.push_back(std::move(a));
  });
  if (auto s = detail::optional_string(doc, "start_node", "")) g.start_node = *s;
  else if (!g.nodes.empty()) g.start_node = g.nodes.front().id;
  g.extra = detail::extra_fields(doc, {"nodes", "edges", "global_actions", "fallback_actions", "start_node"});
  return g;
}

inline ChiefGraph parse_chief(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw MalformedDocument(e.what());
  }
  return from_json(doc);
}

inline json to_json(const Slot& s) {
  json j = s.extra;
  j["name"] = s.name;
  j["type"] = to_string(s.value_type);
  j["examples"] = s.examples;
  if (s.rule) j["rule"] = *s.rule;
  return j;
}

inline json to_json(const Node& n) {
  json j = n.extra;
  j["id"] = n.id;
  j["type"] = to_string(n.kind());
  if (auto* r = n.request()) {
    j["slots"] = json::array();
    for (const auto& s : r->slots) j["slots"].push_back(to_json(s));
    if (r->rule) j["rule"] = *r->rule;
  } else if (auto* a = n.external_action()) {
    j["function"] = a->function;
    if (!a->params.empty()) j["params"] = a->params;
    if (a->output) j["output"] = *a->output;
  } else if (auto* i = n.inform()) {
    j["template"] = i->template_text;
    if (i->confirm_question) j["confirm_question"] = *i->confirm_question;
  }
  return j;
}

inline json to_json(const Edge& e) {
  json j = e.extra;
  j["source"] = e.source;
  j["target"] = e.target;
  if (e.condition) j["condition"] = *e.condition;
  return j;
}

inline json to_json(const ChiefGraph& g) {
  json j = g.extra;
  j["nodes"] = json::array();
  for (const auto& n : g.nodes) j["nodes"].push_back(to_json(n));
  j["edges"] = json::array();
  for (const auto& e : g.edges) j["edges"].push_back(to_json(e));
  j["global_actions"] = json::array();
  for (const auto& a : g.global_actions) {
    json aj = a.extra;
    aj["name"] = a.name;
    aj["response_template"] = a.response_template;
    aj["trigger_examples"] = a.trigger_examples;
    j["global_actions"].push_back(std::move(aj));
  }
  j["fallback_actions"] = json::array();
  for (const auto& a : g.fallback_actions) {
    json aj = a.extra;
    aj["name"] = a.name;
    aj["response_template"] = a.response_template;
    j["fallback_actions"].push_back(std::move(aj));
  }
  if (!g.start_node.empty()) j["start_node"] = g.start_node;
  return j;
}

inline std::string serialize_chief(const ChiefGraph& g, int indent = 2) { return to_json(g).dump(indent); }

// Set of nodes reachable from `from` through at least one edge. `from` itself
// is only included when it lies on a cycle.
inline std::set<std::string> reachable_nodes(const ChiefGraph& g, std::string_view from) {
  if (!g.find(from)) throw UnknownNode(std::string(from));
  std::unordered_map<std::string, std::vector<std::string>> succ;
  for (const auto& e : g.edges) succ[e.source].push_back(e.target);
  std::set<std::string> seen;
  std::deque<std::string> queue;
  auto push_succ = [&](const std::string& id) {
    auto it = succ.find(id);
    if (it == succ.end()) return;
    for (const auto& t : it->second)
      if (seen.insert(t).second) queue.push_back(t);
  };
  push_succ(std::string(from));
  while (!queue.empty()) {
    auto id = std::move(queue.front());
    queue.pop_front();
    push_succ(id);
  }
  return seen;
}

inline Diagnostics validate_chief(const ChiefGraph& g) {
  Diagnostics out;
  auto error = [&](std::string path, std::string msg, std::string subject = {}) {
    out.push_back({Severity::error, std::move(path), std::move(msg), "schema", std::move(subject)});
  };
  auto warning = [&](std::string path, std::string msg, std::string subject = {}) {
    out.push_back({Severity::warning, std::move(path), std::move(msg), "schema", std::move(subject)});
  };

  std::set<std::string> ids;
  std::map<std::string, std::string> slot_owner;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    auto path = util::json_path("/nodes", i);
    if (n.id.empty()) error(path + "/id", "empty node id");
    else if (!ids.insert(n.id).second) error(path + "/id", "duplicate node id " + n.id, n.id);

    if (auto* r = n.request()) {
      if (r->slots.empty()) error(path + "/slots", "request node " + n.id + " has no slots", n.id);
      std::set<std::string> local;
      for (std::size_t s = 0; s < r->slots.size(); ++s) {
        const Slot& slot = r->slots[s];
        auto sp = util::json_path(path + "/slots", s);
        if (slot.name.empty()) {
          error(sp + "/name", "empty slot name", n.id);
          continue;
        }
        if (!local.insert(slot.name).second) {
          error(sp + "/name", "duplicate slot " + slot.name + " in node " + n.id, n.id);
          continue;
        }
        auto [it, fresh] = slot_owner.emplace(slot.name, n.id);
        if (!fresh) error(sp + "/name", "slot " + slot.name + " already defined by node " + it->second, n.id);
        if (slot.examples.empty()) {
          if (slot.value_type == ValueType::categorical)
            error(sp + "/examples", "categorical slot " + slot.name + " needs example values", n.id);
          else
            warning(sp + "/examples", "slot " + slot.name + " has no example values", n.id);
        }
      }
    } else if (auto* a = n.external_action()) {
      if (a->function.empty()) error(path + "/function", "external action " + n.id + " names no function", n.id);
    } else if (auto* inf = n.inform()) {
      if (inf->template_text.empty()) error(path + "/template", "inform node " + n.id + " has an empty template", n.id);
    }
  }

  // Parameter bindings can only be checked once every slot is known.
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (auto* a = g.nodes[i].external_action()) {
      for (const auto& [param, slot] : a->params)
        if (!slot_owner.count(slot))
          error(util::json_path("/nodes", i) + "/params/" + param, "unknown slot " + slot, g.nodes[i].id);
    }
  }

  if (g.start_node.empty()) error("/start_node", "missing start node");
  else if (!ids.count(g.start_node)) error("/start_node", "unknown start node " + g.start_node, g.start_node);

  std::map<std::string, int> defaults;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const Edge& e = g.edges[i];
    auto path = util::json_path("/edges", i);
    if (!ids.count(e.source)) error(path + "/source", "unknown source " + e.source, e.source);
    if (!ids.count(e.target)) error(path + "/target", "unknown target " + e.target, e.target);
    if (!e.condition && ++defaults[e.source] == 2)
      error(path, "node " + e.source + " has more than one unconditioned edge", e.source);
  }

  std::set<std::string> action_names;
  auto check_action = [&](const std::string& name, const std::string& path) {
    if (name.empty()) error(path + "/name", "empty action name");
    else if (!action_names.insert(name).second) error(path + "/name", "duplicate action name " + name, name);
    else if (ids.count(name)) error(path + "/name", "action name " + name + " collides with a node id", name);
  };
  for (std::size_t i = 0; i < g.global_actions.size(); ++i)
    check_action(g.global_actions[i].name, util::json_path("/global_actions", i));
  for (std::size_t i = 0; i < g.fallback_actions.size(); ++i)
    check_action(g.fallback_actions[i].name, util::json_path("/fallback_actions", i));

  if (!g.start_node.empty() && ids.count(g.start_node)) {
    auto reach = reachable_nodes(g, g.start_node);
    reach.insert(g.start_node);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const auto& id = g.nodes[i].id;
      if (!id.empty() && !reach.count(id)) warning(util::json_path("/nodes", i), "unreachable node " + id, id);
    }
  }
  return out;
}

// Default action inventory: one greeting global action plus the three
// fallbacks used for every task.
inline std::vector<GlobalAction> standard_global_actions() {
  return {{"hello", "Hello! How can I help you today?", {"hello", "hi", "hey"}, json::object()}};
}

inline std::vector<FallbackAction> standard_fallback_actions() {
  return {{"goodbye", "Goodbye, have a nice day!", json::object()},
          {"out_of_scope", "Sorry, I can't help with that.", json::object()},
          {"anything_else", "Is there anything else I can help you with?", json::object()}};
}

}  // namespace codial::chief
