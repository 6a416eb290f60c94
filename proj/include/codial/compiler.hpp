#pragma once

// Lowering of CHIEF graphs into GuardrailProgram IR, plus the three
// refinement-instruction checks (RI1: one check per node with the right
// body, RI2: DST invalidation sets, RI3: request-node rules) and a
// mechanical repair pass for their findings.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "codial/chief.hpp"
#include "codial/diagnostic.hpp"
#include "codial/program.hpp"
#include "codial/util.hpp"

namespace codial::compiler {

using chief::ChiefGraph;
using chief::Node;
using chief::NodeKind;
using ir::DecisionNode;
using ir::GuardrailProgram;
using ir::Predicate;

class IrreparableProgram : public Error {
 public:
  explicit IrreparableProgram(const std::string& msg) : Error("IrreparableProgram", msg) {}
};

// ---------------------------------------------------------------------------
// Request-node rules

// What a request node needs before the flow may move past it. Slots in
// `required` must all be filled; at least one slot of `any_of` must be
// filled. Free-form rules are not machine-checkable and are evaluated by the
// agent model at runtime.
struct Requirement {
  enum class Mode { all_of, any_of, free_form };
  Mode mode = Mode::all_of;
  std::vector<std::string> required;
  std::vector<std::string> any_of;
  std::string rule_text;

  bool operator==(const Requirement&) const = default;
};

namespace detail {

inline bool mentions(const std::vector<std::string>& rule_words, const std::string& lowered_rule,
                     const std::string& slot) {
  auto name = util::lower(slot);
  if (std::find(rule_words.begin(), rule_words.end(), name) != rule_words.end()) return true;
  // "departure_time" may be written "departure time"
  if (name.find('_') != std::string::npos) {
    std::string spaced = name;
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    return util::contains(lowered_rule, spaced);
  }
  return false;
}

inline bool has_word(const std::vector<std::string>& ws, std::initializer_list<const char*> cues) {
  for (const char* c : cues)
    if (std::find(ws.begin(), ws.end(), c) != ws.end()) return true;
  return false;
}

}  // namespace detail

// Recognized forms:
//   "any-of: a, b"  /  "all-of: a, b"                       (explicit)
//   prose naming slots with a disjunctive cue ("either", "or", "any",
//   "sufficient", "enough") -> any-of over the named slots
//   prose naming slots with a conjunctive cue ("and", "both", "all",
//   "required") -> all-of over the named slots
// Anything else, including prose mixing both kinds of cue, is free-form.
inline Requirement parse_rule(const std::optional<std::string>& rule, const std::vector<std::string>& slots) {
  Requirement req;
  if (!rule || util::trim(*rule).empty()) {
    req.required = slots;
    return req;
  }
  req.rule_text = *rule;
  auto lowered = util::lower(util::trim(*rule));

  for (auto [tag, mode] : {std::pair{"any-of:", Requirement::Mode::any_of}, std::pair{"all-of:", Requirement::Mode::all_of}}) {
    if (!util::starts_with(lowered, tag)) continue;
    std::vector<std::string> named;
    std::string rest = rule->substr(rule->find(':') + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto comma = rest.find(',', pos);
      auto item = util::trim(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (!item.empty()) named.push_back(item);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    bool known = !named.empty();
    for (const auto& n : named) known = known && std::find(slots.begin(), slots.end(), n) != slots.end();
    if (!known) break;
    req.mode = mode;
    if (mode == Requirement::Mode::any_of) {
      req.any_of = named;
      for (const auto& s : slots)
        if (std::find(named.begin(), named.end(), s) == named.end()) req.required.push_back(s);
    } else {
      req.required = named;
    }
    return req;
  }

  auto ws = util::words(lowered);
  std::vector<std::string> named;
  for (const auto& s : slots)
    if (detail::mentions(ws, lowered, s)) named.push_back(s);
  bool disjunctive = detail::has_word(ws, {"either", "or", "any", "sufficient", "enough"});
  bool conjunctive = detail::has_word(ws, {"and", "both", "all", "required"});
  if (!named.empty() && disjunctive != conjunctive) {
    if (disjunctive) {
      // "a departure or arrival time": a slot written right after another
      // named slot is the shared head noun, so it is needed either way.
      std::vector<std::string> group;
      for (const auto& s : named) {
        auto it = std::find(ws.begin(), ws.end(), util::lower(s));
        bool head = it != ws.begin() && it != ws.end() &&
                    std::any_of(named.begin(), named.end(), [&](const std::string& o) { return util::lower(o) == *(it - 1); });
        if (!head) group.push_back(s);
      }
      if (group.size() < 2) group = named;
      req.mode = Requirement::Mode::any_of;
      req.any_of = group;
      for (const auto& s : slots)
        if (std::find(group.begin(), group.end(), s) == group.end()) req.required.push_back(s);
    } else {
      req.mode = Requirement::Mode::all_of;
      req.required = named;
    }
    return req;
  }
  req.mode = Requirement::Mode::free_form;
  req.required = slots;
  return req;
}

inline std::vector<std::string> slot_names(const chief::RequestPayload& r) {
  std::vector<std::string> out;
  for (const auto& s : r.slots) out.push_back(s.name);
  return out;
}

inline Requirement requirement_of(const Node& n) {
  const auto* r = n.request();
  return parse_rule(r->rule, slot_names(*r));
}

// Guard that holds while the request node still has to ask the user.
inline Predicate request_guard(const Requirement& req) {
  std::vector<Predicate> missing;
  if (req.mode == Requirement::Mode::any_of) {
    std::vector<Predicate> none;
    for (const auto& s : req.any_of) none.push_back(Predicate::is_null(s));
    missing.push_back(Predicate::all(std::move(none)));
  }
  for (const auto& s : req.required) missing.push_back(Predicate::is_null(s));
  if (missing.empty()) return Predicate::negate(Predicate::always());
  auto guard = Predicate::any(std::move(missing));
  if (req.mode == Requirement::Mode::free_form)
    return Predicate::all({std::move(guard),
                           Predicate::nld("Given the rule \"" + req.rule_text +
                                          "\", does the assistant still need to ask the user for more information?")});
  return guard;
}

inline Predicate expected_guard(const Node& n) {
  switch (n.kind()) {
    case NodeKind::request: return request_guard(requirement_of(n));
    case NodeKind::external_action: return Predicate::is_null(ir::helper_name(ir::HelperKind::action, n.id));
    case NodeKind::inform: {
      auto inform = Predicate::equals(ir::helper_name(ir::HelperKind::inform, n.id), false);
      if (!n.inform()->confirm_question) return inform;
      auto answered = ir::helper_name(ir::HelperKind::answered, n.id);
      return Predicate::any({std::move(inform), Predicate::equals(answered, false), Predicate::equals(answered, "other")});
    }
  }
  return Predicate::always();
}

inline ir::NodeAction expected_action(const Node& n) {
  ir::NodeAction a;
  a.kind = n.kind();
  if (auto* r = n.request()) {
    auto req = requirement_of(n);
    if (req.mode == Requirement::Mode::any_of) {
      a.slots = req.any_of;
      a.required = req.required;
      a.joiner = "or";
    } else {
      a.slots = req.mode == Requirement::Mode::free_form ? slot_names(*r) : req.required;
    }
  } else if (auto* x = n.external_action()) {
    a.function = x->function;
    a.params = x->params;
    a.output = x->output;
  } else if (auto* i = n.inform()) {
    a.template_text = i->template_text;
    a.confirm_question = i->confirm_question;
  }
  return a;
}

// Outgoing edges with conditioned ones first, each group in document order.
inline std::vector<const chief::Edge*> ordered_out_edges(const ChiefGraph& g, std::string_view id) {
  auto edges = g.out_edges(id);
  std::stable_partition(edges.begin(), edges.end(), [](const chief::Edge* e) { return e->condition.has_value(); });
  return edges;
}

inline std::string dst_instruction(const chief::Slot& s) {
  std::vector<std::string> examples;
  for (const auto& e : s.examples) examples.push_back(json(e).dump());
  std::string text = "Based on the conversation so far, what is the value of the slot \"" + s.name + "\" (" +
                     chief::to_string(s.value_type) + ")?";
  if (!examples.empty()) text += " Example values: " + util::join(examples, ", ") + ".";
  if (s.rule) text += " Rule: " + *s.rule;
  text += " Answer with the value only, or None if the user has not provided it.";
  return text;
}

// Helper variables invalidated when a slot owned by `request_node` changes:
// those of every node reachable from it.
inline std::set<std::string> invalidation_set(const ChiefGraph& g, std::string_view request_node) {
  std::set<std::string> out;
  for (const auto& id : chief::reachable_nodes(g, request_node))
    for (auto& h : ir::helpers_of(*g.find(id))) out.insert(std::move(h));
  return out;
}

inline DecisionNode build_check(const ChiefGraph& g, const Node& n, std::set<std::string>& placed) {
  DecisionNode d{n.id, expected_guard(n), expected_action(n), {}};
  for (const auto* e : ordered_out_edges(g, n.id)) {
    ir::Branch b{e->condition, e->target, {}};
    if (placed.insert(e->target).second) b.child.push_back(build_check(g, *g.find(e->target), placed));
    d.branches.push_back(std::move(b));
  }
  return d;
}

inline std::vector<DecisionNode> build_tree(const ChiefGraph& g) {
  std::vector<DecisionNode> roots;
  std::set<std::string> placed;
  if (const Node* start = g.find(g.start_node)) {
    placed.insert(start->id);
    roots.push_back(build_check(g, *start, placed));
  }
  for (const auto& n : g.nodes)
    if (placed.insert(n.id).second) roots.push_back(build_check(g, n, placed));
  return roots;
}

inline std::string graph_hash(const ChiefGraph& g) { return util::sha256_hex(util::canonical_dump(chief::to_json(g))); }

// ---------------------------------------------------------------------------
// compile

inline GuardrailProgram compile(const ChiefGraph& g) {
  auto diags = chief::validate_chief(g);
  if (has_errors(diags)) throw ValidationFailed(std::move(diags));

  GuardrailProgram p;
  p.start_node = g.start_node;
  p.source_graph_hash = graph_hash(g);

  for (const auto& n : g.nodes)
    if (auto* r = n.request())
      for (const auto& s : r->slots) p.init_block.push_back({s.name, nullptr});
  for (const auto& n : g.nodes)
    for (const auto& h : ir::helpers_of(n)) p.init_block.push_back({h, ir::helper_reset_value(ir::parse_helper(h)->kind)});

  for (const auto& n : g.nodes) {
    if (auto* r = n.request()) {
      auto inval = invalidation_set(g, n.id);
      for (const auto& s : r->slots) p.dst_table.push_back({s.name, n.id, dst_instruction(s), inval, s.value_type});
    }
    auto helpers = ir::helpers_of(n);
    if (!helpers.empty()) p.helper_rules[n.id] = {n.id, std::move(helpers)};
  }

  for (const auto& a : g.global_actions) p.intent_table.push_back({a.name, a.trigger_examples, a.response_template});

  p.nap_tree = build_tree(g);

  for (const auto& f : g.fallback_actions) p.fallback_policy.actions.push_back({f.name, f.response_template});
  if (!p.fallback("out_of_scope"))
    for (const auto& f : chief::standard_fallback_actions())
      if (f.name == "out_of_scope") p.fallback_policy.actions.push_back({f.name, f.response_template});
  return p;
}

// ---------------------------------------------------------------------------
// Lint passes

namespace detail {

inline Diagnostic ri(const char* code, Severity sev, std::string path, std::string msg, std::string subject) {
  return {sev, std::move(path), std::move(msg), code, std::move(subject)};
}

inline std::vector<std::pair<std::optional<std::string>, std::string>> branch_shape(const DecisionNode& d) {
  std::vector<std::pair<std::optional<std::string>, std::string>> out;
  for (const auto& b : d.branches) out.emplace_back(b.condition, b.target);
  return out;
}

inline std::vector<std::pair<std::optional<std::string>, std::string>> expected_branch_shape(const ChiefGraph& g,
                                                                                            std::string_view id) {
  std::vector<std::pair<std::optional<std::string>, std::string>> out;
  for (const auto* e : ordered_out_edges(g, id)) out.emplace_back(e->condition, e->target);
  return out;
}

}  // namespace detail

inline Diagnostics lint_ri1(const GuardrailProgram& p, const ChiefGraph& g) {
  Diagnostics out;
  std::map<std::string, int> count;
  std::vector<std::string> order;
  std::map<std::string, const DecisionNode*> first;
  ir::for_each_check(p.nap_tree, [&](const DecisionNode& d) {
    if (count[d.node_id]++ == 0) {
      order.push_back(d.node_id);
      first[d.node_id] = &d;
    }
  });

  if (!p.nap_tree.empty() && g.find(g.start_node) && p.nap_tree.front().node_id != g.start_node && count[g.start_node] > 0)
    out.push_back(detail::ri("RI1", Severity::error, "/nap_tree/0", "NAP tree is not rooted at start node " + g.start_node,
                             g.start_node));

  for (const auto& n : g.nodes) {
    int c = count.count(n.id) ? count[n.id] : 0;
    if (c == 0) {
      out.push_back(detail::ri("RI1", Severity::error, "/nap_tree", "node " + n.id + " has no NAP check", n.id));
      continue;
    }
    if (c > 1)
      out.push_back(detail::ri("RI1", Severity::error, "/nap_tree",
                               "node " + n.id + " checked " + std::to_string(c) + " times", n.id));
    const DecisionNode& d = *first[n.id];
    if (d.action.kind != n.kind()) {
      out.push_back(detail::ri("RI1", Severity::error, "/nap_tree",
                               "node " + n.id + " check performs a " + chief::to_string(d.action.kind) +
                                   " action but the node is " + chief::to_string(n.kind()),
                               n.id));
    } else {
      if (d.action != expected_action(n))
        out.push_back(detail::ri("RI1", Severity::error, "/nap_tree",
                                 "node " + n.id + " check body does not match the node definition", n.id));
      if (n.kind() != NodeKind::request && d.guard != expected_guard(n))
        out.push_back(detail::ri("RI1", Severity::error, "/nap_tree",
                                 "node " + n.id + " guard does not test its helper variables", n.id));
    }
    if (detail::branch_shape(d) != detail::expected_branch_shape(g, n.id))
      out.push_back(detail::ri("RI1", Severity::error, "/nap_tree",
                               "node " + n.id + " branches do not match its outgoing edges", n.id));
  }
  for (const auto& id : order)
    if (!g.find(id))
      out.push_back(detail::ri("RI1", Severity::error, "/nap_tree", "spurious check for unknown node " + id, id));
  return out;
}

inline Diagnostics lint_ri2(const GuardrailProgram& p, const ChiefGraph& g) {
  Diagnostics out;
  std::map<std::string, std::vector<std::size_t>> entries;
  for (std::size_t i = 0; i < p.dst_table.size(); ++i) entries[p.dst_table[i].slot].push_back(i);

  std::set<std::string> known;
  for (const auto& n : g.nodes) {
    const auto* r = n.request();
    if (!r) continue;
    auto expected = invalidation_set(g, n.id);
    for (const auto& s : r->slots) {
      known.insert(s.name);
      auto it = entries.find(s.name);
      if (it == entries.end()) {
        out.push_back(detail::ri("RI2", Severity::error, "/dst_table", "slot " + s.name + " has no DST entry", s.name));
        continue;
      }
      if (it->second.size() > 1)
        out.push_back(detail::ri("RI2", Severity::error, "/dst_table",
                                 "slot " + s.name + " has " + std::to_string(it->second.size()) + " DST entries", s.name));
      auto idx = it->second.front();
      auto path = util::json_path("/dst_table", idx) + "/invalidates";
      const auto& actual = p.dst_table[idx].invalidates;
      for (const auto& h : expected)
        if (!actual.count(h))
          out.push_back(detail::ri("RI2", Severity::error, path, "slot " + s.name + " does not invalidate " + h, s.name));
      for (const auto& h : actual)
        if (!expected.count(h))
          out.push_back(
              detail::ri("RI2", Severity::error, path, "slot " + s.name + " invalidates unrelated variable " + h, s.name));
    }
  }
  for (std::size_t i = 0; i < p.dst_table.size(); ++i)
    if (!known.count(p.dst_table[i].slot))
      out.push_back(detail::ri("RI2", Severity::error, util::json_path("/dst_table", i),
                               "DST entry for unknown slot " + p.dst_table[i].slot, p.dst_table[i].slot));
  return out;
}

namespace detail {

// Truth table of a slot-only guard over every null/filled assignment.
inline std::optional<std::vector<bool>> truth_table(const Predicate& guard, const std::vector<std::string>& slots) {
  std::set<std::string> vars;
  ir::collect_vars(guard, vars);
  for (const auto& v : vars)
    if (std::find(slots.begin(), slots.end(), v) == slots.end()) return std::nullopt;
  if (ir::uses_nld(guard)) return std::nullopt;
  std::vector<bool> out;
  const std::size_t n = slots.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    auto lookup = [&](const std::string& v) -> json {
      auto k = static_cast<std::size_t>(std::find(slots.begin(), slots.end(), v) - slots.begin());
      return (mask >> k) & 1 ? json("filled") : json(nullptr);
    };
    out.push_back(ir::evaluate(guard, lookup, [](const std::string&) { return false; }));
  }
  return out;
}

}  // namespace detail

inline Diagnostics lint_ri3(const GuardrailProgram& p, const ChiefGraph& g) {
  Diagnostics out;
  for (const auto& n : g.nodes) {
    const auto* r = n.request();
    if (!r) continue;
    auto req = requirement_of(n);
    if (req.mode == Requirement::Mode::free_form) {
      out.push_back(detail::ri("RI3", Severity::warning, "/nap_tree",
                               "node " + n.id + " rule requires human review: " + req.rule_text, n.id));
      continue;
    }
    const DecisionNode* d = p.check(n.id);
    if (!d || d->action.kind != NodeKind::request) continue;  // RI1 territory
    auto slots = slot_names(*r);
    if (slots.size() > 16) {
      out.push_back(detail::ri("RI3", Severity::warning, "/nap_tree",
                               "node " + n.id + " has too many slots to check its guard exhaustively", n.id));
      continue;
    }
    auto actual = detail::truth_table(d->guard, slots);
    if (!actual) {
      out.push_back(detail::ri("RI3", Severity::error, "/nap_tree",
                               "node " + n.id + " guard is not a predicate over the node's slots", n.id));
      continue;
    }
    auto expected = detail::truth_table(request_guard(req), slots);
    if (*actual == *expected) continue;
    auto all_of = detail::truth_table(request_guard(parse_rule(std::nullopt, slots)), slots);
    if (req.mode == Requirement::Mode::any_of && *actual == *all_of)
      out.push_back(detail::ri("RI3", Severity::error, "/nap_tree",
                               "node " + n.id + " guard requires all slots but its rule accepts any of: " +
                                   util::join(req.any_of, ", "),
                               n.id));
    else
      out.push_back(detail::ri("RI3", Severity::error, "/nap_tree", "node " + n.id + " guard does not reflect its rule",
                               n.id));
  }
  return out;
}

inline Diagnostics lint_all(const GuardrailProgram& p, const ChiefGraph& g) {
  Diagnostics out = lint_ri1(p, g);
  for (auto& d : lint_ri2(p, g)) out.push_back(std::move(d));
  for (auto& d : lint_ri3(p, g)) out.push_back(std::move(d));
  return out;
}

// ---------------------------------------------------------------------------
// repair

namespace detail {

inline void drop_duplicate_checks(std::vector<DecisionNode>& roots) {
  std::set<std::string> seen;
  std::function<void(DecisionNode&)> go = [&](DecisionNode& d) {
    for (auto& b : d.branches) {
      if (b.child.empty()) continue;
      if (!seen.insert(b.child.front().node_id).second) {
        b.child.clear();
        continue;
      }
      go(b.child.front());
    }
  };
  std::vector<DecisionNode> kept;
  for (auto& r : roots) {
    if (!seen.insert(r.node_id).second) continue;
    go(r);
    kept.push_back(std::move(r));
  }
  roots = std::move(kept);
}

inline void fix_bodies(std::vector<DecisionNode>& roots, const ChiefGraph& g) {
  ir::for_each_check_mut(roots, [&](DecisionNode& d) {
    const Node* n = g.find(d.node_id);
    if (!n) return;
    bool kind_changed = d.action.kind != n->kind();
    d.action = expected_action(*n);
    if (kind_changed || n->kind() != NodeKind::request) d.guard = expected_guard(*n);
    std::vector<ir::Branch> rebuilt;
    for (const auto* e : ordered_out_edges(g, n->id)) {
      ir::Branch b{e->condition, e->target, {}};
      for (auto& old : d.branches)
        if (old.target == e->target && !old.child.empty()) {
          b.child = std::move(old.child);
          break;
        }
      rebuilt.push_back(std::move(b));
    }
    d.branches = std::move(rebuilt);
  });
}

inline bool attach_missing(std::vector<DecisionNode>& roots, const ChiefGraph& g, const std::string& id,
                           std::set<std::string>& placed) {
  bool done = false;
  ir::for_each_check_mut(roots, [&](DecisionNode& d) {
    if (done) return;
    for (auto& b : d.branches)
      if (b.target == id && b.child.empty()) {
        placed.insert(id);
        b.child.push_back(build_check(g, *g.find(id), placed));
        done = true;
        return;
      }
  });
  return done;
}

}  // namespace detail

inline GuardrailProgram repair(GuardrailProgram p, const ChiefGraph& g, const Diagnostics& diags) {
  bool fix_tree = false, fix_dst = false;
  for (const auto& d : diags) {
    if ((d.code == "RI1" || d.code == "RI3") && !d.subject.empty() && !g.find(d.subject))
      throw IrreparableProgram("diagnostic references node " + d.subject + " which is not in the graph");
    fix_tree = fix_tree || d.code == "RI1";
    fix_dst = fix_dst || d.code == "RI2";
  }

  if (fix_tree) {
    detail::drop_duplicate_checks(p.nap_tree);
    detail::fix_bodies(p.nap_tree, g);
    // Body fixes can drop subtrees hanging off removed branches, so the
    // placement scan runs afterwards.
    detail::drop_duplicate_checks(p.nap_tree);
    std::set<std::string> placed;
    ir::for_each_check(p.nap_tree, [&](const DecisionNode& d) { placed.insert(d.node_id); });
    if (!placed.count(g.start_node)) {
      placed.insert(g.start_node);
      p.nap_tree.insert(p.nap_tree.begin(), build_check(g, *g.find(g.start_node), placed));
    }
    for (const auto& n : g.nodes) {
      if (placed.count(n.id)) continue;
      if (!detail::attach_missing(p.nap_tree, g, n.id, placed)) {
        placed.insert(n.id);
        p.nap_tree.push_back(build_check(g, n, placed));
      }
    }
    if (!lint_ri1(p, g).empty()) p.nap_tree = build_tree(g);
  }

  for (const auto& d : diags) {
    if (d.code != "RI3" || d.severity != Severity::error) continue;
    ir::for_each_check_mut(p.nap_tree, [&](DecisionNode& c) {
      if (c.node_id == d.subject) c.guard = expected_guard(*g.find(d.subject));
    });
  }

  if (fix_dst) {
    std::vector<ir::DstEntry> table;
    for (const auto& n : g.nodes) {
      const auto* r = n.request();
      if (!r) continue;
      auto inval = invalidation_set(g, n.id);
      for (const auto& s : r->slots) {
        const ir::DstEntry* old = p.dst_entry(s.name);
        ir::DstEntry e = old ? *old : ir::DstEntry{s.name, n.id, dst_instruction(s), {}, s.value_type};
        e.node_id = n.id;
        e.invalidates = inval;
        table.push_back(std::move(e));
      }
    }
    p.dst_table = std::move(table);
  }
  return p;
}

}  // namespace codial::compiler
