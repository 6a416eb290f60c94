#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "codial/codial.hpp"

namespace testing_support {

using codial::json;
using namespace codial;

inline std::string fixture_path(const std::string& name) { return std::string(CODIAL_FIXTURES_DIR) + "/" + name; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline chief::ChiefGraph load_graph(const std::string& name) { return chief::parse_chief(read_file(fixture_path(name))); }

// Deterministic external functions for the fixture flows.
inline runtime::FunctionRegistry fixture_registry() {
  auto r = runtime::FunctionRegistry::with_stubs();
  r.add("book_table", [](const json& a) { return json("T-" + util::sha256_hex(util::canonical_dump(a)).substr(0, 4)); });
  r.add("get_balance", [](const json& a) { return json(a.at("account") == json("AC-1001") ? 250 : 0); });
  return r;
}

// One DST reply per slot of the program, in table order. Slots missing from
// `values` answer None.
inline void script_dst(backend::MockBackend& mock, const ir::GuardrailProgram& p, const std::map<std::string, std::string>& values) {
  for (const auto& e : p.dst_table) {
    auto it = values.find(e.slot);
    mock.add(backend::MockEntry::reply_to(backend::Purpose::value_from_instruction, e.slot, it == values.end() ? "None" : it->second));
  }
}

inline void script_bool(backend::MockBackend& mock, const std::string& subject, bool value) {
  mock.add(backend::MockEntry::reply_to(backend::Purpose::boolean_nld, subject, value ? "True" : "False"));
}

// Random structurally valid graph with up to `max_nodes` nodes. Each source
// has at most one unconditioned edge; slot names are globally unique.
inline chief::ChiefGraph random_graph(std::mt19937_64& rng, int max_nodes, bool with_rules = true) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  chief::ChiefGraph g;
  int n = pick(1, max_nodes);
  int slot_counter = 0;
  for (int i = 0; i < n; ++i) {
    chief::Node node;
    node.id = "n" + std::to_string(i);
    switch (pick(0, 2)) {
      case 0: {
        chief::RequestPayload r;
        int k = pick(1, 3);
        for (int j = 0; j < k; ++j) {
          chief::Slot s;
          s.name = "s" + std::to_string(slot_counter++);
          s.examples = {"x"};
          r.slots.push_back(s);
        }
        if (with_rules && k >= 2 && pick(0, 2) == 0)
          r.rule = "any-of: " + r.slots[0].name + ", " + r.slots[1].name;
        node.payload = r;
        break;
      }
      case 1: {
        chief::ExternalActionPayload x;
        x.function = "fn" + std::to_string(i);
        node.payload = x;
        break;
      }
      default: {
        chief::InformPayload f;
        f.template_text = "info " + std::to_string(i);
        if (pick(0, 3) == 0) f.confirm_question = "ok?";
        node.payload = f;
      }
    }
    g.nodes.push_back(node);
  }
  int edges = pick(0, n * 2);
  std::map<std::string, bool> has_default;
  for (int e = 0; e < edges; ++e) {
    chief::Edge edge;
    edge.source = g.nodes[pick(0, n - 1)].id;
    edge.target = g.nodes[pick(0, n - 1)].id;
    if (has_default[edge.source] || pick(0, 1) == 0) edge.condition = "cond " + std::to_string(e);
    else has_default[edge.source] = true;
    g.edges.push_back(edge);
  }
  g.start_node = g.nodes.front().id;
  return g;
}

}  // namespace testing_support
