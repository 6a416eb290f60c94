#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "codial/codial.hpp"

using namespace codial;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IOError", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IOError", "cannot write " + path);
  out << text;
}

// A flow document has "nodes"; anything else is read as compiled IR.
struct Loaded {
  ir::GuardrailProgram program;
  std::optional<chief::ChiefGraph> graph;
};

Loaded load_input(const std::string& path, const std::string& flow = {}) {
  auto text = read_text(path);
  json j = json::parse(text, nullptr, false);
  Loaded out;
  if (!j.is_discarded() && j.is_object() && j.contains("nodes")) {
    out.graph = chief::parse_chief(text);
    out.program = compiler::compile(*out.graph);
  } else {
    out.program = ir::parse_program(text);
  }
  if (!flow.empty()) out.graph = chief::parse_chief(read_text(flow));
  return out;
}

struct BackendFlags {
  std::string kind = "mock";
  std::string mock_file;
  std::string config;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "Language-model backend")->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--mock", mock_file, "Scripted replies for the mock backend (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--config", config, "Backend configuration file (JSON)")->check(CLI::ExistingFile);
  }

  std::unique_ptr<backend::Backend> make() const {
    if (kind == "http") {
      json cfg = config.empty() ? json::object() : json::parse(read_text(config));
      auto c = backend::http_config_from_json(cfg);
      if (c.api_key.empty()) throw Error("ConfigError", "CODIAL_API_KEY is not set");
      return std::make_unique<backend::HttpBackend>(c);
    }
    auto mock = std::make_unique<backend::MockBackend>();
    if (mock_file.empty()) return mock;
    json j = json::parse(read_text(mock_file));
    for (const auto& e : j.is_object() ? j.at("entries") : j) mock->add(backend::mock_entry_from_json(e));
    return mock;
  }
};

void print_diagnostics(const Diagnostics& diags) {
  for (const auto& d : diags) std::cerr << format(d) << '\n';
}

void print_state(const runtime::ConversationState& s) {
  std::size_t width = 8;
  for (const auto* side : {&s.slots, &s.helpers})
    for (const auto& [k, v] : *side) width = std::max(width, k.size());
  auto row = [&](const std::string& k, const std::string& v) {
    std::cout << "  " << k << std::string(width - k.size() + 2, ' ') << v << '\n';
  };
  row("variable", "value");
  for (const auto* side : {&s.slots, &s.helpers})
    for (const auto& [k, v] : *side) row(k, v.dump());
}

void print_trace(const runtime::Trace& t) {
  for (const auto& step : t) std::cout << "  [" << step.point << "] " << step.predicate << " -> " << step.outcome << '\n';
}

std::atomic<service::Service*> serving{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile, run and evaluate dialogue-flow guardrail programs"};
  app.require_subcommand(1);

  // validate
  std::string flow_path;
  auto* validate = app.add_subcommand("validate", "Check a flow document");
  validate->add_option("flow", flow_path)->required()->check(CLI::ExistingFile);

  // compile
  std::string out_path;
  auto* compile = app.add_subcommand("compile", "Compile a flow into a guardrail program");
  compile->add_option("flow", flow_path)->required()->check(CLI::ExistingFile);
  compile->add_option("-o,--output", out_path, "Output file (default: stdout)");

  // emit-colang
  std::string input;
  auto* emit = app.add_subcommand("emit-colang", "Write the program as Colang");
  emit->add_option("input", input, "Flow or compiled program")->required()->check(CLI::ExistingFile);
  emit->add_option("-o,--output", out_path);

  // lint
  bool do_repair = false;
  auto* lint = app.add_subcommand("lint", "Run the refinement checks against the source flow");
  lint->add_option("program", input)->required()->check(CLI::ExistingFile);
  lint->add_option("--flow", flow_path)->required()->check(CLI::ExistingFile);
  lint->add_flag("--repair", do_repair, "Write a repaired program");
  lint->add_option("-o,--output", out_path);

  // gen-code
  std::string paradigm = "structured";
  int retries = 4;
  bool print_prompt = false, refine = false;
  BackendFlags backend_flags;
  auto* gen = app.add_subcommand("gen-code", "Generate Colang with a language model");
  gen->add_option("flow", flow_path)->required()->check(CLI::ExistingFile);
  gen->add_option("--paradigm", paradigm)->check(CLI::IsMember({"free", "structured"}));
  gen->add_option("--retries", retries)->check(CLI::PositiveNumber);
  gen->add_flag("--print-prompt", print_prompt, "Print the assembled prompt and stop");
  gen->add_flag("--refine", refine, "Apply the three refinement rounds");
  gen->add_option("-o,--output", out_path);
  backend_flags.add_to(gen);

  // chat
  std::string script, preamble;
  bool show_state = false, show_trace = false;
  auto* chat = app.add_subcommand("chat", "Converse with a program");
  chat->add_option("input", input)->required()->check(CLI::ExistingFile);
  chat->add_option("--script", script, "User messages, one per line")->check(CLI::ExistingFile);
  chat->add_option("--preamble", preamble, "Context preamble for every prompt");
  chat->add_flag("--show-state", show_state);
  chat->add_flag("--show-trace", show_trace);
  backend_flags.add_to(chat);

  // serve
  int port = 8080;
  std::string host = "127.0.0.1";
  service::ServiceOptions svc_opt;
  auto* serve = app.add_subcommand("serve", "Host conversations over HTTP");
  serve->add_option("input", input)->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve->add_option("--host", host);
  serve->add_option("--cors-origin", svc_opt.cors_origin);
  serve->add_option("--transcript-dir", svc_opt.transcript_dir);
  serve->add_flag("--replay", svc_opt.replay, "Restore sessions from the transcript directory");
  serve->add_option("--preamble", svc_opt.context_preamble);
  backend_flags.add_to(serve);

  // eval
  std::string data, json_out, csv_out, smoothing = "none";
  eval::EvalOptions eval_opt;
  auto* ev = app.add_subcommand("eval", "Evaluate against recorded conversations");
  ev->add_option("input", input)->required()->check(CLI::ExistingFile);
  ev->add_option("--flow", flow_path, "Source flow when the input is a compiled program")->check(CLI::ExistingFile);
  ev->add_option("--data", data, "Ground-truth conversations (JSONL)")->required()->check(CLI::ExistingFile);
  ev->add_flag("--oracle-state", eval_opt.oracle_state);
  ev->add_option("--bleu-smooth", smoothing)->check(CLI::IsMember({"none", "exp"}));
  ev->add_option("--parallel", eval_opt.parallelism)->check(CLI::PositiveNumber);
  ev->add_option("--json", json_out, "Write the full report as JSON");
  ev->add_option("--csv", csv_out, "Write per-turn records as CSV");
  ev->add_option("--preamble", eval_opt.context_preamble);
  backend_flags.add_to(ev);

  // optimize-dst
  std::string slot;
  std::uint64_t seed = 0;
  std::string ir_out;
  auto* opt = app.add_subcommand("optimize-dst", "Optimize one slot's extraction instruction");
  opt->add_option("input", input)->required()->check(CLI::ExistingFile);
  opt->add_option("--slot", slot)->required();
  opt->add_option("--data", data)->required()->check(CLI::ExistingFile);
  opt->add_option("--seed", seed);
  opt->add_option("-o,--output", out_path, "Write the run record as JSON");
  opt->add_option("--write-ir", ir_out, "Write the program with the best instruction");
  backend_flags.add_to(opt);

  // set-instruction
  std::string instruction_file;
  auto* seti = app.add_subcommand("set-instruction", "Replace a slot's instruction with text from a file");
  seti->add_option("input", input)->required()->check(CLI::ExistingFile);
  seti->add_option("--slot", slot)->required();
  seti->add_option("--file", instruction_file)->required()->check(CLI::ExistingFile);
  seti->add_option("-o,--output", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      auto diags = chief::validate_chief(chief::parse_chief(read_text(flow_path)));
      print_diagnostics(diags);
      return has_errors(diags) ? 1 : 0;
    }

    if (*compile) {
      write_text(out_path, ir::serialize_program(compiler::compile(chief::parse_chief(read_text(flow_path)))));
      return 0;
    }

    if (*emit) {
      write_text(out_path, colang::emit_colang(load_input(input).program));
      return 0;
    }

    if (*lint) {
      auto program = ir::parse_program(read_text(input));
      auto graph = chief::parse_chief(read_text(flow_path));
      auto diags = compiler::lint_all(program, graph);
      print_diagnostics(diags);
      if (do_repair) {
        auto fixed = compiler::repair(program, graph, diags);
        write_text(out_path, ir::serialize_program(fixed));
        return compiler::lint_all(fixed, graph).empty() ? 0 : 1;
      }
      return has_errors(diags) ? 1 : 0;
    }

    if (*gen) {
      auto graph = chief::parse_chief(read_text(flow_path));
      auto bundle = gcg::assemble_gcg_prompt(graph, paradigm);
      if (print_prompt) {
        std::cout << "# system\n" << bundle.system << "\n# user\n" << bundle.user << '\n';
        return 0;
      }
      auto be = backend_flags.make();
      auto result = gcg::llm_generate_code(bundle, *be, retries);
      std::cerr << "accepted after " << result.attempts << " attempt(s)\n";
      std::string code = result.code;
      if (refine) {
        auto [refined, log] = gcg::refine_code(code, graph, *be, {1, 2, 3}, bundle.system);
        for (const auto& r : log) std::cerr << "RI" << r.ri << (r.accepted ? " accepted\n" : " rejected\n");
        code = refined;
      }
      write_text(out_path, code);
      return 0;
    }

    if (*chat) {
      auto loaded = load_input(input);
      auto be = backend_flags.make();
      auto registry = runtime::FunctionRegistry::with_stubs();
      runtime::Agent agent(loaded.program, *be, registry);
      auto state = runtime::initial_state(loaded.program, preamble);
      std::ifstream file;
      if (!script.empty()) file.open(script);
      std::istream& in = script.empty() ? std::cin : file;
      bool interactive = script.empty();
      int failures = 0;
      std::string line;
      while ((interactive && std::cout << "> " << std::flush, std::getline(in, line))) {
        if (util::trim(line).empty() || util::starts_with(util::trim(line), "#")) continue;
        if (!interactive) std::cout << "user: " << line << '\n';
        try {
          auto [r, next] = agent.run_turn(state, line);
          state = std::move(next);
          std::cout << "bot: " << r.utterance << '\n';
          if (show_trace) print_trace(r.trace);
          if (show_state) print_state(state);
        } catch (const runtime::TurnError& e) {
          ++failures;
          std::cerr << "error: " << e.what() << '\n';
          if (show_trace) print_trace(e.trace());
        }
      }
      return failures ? 1 : 0;
    }

    if (*serve) {
      auto loaded = load_input(input);
      auto be = backend_flags.make();
      service::Service svc(loaded.program, loaded.graph, *be, runtime::FunctionRegistry::with_stubs(), svc_opt);
      serving = &svc;
      std::signal(SIGINT, [](int) {
        if (auto* s = serving.load()) s->stop();
      });
      std::cerr << "listening on http://" << host << ":" << port << '\n';
      if (!svc.listen(host, port)) throw Error("IOError", "cannot listen on " + host + ":" + std::to_string(port));
      serving = nullptr;
      return 0;
    }

    if (*ev) {
      auto loaded = load_input(input, flow_path);
      if (!loaded.graph) throw Error("InvalidArgument", "eval needs the source flow: pass a flow or --flow");
      auto be = backend_flags.make();
      eval_opt.bleu_smoothing = smoothing == "exp" ? metrics::Smoothing::exp : metrics::Smoothing::none;
      auto report = eval::evaluate(loaded.program, *loaded.graph, eval::load_dialogues(data), *be,
                                   runtime::FunctionRegistry::with_stubs(), eval_opt);
      std::cout << eval::summary_table(report);
      if (!json_out.empty()) write_text(json_out, eval::to_json(report).dump(2) + "\n");
      if (!csv_out.empty()) write_text(csv_out, eval::to_csv(report));
      return 0;
    }

    if (*opt) {
      auto loaded = load_input(input);
      const auto* entry = loaded.program.dst_entry(slot);
      if (!entry) throw Error("UnknownSlot", "no DST entry for slot " + slot);
      auto be = backend_flags.make();
      promptopt::OptOptions o;
      o.seed = seed;
      auto run = promptopt::optimize_dst(*entry, promptopt::labeled_turns(eval::load_dialogues(data), slot), *be, *be, o);
      auto text = promptopt::to_json(run).dump(2) + "\n";
      if (out_path.empty()) std::cout << text;
      else write_text(out_path, text);
      if (!ir_out.empty()) {
        promptopt::set_instruction(loaded.program, slot, run.best_instruction);
        write_text(ir_out, ir::serialize_program(loaded.program));
      }
      if (run.aborted) {
        std::cerr << "stopped early: " << *run.aborted << '\n';
        return 1;
      }
      return 0;
    }

    if (*seti) {
      auto loaded = load_input(input);
      promptopt::set_instruction(loaded.program, slot, std::string(util::trim(read_text(instruction_file))));
      write_text(out_path, ir::serialize_program(loaded.program));
      return 0;
    }
  } catch (const ValidationFailed& e) {
    print_diagnostics(e.diagnostics());
    return 1;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "MalformedDocument: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
