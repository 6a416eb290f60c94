#pragma once

// Prompt assembly for LLM code generation, generate-and-check retries,
// refinement rounds and success statistics over repeated trials.

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "codial/backend.hpp"
#include "codial/chief.hpp"
#include "codial/colang.hpp"
#include "codial/util.hpp"

namespace codial::gcg {

enum class Paradigm { free, structured };

class UnknownParadigm : public Error {
 public:
  explicit UnknownParadigm(const std::string& name) : Error("UnknownParadigm", "unknown paradigm " + name) {}
};

inline const char* to_string(Paradigm p) { return p == Paradigm::free ? "free" : "structured"; }

inline Paradigm paradigm_from(std::string_view s) {
  if (s == "free") return Paradigm::free;
  if (s == "structured") return Paradigm::structured;
  throw UnknownParadigm(std::string(s));
}

// CODIAL_PROMPTS_DIR in the environment wins over the build-time default.
inline std::string prompts_dir() {
  if (const char* env = std::getenv("CODIAL_PROMPTS_DIR")) return env;
#ifdef CODIAL_PROMPTS_DIR
  return CODIAL_PROMPTS_DIR;
#else
  return "prompts";
#endif
}

inline std::string load_template(const std::string& dir, const std::string& name) {
  std::ifstream in(dir + "/" + name);
  if (!in) throw Error("IOError", "missing prompt template " + dir + "/" + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replaces every `{{key}}`. Unknown placeholders stay as written.
inline std::string fill(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string tag = "{{" + key + "}}";
    for (auto pos = tmpl.find(tag); pos != std::string::npos; pos = tmpl.find(tag, pos + value.size()))
      tmpl.replace(pos, tag.size(), value);
  }
  return tmpl;
}

struct PromptBundle {
  Paradigm paradigm = Paradigm::structured;
  std::string system;
  std::string user;
};

inline PromptBundle assemble_gcg_prompt(const chief::ChiefGraph& g, Paradigm paradigm, const std::string& dir = prompts_dir()) {
  std::string base = to_string(paradigm);
  auto graph_json = chief::serialize_chief(g);
  return {paradigm, fill(load_template(dir, base + "_system.txt"), {{"graph_json", graph_json}}),
          fill(load_template(dir, base + "_user.txt"), {{"graph_json", graph_json}})};
}

inline PromptBundle assemble_gcg_prompt(const chief::ChiefGraph& g, std::string_view paradigm,
                                        const std::string& dir = prompts_dir()) {
  return assemble_gcg_prompt(g, paradigm_from(paradigm), dir);
}

// Model replies often wrap code in a markdown fence.
inline std::string strip_fences(std::string_view reply) {
  std::string text(reply);
  auto open = text.find("```");
  if (open == std::string::npos) return text;
  auto body = text.find('\n', open);
  if (body == std::string::npos) return text;
  auto close = text.find("```", body + 1);
  return text.substr(body + 1, close == std::string::npos ? std::string::npos : close - body - 1);
}

struct Generation {
  std::string code;
  int attempts = 0;
};

class GenerationExhausted : public Error {
 public:
  GenerationExhausted(int attempts, std::vector<colang::SyntaxError> last)
      : Error("GenerationExhausted", "no candidate passed the syntax check after " + std::to_string(attempts) + " attempts"),
        attempts_(attempts), last_errors_(std::move(last)) {}
  int attempts() const noexcept { return attempts_; }
  const std::vector<colang::SyntaxError>& last_errors() const noexcept { return last_errors_; }

 private:
  int attempts_;
  std::vector<colang::SyntaxError> last_errors_;
};

inline Generation llm_generate_code(const PromptBundle& bundle, backend::Backend& backend, int max_retries = 4) {
  if (max_retries < 1) throw Error("InvalidArgument", "max_retries must be at least 1");
  std::vector<colang::SyntaxError> last;
  for (int attempt = 1; attempt <= max_retries; ++attempt) {
    auto reply = backend.complete(backend::make_request(backend::Purpose::codegen, bundle.system, bundle.user, "codegen"));
    auto code = strip_fences(reply);
    auto check = colang::check_syntax(code);
    if (check.ok()) return {code, attempt};
    last = std::move(check.errors);
  }
  throw GenerationExhausted(max_retries, std::move(last));
}

inline std::string refinement_prompt(int ri, const chief::ChiefGraph& g, const std::string& code,
                                     const std::string& dir = prompts_dir()) {
  if (ri < 1 || ri > 3) throw Error("InvalidArgument", "refinement instruction must be 1, 2 or 3");
  return fill(load_template(dir, "ri" + std::to_string(ri) + ".txt"),
              {{"graph_json", chief::serialize_chief(g)}, {"code", code}});
}

struct RefinementRound {
  int ri = 0;
  bool accepted = false;  // false: the revision failed the syntax check and was dropped
};

// Applies the refinement instructions in the given order. A revision that
// fails the syntax check leaves the previous program in place.
inline std::pair<std::string, std::vector<RefinementRound>> refine_code(std::string code, const chief::ChiefGraph& g,
                                                                        backend::Backend& backend,
                                                                        const std::vector<int>& rounds = {1, 2, 3},
                                                                        const std::string& system = {},
                                                                        const std::string& dir = prompts_dir()) {
  std::vector<RefinementRound> log;
  for (int ri : rounds) {
    auto reply = backend.complete(
        backend::make_request(backend::Purpose::codegen, system, refinement_prompt(ri, g, code, dir), "ri" + std::to_string(ri)));
    auto revised = strip_fences(reply);
    bool ok = colang::check_syntax(revised).ok();
    if (ok) code = std::move(revised);
    log.push_back({ri, ok});
  }
  return {code, log};
}

// Per-task success counts over repeated generation trials.
struct SuccessStats {
  int trials = 0;
  int tasks = 0;
  int min_successes = 0;
  int max_successes = 0;
  double mean_successes = 0;

  double min_rate() const { return trials ? 100.0 * min_successes / trials : 0; }
  double max_rate() const { return trials ? 100.0 * max_successes / trials : 0; }
  double mean_rate() const { return trials ? 100.0 * mean_successes / trials : 0; }
};

// outcomes[task][trial] is true when that generation passed the syntax check.
inline SuccessStats success_stats(const std::vector<std::vector<bool>>& outcomes) {
  SuccessStats s;
  if (outcomes.empty()) return s;
  s.tasks = static_cast<int>(outcomes.size());
  s.trials = static_cast<int>(outcomes.front().size());
  s.min_successes = s.trials;
  int total = 0;
  for (const auto& task : outcomes) {
    if (static_cast<int>(task.size()) != s.trials) throw Error("InvalidArgument", "every task needs the same number of trials");
    int ok = 0;
    for (bool b : task) ok += b;
    s.min_successes = std::min(s.min_successes, ok);
    s.max_successes = std::max(s.max_successes, ok);
    total += ok;
  }
  s.mean_successes = static_cast<double>(total) / s.tasks;
  return s;
}

inline json to_json(const SuccessStats& s) {
  return {{"tasks", s.tasks},
          {"trials", s.trials},
          {"min", {{"successes", s.min_successes}, {"rate", s.min_rate()}}},
          {"max", {{"successes", s.max_successes}, {"rate", s.max_rate()}}},
          {"average", {{"successes", s.mean_successes}, {"rate", s.mean_rate()}}}};
}

// One generation attempt per (task, trial): each trial is a single call with
// no retries, and the outcome is whether it passed the syntax check.
inline std::vector<std::vector<bool>> run_trials(const std::vector<chief::ChiefGraph>& tasks, Paradigm paradigm, int trials,
                                                 backend::Backend& backend, const std::string& dir = prompts_dir()) {
  std::vector<std::vector<bool>> out;
  for (const auto& g : tasks) {
    auto bundle = assemble_gcg_prompt(g, paradigm, dir);
    std::vector<bool> row;
    for (int t = 0; t < trials; ++t) {
      try {
        llm_generate_code(bundle, backend, 1);
        row.push_back(true);
      } catch (const GenerationExhausted&) {
        row.push_back(false);
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace codial::gcg
