#pragma once

// Validation-gated hill climbing over a single slot's DST instruction.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "codial/backend.hpp"
#include "codial/eval.hpp"
#include "codial/metrics.hpp"
#include "codial/program.hpp"
#include "codial/runtime.hpp"

namespace codial::promptopt {

class InsufficientData : public Error {
 public:
  InsufficientData(const std::string& slot, std::size_t have, std::size_t need)
      : Error("InsufficientData", "slot " + slot + " has " + std::to_string(have) + " labeled turns, need " +
                                      std::to_string(need)) {}
};

// One labeled turn: the conversation up to and including the user message,
// and the gold value of the slot afterwards.
struct LabeledTurn {
  std::vector<runtime::Message> history;
  json gold;
};

// Every ground-truth turn that carries a belief state, in file order.
inline std::vector<LabeledTurn> labeled_turns(const std::vector<eval::GroundTruthDialogue>& dialogues, const std::string& slot) {
  std::vector<LabeledTurn> out;
  for (const auto& d : dialogues) {
    std::vector<runtime::Message> history;
    for (const auto& t : d.turns) {
      history.push_back({"user", t.user});
      if (t.state) out.push_back({history, t.state->count(slot) ? t.state->at(slot) : json(nullptr)});
      history.push_back({"bot", t.wizard});
    }
  }
  return out;
}

inline double compute_score(const std::vector<json>& predictions, const std::vector<json>& gold) {
  if (predictions.size() != gold.size()) throw Error("InvalidArgument", "prediction and gold counts differ");
  if (gold.empty()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += metrics::normalize_value(predictions[i]) == metrics::normalize_value(gold[i]);
  return 100.0 * hits / gold.size();
}

struct Candidate {
  std::size_t batch = 0;
  std::string instruction;
  double score = 0;
  bool accepted = false;
};

struct OptRun {
  std::string slot;
  std::uint64_t seed = 0;
  std::size_t batch_size = 5;
  std::vector<std::size_t> train;       // indices into the dataset
  std::vector<std::size_t> validation;
  std::string initial_instruction;
  double initial_score = 0;
  std::vector<Candidate> history;
  std::string best_instruction;
  double best_score = 0;
  std::optional<std::string> aborted;  // backend failure that ended the run early
};

inline json to_json(const OptRun& r) {
  json hist = json::array();
  for (const auto& c : r.history)
    hist.push_back({{"batch", c.batch}, {"instruction", c.instruction}, {"score", c.score}, {"accepted", c.accepted}});
  return {{"slot", r.slot},
          {"seed", r.seed},
          {"batch_size", r.batch_size},
          {"train", r.train},
          {"validation", r.validation},
          {"initial_instruction", r.initial_instruction},
          {"initial_score", r.initial_score},
          {"history", hist},
          {"best_instruction", r.best_instruction},
          {"best_score", r.best_score},
          {"aborted", r.aborted ? json(*r.aborted) : json(nullptr)}};
}

struct OptOptions {
  std::size_t train_size = 20;
  std::size_t validation_size = 50;
  std::size_t batch_size = 5;
  std::uint64_t seed = 0;
  std::string context_preamble;
};

// Fisher-Yates with raw engine output, so the permutation is the same on
// every standard library.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

namespace detail {

// DST through the runtime's own prompt so optimized text is scored exactly
// as it will be used.
inline json predict(const ir::DstEntry& entry, const std::string& instruction, const LabeledTurn& turn,
                    backend::Backend& agent_backend, const std::string& preamble) {
  static const ir::GuardrailProgram empty;
  static const runtime::FunctionRegistry no_functions;
  runtime::Agent agent(empty, agent_backend, no_functions);
  runtime::ConversationState s;
  s.history = turn.history;
  s.context_preamble = preamble;
  auto e = entry;
  e.instruction = instruction;
  e.invalidates.clear();
  return agent.dst_update(s, e).first;
}

inline std::string history_text(const std::vector<runtime::Message>& h) {
  std::string out;
  for (const auto& m : h) out += (m.speaker == "user" ? "User: " : "Assistant: ") + m.text + "\n";
  return out;
}

inline std::string rewrite_prompt(const ir::DstEntry& entry, const std::string& instruction,
                                  const std::vector<const LabeledTurn*>& batch, const std::vector<json>& predictions) {
  std::string user = "Slot: " + entry.slot + "\nCurrent instruction:\n" + instruction + "\n\nExamples:\n";
  for (std::size_t i = 0; i < batch.size(); ++i)
    user += "--- example " + std::to_string(i + 1) + "\n" + history_text(batch[i]->history) +
            "Predicted: " + predictions[i].dump() + "\nExpected: " + batch[i]->gold.dump() + "\n";
  user += "\nRewrite the instruction so the predictions match the expected values. Reply with the new instruction only.";
  return user;
}

}  // namespace detail

inline double score_instruction(const ir::DstEntry& entry, const std::string& instruction, const std::vector<LabeledTurn>& data,
                                const std::vector<std::size_t>& which, backend::Backend& agent_backend,
                                const std::string& preamble = {}) {
  std::vector<json> pred, gold;
  for (auto i : which) {
    pred.push_back(detail::predict(entry, instruction, data[i], agent_backend, preamble));
    gold.push_back(data[i].gold);
  }
  return compute_score(pred, gold);
}

inline OptRun optimize_dst(const ir::DstEntry& entry, const std::vector<LabeledTurn>& dataset, backend::Backend& agent_backend,
                           backend::Backend& optimizer_backend, const OptOptions& opt = {}) {
  std::size_t need = opt.train_size + opt.validation_size;
  if (dataset.size() < need) throw InsufficientData(entry.slot, dataset.size(), need);
  if (opt.batch_size == 0) throw Error("InvalidArgument", "batch size must be positive");

  OptRun run;
  run.slot = entry.slot;
  run.seed = opt.seed;
  run.batch_size = opt.batch_size;
  auto perm = seeded_permutation(dataset.size(), opt.seed);
  run.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(opt.train_size));
  run.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(opt.train_size),
                        perm.begin() + static_cast<std::ptrdiff_t>(need));
  run.initial_instruction = run.best_instruction = entry.instruction;

  try {
    run.initial_score = run.best_score =
        score_instruction(entry, entry.instruction, dataset, run.validation, agent_backend, opt.context_preamble);
    for (std::size_t start = 0, b = 1; start < run.train.size(); start += opt.batch_size, ++b) {
      std::vector<const LabeledTurn*> batch;
      std::vector<json> predictions;
      for (std::size_t k = start; k < std::min(run.train.size(), start + opt.batch_size); ++k) {
        batch.push_back(&dataset[run.train[k]]);
        predictions.push_back(detail::predict(entry, run.best_instruction, *batch.back(), agent_backend, opt.context_preamble));
      }
      auto reply = optimizer_backend.complete(backend::make_request(
          backend::Purpose::prompt_rewrite, "You improve instructions that extract one slot value from a conversation.",
          detail::rewrite_prompt(entry, run.best_instruction, batch, predictions), entry.slot));
      Candidate c{b, std::string(util::trim(reply)), 0, false};
      c.score = score_instruction(entry, c.instruction, dataset, run.validation, agent_backend, opt.context_preamble);
      if (c.score > run.best_score) {
        c.accepted = true;
        run.best_score = c.score;
        run.best_instruction = c.instruction;
      }
      run.history.push_back(std::move(c));
    }
  } catch (const backend::BackendError& e) {
    run.aborted = e.what();
  }
  return run;
}

// Replaces one slot's instruction in a compiled program.
inline void set_instruction(ir::GuardrailProgram& program, const std::string& slot, const std::string& instruction) {
  for (auto& e : program.dst_table)
    if (e.slot == slot) {
      e.instruction = instruction;
      return;
    }
  throw Error("UnknownSlot", "no DST entry for slot " + slot);
}

}  // namespace codial::promptopt
