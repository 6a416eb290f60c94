#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace testing_support;
using backend::MockBackend;
using backend::MockEntry;
using backend::Purpose;
using promptopt::LabeledTurn;

namespace {

class FnBackend : public backend::Backend {
 public:
  explicit FnBackend(std::function<std::string(const backend::BackendRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const backend::BackendRequest& r) override { return fn_(r); }

 private:
  std::function<std::string(const backend::BackendRequest&)> fn_;
};

std::vector<LabeledTurn> dataset(std::size_t n) {
  std::vector<LabeledTurn> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({{{"user", "turn-" + std::to_string(i) + " please"}}, "v" + std::to_string(i)});
  return out;
}

ir::DstEntry entry(const std::string& instruction) {
  ir::DstEntry e;
  e.slot = "departure";
  e.instruction = instruction;
  return e;
}

// Agent model whose validation accuracy is exactly the number in the
// instruction ("acc60" -> 60): it answers correctly on the first k
// validation turns and on every training turn.
struct ScoredAgent {
  explicit ScoredAgent(std::uint64_t seed, std::size_t n = 70) {
    auto perm = promptopt::seeded_permutation(n, seed);
    for (std::size_t k = 20; k < 70; ++k) val_pos[perm[k]] = k - 20;
  }
  std::string operator()(const backend::BackendRequest& r) const {
    auto at = r.user.find("turn-");
    auto id = std::stoul(r.user.substr(at + 5));
    auto ins = r.user.substr(r.user.rfind("Instruction: ") + 13);
    auto acc = std::stoul(ins.substr(3));
    auto it = val_pos.find(id);
    bool right = it == val_pos.end() || it->second < acc / 2;
    return right ? "v" + std::to_string(id) : "None";
  }
  std::map<std::size_t, std::size_t> val_pos;
};

std::vector<MockEntry> rewrites(const std::vector<std::string>& replies) {
  std::vector<MockEntry> m;
  for (const auto& r : replies) m.push_back(MockEntry::reply_to(Purpose::prompt_rewrite, "departure", r));
  return m;
}

std::vector<bool> accepted(const promptopt::OptRun& r) {
  std::vector<bool> out;
  for (const auto& c : r.history) out.push_back(c.accepted);
  return out;
}

}  // namespace

TEST(Score, HandCounts) {
  EXPECT_DOUBLE_EQ(promptopt::compute_score({"a", "B "}, {"a", "b"}), 100);
  EXPECT_DOUBLE_EQ(promptopt::compute_score({"a", "x"}, {"a", "b"}), 50);
  EXPECT_DOUBLE_EQ(promptopt::compute_score({nullptr, ""}, {"", nullptr}), 100);
}

TEST(Score, AgreesWithSingleSlotJga) {
  std::mt19937_64 rng(3);
  std::vector<std::string> vals{"a", "b", "A ", ""};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<json> pred, gold;
    std::vector<metrics::SlotState> ps, gs;
    for (int i = 0; i < 10; ++i) {
      pred.push_back(vals[rng() % 4]);
      gold.push_back(vals[rng() % 4]);
      ps.push_back({{"s", pred.back()}});
      gs.push_back({{"s", gold.back()}});
    }
    EXPECT_DOUBLE_EQ(promptopt::compute_score(pred, gold), metrics::jga(ps, gs));
  }
}

TEST(Split, DisjointAndSeeded) {
  ScoredAgent agent(11);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc60", "acc60", "acc60", "acc60"}));
  promptopt::OptOptions o;
  o.seed = 11;
  auto run = promptopt::optimize_dst(entry("acc60"), dataset(90), a, opt, o);
  EXPECT_EQ(run.train.size(), 20u);
  EXPECT_EQ(run.validation.size(), 50u);
  std::set<std::size_t> t(run.train.begin(), run.train.end());
  for (auto v : run.validation) EXPECT_EQ(t.count(v), 0u);
  EXPECT_NE(promptopt::seeded_permutation(70, 1), promptopt::seeded_permutation(70, 2));
  EXPECT_EQ(promptopt::seeded_permutation(70, 1), promptopt::seeded_permutation(70, 1));
}

TEST(Optimize, FixpointAcceptsNothing) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc60", "acc60", "acc60", "acc60"}));
  auto run = promptopt::optimize_dst(entry("acc60"), dataset(70), a, opt);
  EXPECT_DOUBLE_EQ(run.initial_score, 60);
  EXPECT_DOUBLE_EQ(run.best_score, 60);
  EXPECT_EQ(accepted(run), (std::vector<bool>{false, false, false, false}));
  EXPECT_EQ(run.best_instruction, "acc60");
}

TEST(Optimize, ImprovementOnSecondBatchIsTheOnlyAcceptance) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc60", "acc80", "acc70", "acc80"}));
  auto run = promptopt::optimize_dst(entry("acc60"), dataset(70), a, opt);
  EXPECT_EQ(accepted(run), (std::vector<bool>{false, true, false, false}));
  EXPECT_DOUBLE_EQ(run.history[1].score, 80);
  EXPECT_DOUBLE_EQ(run.best_score, 80);
  EXPECT_EQ(run.best_instruction, "acc80");
  // Later rewrites start from the accepted instruction.
  EXPECT_TRUE(util::contains(opt.call_log()[2].user, "Current instruction:\nacc80"));
}

TEST(Optimize, RegressionIsRejected) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc70", "acc70", "acc70", "acc70"}));
  auto run = promptopt::optimize_dst(entry("acc80"), dataset(70), a, opt);
  EXPECT_DOUBLE_EQ(run.history[0].score, 70);
  EXPECT_EQ(accepted(run), (std::vector<bool>{false, false, false, false}));
  EXPECT_DOUBLE_EQ(run.best_score, 80);
}

TEST(Optimize, BestScoreIsMonotone) {
  ScoredAgent agent(4);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc40", "acc90", "acc20", "acc100"}));
  promptopt::OptOptions o;
  o.seed = 4;
  auto run = promptopt::optimize_dst(entry("acc50"), dataset(70), a, opt, o);
  double best = run.initial_score;
  for (const auto& c : run.history) {
    EXPECT_EQ(c.accepted, c.score > best);
    best = std::max(best, c.score);
  }
  EXPECT_DOUBLE_EQ(run.best_score, 100);
  EXPECT_EQ(accepted(run), (std::vector<bool>{false, true, false, true}));
}

TEST(Optimize, RewritePromptCarriesPredictionsAndGold) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc60", "acc60", "acc60", "acc60"}));
  promptopt::optimize_dst(entry("acc60"), dataset(70), a, opt);
  const auto& u = opt.call_log()[0].user;
  EXPECT_TRUE(util::contains(u, "Predicted: "));
  EXPECT_TRUE(util::contains(u, "Expected: \"v"));
  EXPECT_TRUE(util::contains(u, "example 5"));
  EXPECT_FALSE(util::contains(u, "example 6"));
}

TEST(Optimize, ReRunsAreByteIdentical) {
  auto once = [](std::uint64_t seed) {
    ScoredAgent agent(seed);
    FnBackend a(std::ref(agent));
    MockBackend opt(rewrites({"acc60", "acc80", "acc70", "acc90"}));
    promptopt::OptOptions o;
    o.seed = seed;
    return promptopt::to_json(promptopt::optimize_dst(entry("acc50"), dataset(75), a, opt, o)).dump();
  };
  EXPECT_EQ(once(9), once(9));
  EXPECT_NE(once(9), once(10));
}

TEST(Optimize, InsufficientData) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt;
  EXPECT_THROW(promptopt::optimize_dst(entry("acc60"), dataset(69), a, opt), promptopt::InsufficientData);
}

TEST(Optimize, BackendErrorKeepsBestSoFar) {
  ScoredAgent agent(0);
  FnBackend a(std::ref(agent));
  MockBackend opt(rewrites({"acc60", "acc80"}));
  MockEntry fail = MockEntry::reply_to(Purpose::prompt_rewrite, "departure", "");
  fail.error = "ServerError";
  opt.add(fail);
  auto run = promptopt::optimize_dst(entry("acc60"), dataset(70), a, opt);
  ASSERT_TRUE(run.aborted.has_value());
  EXPECT_EQ(run.history.size(), 2u);
  EXPECT_EQ(run.best_instruction, "acc80");
  EXPECT_DOUBLE_EQ(run.best_score, 80);
}

TEST(Dataset, LabeledTurnsFromDialogues) {
  auto ds = eval::load_dialogues(fixture_path("taxi_dialogues.jsonl"));
  auto turns = promptopt::labeled_turns(ds, "departure");
  ASSERT_EQ(turns.size(), 16u);
  EXPECT_EQ(turns[0].gold, json(nullptr));
  EXPECT_EQ(turns[1].gold, json("Downtown"));
  EXPECT_EQ(turns[1].history.size(), 3u);
  EXPECT_EQ(turns[1].history.back().text, "I need a taxi from Downtown");
}

TEST(Program, SetInstruction) {
  auto p = compiler::compile(load_graph("taxi.json"));
  promptopt::set_instruction(p, "time", "When is the pickup?");
  EXPECT_EQ(p.dst_entry("time")->instruction, "When is the pickup?");
  EXPECT_THROW(promptopt::set_instruction(p, "colour", "x"), Error);
}
