#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace testing_support;
using metrics::LabelPair;
using metrics::SlotState;

TEST(Bleu, Tokenization) {
  EXPECT_EQ(metrics::bleu_tokens("Hello, World!"), (std::vector<std::string>{"hello", ",", "world", "!"}));
  EXPECT_EQ(metrics::bleu_tokens("REF-12ab"), (std::vector<std::string>{"ref", "-", "12ab"}));
}

TEST(Bleu, IdenticalCorpusIs100) {
  std::vector<std::string> c{"the cat sat on the mat", "your taxi is booked ."};
  EXPECT_DOUBLE_EQ(metrics::bleu4(c, c), 100.0);
}

TEST(Bleu, NoFourGramOverlapIsZeroWithoutSmoothing) {
  std::vector<std::string> h{"the cat sat on a mat"}, r{"the cat ran on the mat"};
  EXPECT_EQ(metrics::bleu4(h, r), 0.0);
  EXPECT_GT(metrics::bleu4(h, r, metrics::Smoothing::exp), 0.0);
}

TEST(Bleu, SingleSubstitutionMatchesHandCount) {
  // Precisions counted by hand: 11/12, 8/10, 5/8, 3/6.
  std::vector<std::string> h{"the cat sat on the mat", "the cat sat on the mat"};
  std::vector<std::string> r{"the cat sat on the mat", "the cat ran on the mat"};
  double expected = 100 * std::exp((std::log(11.0 / 12) + std::log(8.0 / 10) + std::log(5.0 / 8) + std::log(3.0 / 6)) / 4);
  EXPECT_NEAR(metrics::bleu4(h, r), expected, 1e-9);
}

TEST(Bleu, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int corpus = 0; corpus < 20; ++corpus) {
    std::vector<std::string> h, r;
    for (int i = 0; i < 6; ++i) {
      auto ref = random_sentence(rng);
      h.push_back(i % 2 ? ref + "the cat" : random_sentence(rng));
      r.push_back(ref);
    }
    EXPECT_NEAR(metrics::bleu4(h, r), oracle_bleu(h, r), 1e-9) << corpus;
  }
}

TEST(Bleu, PermutationInvariantAndDuplicateSafe) {
  std::vector<std::string> h{"the cat sat on the mat", "a dog ran on the mat ."}, r{"the cat sat on a mat", "a dog ran on the mat !"};
  double base = metrics::bleu4(h, r);
  EXPECT_NEAR(metrics::bleu4({h[1], h[0]}, {r[1], r[0]}), base, 1e-12);
  EXPECT_GE(metrics::bleu4({h[0], h[1], "taxi is booked ."}, {r[0], r[1], "taxi is booked ."}), base);
}

TEST(Bleu, BrevityPenalty) {
  std::vector<std::string> h{"the cat sat on"}, r{"the cat sat on the mat"};
  EXPECT_NEAR(metrics::bleu4(h, r), 100 * std::exp(1 - 6.0 / 4), 1e-9);
}

TEST(Actions, AllCorrectIs100) {
  auto s = metrics::action_scores({{"n1", "n1"}, {"n2", "n2"}, {"hello", "hello"}});
  EXPECT_DOUBLE_EQ(s.micro_f1, 100);
  EXPECT_DOUBLE_EQ(s.accuracy, 100);
  EXPECT_DOUBLE_EQ(s.macro_f1, 100);
}

TEST(Actions, OneWrongOfFour) {
  auto s = metrics::action_scores({{"n1", "n1"}, {"n2", "n2"}, {"n3", "n3"}, {"n1", "n2"}});
  EXPECT_DOUBLE_EQ(s.accuracy, 75);
  EXPECT_DOUBLE_EQ(s.micro_f1, 75);
}

TEST(Actions, FailedTurnsLowerRecallOnly) {
  auto s = metrics::action_scores({{"n1", "n1"}, {"", "n2"}});
  EXPECT_DOUBLE_EQ(s.accuracy, 50);
  EXPECT_NEAR(s.micro_f1, 100 * 2 * 1.0 * 0.5 / 1.5, 1e-12);
}

TEST(Actions, MatchConfusionMatrixOracle) {
  std::mt19937_64 rng(5);
  std::vector<std::string> labels{"n1", "n2", "n3", "hello", "goodbye", ""};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LabelPair> pairs;
    std::uniform_int_distribution<int> pick(0, 5), gold_pick(0, 4);
    for (int i = 0; i < 25; ++i) pairs.push_back({labels[pick(rng)], labels[gold_pick(rng)]});
    auto s = metrics::action_scores(pairs);
    auto m = confusion_of(pairs);
    EXPECT_EQ(s.accuracy, oracle_accuracy(m, pairs.size()));
    EXPECT_NEAR(s.micro_f1, oracle_micro_f1(m), 1e-12);
  }
}

TEST(Jga, HandCounts) {
  SlotState a{{"departure", "Cambridge "}, {"time", nullptr}};
  SlotState b{{"departure", "cambridge"}};
  EXPECT_DOUBLE_EQ(metrics::jga({a}, {b}), 100);
  SlotState c{{"departure", "Oxford"}};
  EXPECT_DOUBLE_EQ(metrics::jga({a, c}, {b, b}), 50);
  EXPECT_DOUBLE_EQ(metrics::jga({{{"people", 2}}}, {{{"people", "2"}}}), 100);
}
