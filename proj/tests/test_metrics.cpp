#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pebg/metrics.hpp"

namespace pebg {
namespace {

double brute_force_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1.0;
        hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return hits / pairs;
}

std::pair<std::vector<double>, std::vector<bool>> random_set(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> level(0, levels);
  std::bernoulli_distribution coin(0.4);
  std::vector<double> s;
  std::vector<bool> y;
  while (true) {
    s.clear();
    y.clear();
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(level(rng)) / levels);
      y.push_back(coin(rng));
    }
    if (std::count(y.begin(), y.end(), true) % static_cast<long>(n) != 0) return {s, y};
  }
}

TEST(Auc, SmallExamples) {
  EXPECT_EQ(auc({0.9, 0.1}, {true, false}), 1.0);
  EXPECT_EQ(auc({0.5, 0.5}, {true, false}), 0.5);
  EXPECT_EQ(auc({0.1, 0.9}, {true, false}), 0.0);
  PredictionSet set{{0.9, true, 0, 0}, {0.1, false, 0, 1}};
  EXPECT_EQ(auc(set), 1.0);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc({0.2, 0.3}, {true, true}), DataError);
  EXPECT_THROW(auc({0.2}, {false}), DataError);
  EXPECT_THROW(auc({}, {}), DataError);
  EXPECT_THROW(auc({0.2}, {true, false}), DataError);
}

TEST(Auc, MatchesBruteForceExactly) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    // coarse levels force many ties, fine levels almost none
    auto [s, y] = random_set(rng, 50, trial % 2 ? 5 : 1000000);
    ASSERT_EQ(auc(s, y), brute_force_auc(s, y)) << "trial " << trial;
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto [s, y] = random_set(rng, 40, trial % 2 ? 6 : 1000000);
    const double base = auc(s, y);
    std::vector<double> logit, cubed, shifted;
    for (double v : s) {
      logit.push_back(std::log((v + 0.01) / (1.01 - v)));
      cubed.push_back(v * v * v);
      shifted.push_back(3.0 * v - 7.0);
    }
    EXPECT_EQ(auc(logit, y), base);
    EXPECT_EQ(auc(cubed, y), base);
    EXPECT_EQ(auc(shifted, y), base);
  }
}

TEST(Auc, ComplementSumsToOneWithoutTies) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto [s, y] = random_set(rng, 30, 1000000);
    for (double& v : s) v = u(rng);
    std::vector<double> flipped;
    for (double v : s) flipped.push_back(1.0 - v);
    EXPECT_NEAR(auc(s, y) + auc(flipped, y), 1.0, 1e-15);
  }
}

}  // namespace
}  // namespace pebg
