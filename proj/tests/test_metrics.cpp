#include "tabgsl/metrics.hpp"
#include "tabgsl/rng.hpp"

#include <gtest/gtest.h>

#include <stdexcept>

namespace tabgsl {
namespace {

// Confusion-matrix oracle with integer counts.
F1Scores oracle(const std::vector<int>& y, const std::vector<int>& p, int classes) {
  std::vector<std::vector<long>> cm(static_cast<std::size_t>(classes),
                                    std::vector<long>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++cm[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(p[i])];
  }
  F1Scores s;
  long smallest = -1;
  for (int c = 0; c < classes; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    long tp = cm[cc][cc], row = 0, col = 0;
    for (int o = 0; o < classes; ++o) {
      row += cm[cc][static_cast<std::size_t>(o)];
      col += cm[static_cast<std::size_t>(o)][cc];
    }
    // 2PR/(P+R) simplifies to 2tp/(row+col); 0/0 reads as 0.
    s.per_class.push_back(row + col == 0 ? 0.0
                                         : 2.0 * static_cast<double>(tp) /
                                               static_cast<double>(row + col));
    if (row > 0 && (smallest < 0 || row < smallest)) {
      smallest = row;
      s.minority_class = c;
    }
  }
  double sum = 0.0;
  for (double f : s.per_class) sum += f;
  s.macro = sum / classes;
  s.minority = s.per_class[static_cast<std::size_t>(s.minority_class)];
  return s;
}

TEST(F1, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0, 0};
  const auto s = f1_scores(y, y, 3);
  EXPECT_EQ(s.minority, 1.0);
  EXPECT_EQ(s.macro, 1.0);
}

TEST(F1, AllMajorityPredictionsGiveZeroMinority) {
  std::vector<int> y(100, 0);
  for (int i = 0; i < 30; ++i) y[static_cast<std::size_t>(i)] = 1;
  const auto s = f1_scores(y, std::vector<int>(100, 0), 2);
  EXPECT_EQ(s.minority_class, 1);
  EXPECT_EQ(s.minority, 0.0);
}

TEST(F1, HandCase) {
  const auto s = f1_scores({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  EXPECT_NEAR(s.per_class[1], 0.8, 1e-15);
  EXPECT_NEAR(s.per_class[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.macro, 0.7333, 1e-4);
  EXPECT_EQ(s.minority_class, 0);
  EXPECT_NEAR(s.minority, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(headline_metric(s, 2), s.minority);
  EXPECT_EQ(headline_metric(s, 3), s.macro);
}

TEST(F1, MinorityIgnoresAbsentClasses) {
  // Class 1 never occurs in the ground truth, so class 2 is the minority.
  const auto s = f1_scores({0, 0, 0, 2, 2}, {0, 0, 1, 2, 0}, 3);
  EXPECT_EQ(s.minority_class, 2);
  EXPECT_EQ(s.per_class[1], 0.0);
}

TEST(F1, MatchesConfusionMatrixOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(7));
    const int n = 1 + static_cast<int>(rng.below(200));
    std::vector<int> y, p;
    for (int i = 0; i < n; ++i) {
      y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
      p.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    }
    const auto got = f1_scores(y, p, classes);
    const auto want = oracle(y, p, classes);
    ASSERT_EQ(got.per_class.size(), want.per_class.size());
    for (std::size_t c = 0; c < want.per_class.size(); ++c) {
      EXPECT_EQ(got.per_class[c], want.per_class[c]) << trial;
    }
    EXPECT_EQ(got.macro, want.macro) << trial;
    EXPECT_EQ(got.minority_class, want.minority_class) << trial;
    EXPECT_EQ(got.minority, want.minority) << trial;
  }
}

TEST(F1, RejectsBadInput) {
  EXPECT_THROW(f1_scores({}, {}, 2), std::invalid_argument);
  EXPECT_THROW(f1_scores({0, 1}, {0}, 2), std::invalid_argument);
  EXPECT_THROW(f1_scores({0, 2}, {0, 1}, 2), std::invalid_argument);
}

}  // namespace
}  // namespace tabgsl
