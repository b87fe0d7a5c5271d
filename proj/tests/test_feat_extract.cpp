#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/feat_extract.hpp"

#include <gtest/gtest.h>

namespace tabgsl {
namespace {

TabularDataset small_mixed() {
  TabularDataset ds;
  ds.x_num.resize(4, 2);
  ds.x_num << 0.5, -1.0, 0.0, 0.0, 2.0, 1.0, 0.5, -1.0;
  ds.x_cat.resize(4, 1);
  ds.x_cat << 1, 0, 2, 1;
  ds.cat_cardinalities = {3};
  ds.y = {0, 1, 0, 0};
  ds.class_count = 2;
  return ds;
}

TEST(Tokenize, ShapeIsInstancesByTokensByWidth) {
  const auto ds = small_mixed();
  FeatureExtractor fe(2, {3}, {.width = 16, .layers = 1}, 1);
  const auto t = fe.tokenize(ds);
  EXPECT_EQ(t.n, 4);
  EXPECT_EQ(t.token_count, 4);
  EXPECT_EQ(t.width, 16);
  EXPECT_EQ(t.tokens.rows(), 16);
  EXPECT_EQ(t.tokens.cols(), 16);
  EXPECT_TRUE(t.tokens.value().allFinite());
}

TEST(Tokenize, TokenOrderIsClsCategoricalNumeric) {
  const auto ds = small_mixed();
  FeatureExtractor fe(2, {3}, {.width = 8, .layers = 1}, 2);
  const auto& tk = fe.tokenizer();
  const auto t = fe.tokenize(ds).tokens.value();
  EXPECT_EQ(Matrix(t.row(0)), tk.cls.value());
  EXPECT_EQ(Matrix(t.row(1)), Matrix(tk.cat_tables[0].value().row(1)));
  const Matrix num0 = 0.5 * tk.num_weight.value().row(0) + tk.num_bias.value().row(0);
  EXPECT_TRUE(Matrix(t.row(2)).isApprox(num0, 1e-15));
}

TEST(Tokenize, ZeroValueWithZeroBiasIsZeroToken) {
  const auto ds = small_mixed();
  FeatureExtractor fe(2, {3}, {.width = 16, .layers = 1}, 3);
  Var bias = fe.tokenizer().num_bias;
  bias.mutable_value().setZero();
  const auto t = fe.tokenize(ds).tokens.value();
  // Instance 1 has both numeric values at 0; its numeric tokens are rows 6, 7.
  EXPECT_TRUE(t.row(1 * 4 + 2).isZero(0.0));
  EXPECT_TRUE(t.row(1 * 4 + 3).isZero(0.0));
}

TEST(Tokenize, IdenticalRowsGiveIdenticalTokenStacks) {
  const auto ds = small_mixed();  // rows 0 and 3 are identical
  FeatureExtractor fe(2, {3}, {.width = 16, .layers = 1}, 4);
  const auto t = fe.tokenize(ds).tokens.value();
  EXPECT_EQ(Matrix(t.middleRows(0, 4)), Matrix(t.middleRows(12, 4)));
}

TEST(Tokenize, OutOfRangeCategoryIsDataError) {
  auto ds = small_mixed();
  ds.x_cat(2, 0) = 3;
  FeatureExtractor fe(2, {3}, {.width = 8, .layers = 1}, 5);
  EXPECT_THROW(fe.tokenize(ds), DataError);
}

TEST(Extract, ZeroLayersIsConfigError) {
  EXPECT_THROW(FeatureExtractor(2, {3}, {.width = 16, .layers = 0}, 1), ConfigError);
}

TEST(Extract, HeadCountFollowsWidth) {
  EXPECT_EQ(attention_heads(16), 1);
  EXPECT_EQ(attention_heads(64), 1);
  EXPECT_EQ(attention_heads(128), 2);
  EXPECT_EQ(attention_heads(512), 8);
}

TEST(Extract, DuplicateInstancesGiveDuplicateEmbeddings) {
  const auto ds = small_mixed();
  FeatureExtractor fe(2, {3}, {.width = 16, .layers = 2}, 6);
  const Matrix h = fe(ds).value();
  EXPECT_EQ(h.rows(), 4);
  EXPECT_EQ(h.cols(), 16);
  EXPECT_EQ((h.row(0) - h.row(3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Extract, PermutingInstancesPermutesRows) {
  const auto ds = testing::random_mixed(10, 3, 2, 4, 2, 7);
  FeatureExtractor fe(3, ds.cat_cardinalities, {.width = 16, .layers = 2}, 8);
  const Matrix h = fe(ds).value();
  std::vector<int> perm{3, 9, 0, 1, 8, 2, 7, 4, 6, 5};
  TabularDataset shuffled = ds;
  for (int i = 0; i < 10; ++i) {
    shuffled.x_num.row(i) = ds.x_num.row(perm[static_cast<std::size_t>(i)]);
    shuffled.x_cat.row(i) = ds.x_cat.row(perm[static_cast<std::size_t>(i)]);
  }
  const Matrix hs = fe(shuffled).value();
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(Matrix(hs.row(i)), Matrix(h.row(perm[static_cast<std::size_t>(i)])));
  }
}

TEST(Extract, RowDependsOnlyOnItsInstance) {
  auto ds = testing::random_mixed(8, 3, 1, 3, 2, 9);
  FeatureExtractor fe(3, ds.cat_cardinalities, {.width = 16, .layers = 3}, 10);
  const Matrix before = fe(ds).value();
  ds.x_num.row(5) *= -4.0;
  ds.x_cat(5, 0) = (ds.x_cat(5, 0) + 1) % 3;
  const Matrix after = fe(ds).value();
  for (int i = 0; i < 8; ++i) {
    if (i == 5) {
      EXPECT_NE(Matrix(before.row(i)), Matrix(after.row(i)));
    } else {
      EXPECT_EQ(Matrix(before.row(i)), Matrix(after.row(i)));
    }
  }
}

TEST(Extract, ShapeAcrossSearchSpace) {
  const auto ds = testing::random_mixed(3, 2, 1, 2, 2, 11);
  for (int width : {16, 32, 64, 128, 256, 512}) {
    for (int layers : {1, 4}) {
      FeatureExtractor fe(2, ds.cat_cardinalities, {.width = width, .layers = layers}, 12);
      const Matrix h = fe(ds).value();
      EXPECT_EQ(h.rows(), 3);
      EXPECT_EQ(h.cols(), width);
      EXPECT_TRUE(h.allFinite());
    }
  }
}

TEST(Extract, DropoutOnlyActsWithRng) {
  const auto ds = testing::random_mixed(6, 3, 1, 3, 2, 13);
  FeatureExtractor fe(3, ds.cat_cardinalities, {.width = 16, .layers = 1, .dropout = 0.5}, 14);
  const Matrix eval1 = fe(ds).value();
  const Matrix eval2 = fe(ds).value();
  EXPECT_EQ(eval1, eval2);
  Rng rng(1);
  EXPECT_NE(fe(ds, &rng).value(), eval1);
}

TEST(Extract, GradientOfProbeMatchesFiniteDifferences) {
  const auto ds = testing::random_mixed(5, 3, 2, 3, 2, 15);
  FeatureExtractor fe(3, ds.cat_cardinalities, {.width = 8, .layers = 2}, 16);
  Rng rng(17);
  testing::jitter(fe.params(), rng);
  Matrix weights(5, 8);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.normal();
  // Plain sum first, then a weighted probe that does not cancel under the
  // final LayerNorm.
  for (bool weighted : {false, true}) {
    const auto checks = testing::check_gradients(fe.params(), [&] {
      Var h = fe(ds);
      return weighted ? ag::sum(ag::mul_const(h, weights)) : ag::sum(h);
    });
    for (const auto& c : checks) {
      EXPECT_TRUE(c.ok()) << c.name << " rel " << c.rel_error << " scale " << c.scale;
    }
  }
}

}  // namespace
}  // namespace tabgsl
