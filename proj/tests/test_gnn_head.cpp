#include "support/gradcheck.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/gnn_head.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace tabgsl {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix random_graph(Eigen::Index n, double density, Rng& rng) {
  Matrix w = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (rng.bernoulli(density)) w(i, j) = w(j, i) = rng.uniform();
    }
  }
  return w;
}

// Strictly positive entries so finite-difference steps stay nonnegative.
Matrix positive_weights(Eigen::Index n, Rng& rng) {
  Matrix w(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) w(i, j) = w(j, i) = 0.1 + 0.9 * rng.uniform();
  }
  return w;
}

TEST(GcnNormalize, EmptyGraphIsIdentity) {
  for (int n : {1, 4, 9}) {
    const auto out = gcn_normalize(WeightedAdjacency::fixed(Matrix::Zero(n, n), AdjacencyTag::kKnn));
    EXPECT_EQ(out.tag, AdjacencyTag::kNormalized);
    EXPECT_EQ(out.weights(), Matrix::Identity(n, n));
  }
}

TEST(GcnNormalize, TwoNodeUnitEdge) {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  const Matrix out = gcn_normalize(WeightedAdjacency::fixed(w, AdjacencyTag::kKnn)).weights();
  EXPECT_LT((out.array() - 0.5).abs().maxCoeff(), 1e-12);
}

TEST(GcnNormalize, RegularGraphRowsSumToOne) {
  Matrix cycle = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) cycle(i, (i + 1) % 4) = cycle((i + 1) % 4, i) = 1.0;
  const Matrix out = gcn_normalize(WeightedAdjacency::fixed(cycle, AdjacencyTag::kKnn)).weights();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.row(i).sum(), 1.0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(GcnNormalize, NegativeWeightIsRejected) {
  Matrix w = Matrix::Zero(2, 2);
  w(0, 1) = w(1, 0) = -0.1;
  EXPECT_THROW(gcn_normalize(WeightedAdjacency::fixed(w, AdjacencyTag::kKnn)),
               std::invalid_argument);
}

TEST(GcnNormalize, SpectralRadiusAtMostOne) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(49));
    const Matrix out =
        gcn_normalize(WeightedAdjacency::fixed(random_graph(n, rng.uniform(), rng),
                                               AdjacencyTag::kKnn))
            .weights();
    // Power iteration on a symmetric matrix converges to the largest |eigenvalue|.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) + 0.01 * random_matrix(n, 1, rng);
    double radius = 0.0;
    for (int it = 0; it < 2000; ++it) {
      Eigen::VectorXd next = out * v;
      radius = next.norm() / v.norm();
      v = next / next.norm();
    }
    EXPECT_LE(radius, 1.0 + 1e-6) << "n " << n;
  }
}

TEST(Predict, RowsAreStochastic) {
  Rng rng(2);
  GcnClassifier head(6, 3, {.width = 8, .layers = 2}, 3);
  testing::jitter(head.params(), rng, 0.5);
  const Matrix p = head.predict(ag::constant(random_matrix(10, 6, rng)),
                                WeightedAdjacency::fixed(random_graph(10, 0.5, rng),
                                                         AdjacencyTag::kKnn))
                       .value();
  EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LE(p.maxCoeff(), 1.0);
}

TEST(Predict, EmptyGraphKeepsRowsIndependent) {
  Rng rng(3);
  GcnClassifier head(5, 2, {.width = 8, .layers = 3}, 4);
  Matrix h = random_matrix(6, 5, rng);
  const auto empty = WeightedAdjacency::fixed(Matrix::Zero(6, 6), AdjacencyTag::kKnn);
  const Matrix before = head.predict(ag::constant(h), empty).value();
  h.row(4) *= -3.0;
  const Matrix after = head.predict(ag::constant(h), empty).value();
  for (int i = 0; i < 6; ++i) {
    if (i != 4) EXPECT_EQ(Matrix(before.row(i)), Matrix(after.row(i)));
  }
  EXPECT_NE(Matrix(before.row(4)), Matrix(after.row(4)));
}

TEST(Predict, EquivariantUnderJointPermutation) {
  Rng rng(4);
  GcnClassifier head(4, 3, {.width = 8, .layers = 2}, 5);
  const Matrix h = random_matrix(7, 4, rng);
  const Matrix w = random_graph(7, 0.5, rng);
  const Matrix p = head.predict(ag::constant(h), WeightedAdjacency::fixed(w, AdjacencyTag::kKnn))
                       .value();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.indices() << 3, 6, 0, 5, 1, 4, 2;
  const Matrix hp = perm * h;
  const Matrix wp = perm * w * perm.transpose();
  const Matrix pp = head.predict(ag::constant(hp), WeightedAdjacency::fixed(wp, AdjacencyTag::kKnn))
                        .value();
  EXPECT_LT((pp - perm * p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, WidthMismatchIsConfigError) {
  GcnClassifier head(4, 2, {}, 1);
  const auto a = WeightedAdjacency::fixed(Matrix::Zero(3, 3), AdjacencyTag::kKnn);
  EXPECT_THROW(head.predict(ag::constant(Matrix::Ones(3, 5)), a), ConfigError);
  EXPECT_THROW(head.predict(ag::constant(Matrix::Ones(4, 4)), a), ConfigError);
}

TEST(Predict, LossGradientCoversParametersAndAdjacency) {
  Rng rng(5);
  GcnClassifier head(8, 3, {.width = 6, .layers = 2}, 6);
  testing::jitter(head.params(), rng, 0.1);
  Var h = ag::parameter(random_matrix(12, 8, rng));
  Var w = ag::parameter(positive_weights(12, rng));
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  const std::vector<Eigen::Index> mask{0, 1, 2, 3, 5, 8, 10};
  auto ps = head.params().items();
  ps.push_back({"h", h});
  ps.push_back({"adjacency", w});
  for (const auto& c : testing::check_gradients(ps, [&] {
         return nll_loss(head.log_probabilities(h, {w, AdjacencyTag::kKnn}), y, mask);
       })) {
    EXPECT_TRUE(c.ok()) << c.name << " rel " << c.rel_error << " scale " << c.scale;
  }
}

TEST(NllLoss, HandCases) {
  Matrix onehot(3, 2);
  onehot << 1, 0, 0, 1, 1, 0;
  const std::vector<int> y{0, 1, 0};
  const std::vector<Eigen::Index> all{0, 1, 2};
  EXPECT_EQ(nll_loss(onehot, y, all), 0.0);
  EXPECT_NEAR(nll_loss(Matrix::Constant(3, 2, 0.5), y, all), std::log(2.0), 1e-15);
  // Wrong one-hot predictions hit the clamp.
  EXPECT_NEAR(nll_loss(onehot, {1, 0, 1}, all), -std::log(kProbabilityFloor), 1e-9);
  EXPECT_THROW(nll_loss(onehot, y, {}), std::invalid_argument);
}

TEST(NllLoss, IgnoresUnmaskedLabels) {
  Rng rng(6);
  Matrix logits = random_matrix(5, 3, rng);
  const Matrix p = ag::softmax_rows(ag::constant(logits)).value();
  const std::vector<Eigen::Index> train{0, 2, 3};
  std::vector<int> y{0, 1, 2, 1, 0};
  const double before = nll_loss(p, y, train);
  y[4] = 2;
  EXPECT_EQ(nll_loss(p, y, train), before);
  EXPECT_GT(before, 0.0);
}

TEST(NllLoss, VarMatchesMatrix) {
  Rng rng(7);
  const Var logits = ag::constant(random_matrix(6, 4, rng));
  const std::vector<int> y{0, 1, 2, 3, 0, 1};
  const std::vector<Eigen::Index> mask{1, 2, 5};
  EXPECT_NEAR(nll_loss(ag::log_softmax_rows(logits), y, mask).scalar(),
              nll_loss(ag::softmax_rows(logits).value(), y, mask), 1e-12);
}

}  // namespace
}  // namespace tabgsl
