#include "tabgsl/contrast.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/rng.hpp"

#include <stdexcept>

namespace tabgsl {

Matrix feature_mask(Eigen::Index d, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("mask rate must lie in [0, 1]");
  Rng rng(seed);
  Matrix m(1, d);
  for (Eigen::Index j = 0; j < d; ++j) m(0, j) = rng.bernoulli(rho) ? 0.0 : 1.0;
  return m;
}

Matrix mask_features(const Matrix& x, double rho, std::uint64_t seed) {
  return mask_features(ag::constant(x), rho, seed).value();
}

Var mask_features(const Var& x, double rho, std::uint64_t seed) {
  const Matrix m = feature_mask(x.cols(), rho, seed);
  return ag::mul_const(x, m.replicate(x.rows(), 1));
}

Matrix edge_keep_mask(Eigen::Index n, double rho_edge, std::uint64_t seed) {
  if (!(rho_edge >= 0.0 && rho_edge <= 1.0)) {
    throw ConfigError("edge drop rate must lie in [0, 1]");
  }
  Rng rng(seed);
  Matrix keep = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = rng.bernoulli(rho_edge) ? 0.0 : 1.0;
      keep(i, j) = k;
      keep(j, i) = k;
    }
  }
  return keep;
}

WeightedAdjacency drop_edges(const WeightedAdjacency& a, double rho_edge,
                             std::uint64_t seed) {
  if (rho_edge == 0.0) return a;
  return {ag::mul_const(a.w, edge_keep_mask(a.n(), rho_edge, seed)), a.tag};
}

AugmentSeeds AugmentSeeds::for_epoch(std::uint64_t run_seed, long epoch) {
  const std::uint64_t base =
      derive_seed(derive_seed(run_seed, SeedStream::kAugment),
                  static_cast<std::uint64_t>(epoch));
  return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2),
          derive_seed(base, 3)};
}

GraphViewPair make_views(const WeightedAdjacency& anchor,
                         const WeightedAdjacency& learner, const Var& features,
                         const AugmentRates& rates, const AugmentSeeds& seeds) {
  if (anchor.n() != learner.n() || anchor.n() != features.rows()) {
    throw std::invalid_argument("make_views: node counts differ");
  }
  return {drop_edges(anchor, rates.rho_edge, seeds.anchor_edges),
          drop_edges(learner, rates.rho_edge, seeds.learner_edges),
          mask_features(features, rates.rho_anchor, seeds.anchor_features),
          mask_features(features, rates.rho_learner, seeds.learner_features),
          seeds};
}

EncoderProjector::EncoderProjector(Eigen::Index input_width, ContrastiveConfig cfg,
                                   std::uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  enc1_ = GcnLayer(params_, "encoder.0", input_width, cfg_.hidden, rng);
  enc2_ = GcnLayer(params_, "encoder.1", cfg_.hidden, cfg_.hidden, rng);
  proj1_ = Linear(params_, "projector.0", cfg_.hidden, cfg_.projection, rng);
  proj2_ = Linear(params_, "projector.1", cfg_.projection, cfg_.projection, rng);
}

Var EncoderProjector::operator()(const WeightedAdjacency& a, const Var& x,
                                 Rng* dropout_rng) const {
  if (x.cols() != enc1_.linear.in_features()) {
    throw ConfigError("encoder expects width " +
                      std::to_string(enc1_.linear.in_features()) + ", got " +
                      std::to_string(x.cols()));
  }
  const Var a_norm = gcn_normalize(a).w;
  Var h = dropout(ag::relu(enc1_(a_norm, x)), cfg_.dropout, dropout_rng);
  h = enc2_(a_norm, h);
  return proj2_(ag::relu(proj1_(h)));
}

Var nt_xent(const Var& z_anchor, const Var& z_learner, double temperature) {
  if (z_anchor.rows() != z_learner.rows() || z_anchor.cols() != z_learner.cols()) {
    throw std::invalid_argument("nt_xent: view shapes differ");
  }
  if (z_anchor.rows() < 2) throw std::invalid_argument("nt_xent: need n >= 2");
  if (!(temperature > 0.0)) throw std::invalid_argument("nt_xent: t must be positive");
  const double n = static_cast<double>(z_anchor.rows());
  Var ua = ag::normalize_rows(z_anchor);
  Var ul = ag::normalize_rows(z_learner);
  // sim(i, j) = cos(learner_i, anchor_j)
  Var sim = ag::matmul(ul, ag::transpose(ua));
  Var positives = ag::scale(ag::sum(ag::diag(sim)), 2.0 / temperature);
  Var lse_learner = ag::sum(ag::offdiag_logsumexp_rows(sim, 1.0 / temperature));
  Var lse_anchor =
      ag::sum(ag::offdiag_logsumexp_rows(ag::transpose(sim), 1.0 / temperature));
  return ag::scale(positives - lse_learner - lse_anchor, 1.0 / (2.0 * n));
}

double nt_xent(const Matrix& z_anchor, const Matrix& z_learner, double temperature) {
  return nt_xent(ag::constant(z_anchor), ag::constant(z_learner), temperature).scalar();
}

WeightedAdjacency bootstrap(const WeightedAdjacency& anchor,
                            const WeightedAdjacency& learner, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("tau must lie in [0, 1], got " + std::to_string(tau));
  }
  if (anchor.n() != learner.n()) throw std::invalid_argument("bootstrap: size mismatch");
  if (tau == 1.0) return WeightedAdjacency::fixed(anchor.weights(), AdjacencyTag::kAnchor);
  // Rounding can push a convex combination of ones one ulp past 1.
  Matrix mixed =
      (tau * anchor.weights() + (1.0 - tau) * learner.weights()).cwiseMin(1.0);
  return WeightedAdjacency::fixed(std::move(mixed), AdjacencyTag::kAnchor);
}

}  // namespace tabgsl
