// Dual-view graph contrastive learning: augmentations, the shared GCN
// encoder/projector, the NT-Xent objective and anchor bootstrapping.
#pragma once

#include "tabgsl/gnn_head.hpp"
#include "tabgsl/graph_learn.hpp"
#include "tabgsl/nn.hpp"

#include <cstdint>

namespace tabgsl {

/// 1 x d column mask; each entry is 0 with probability `rho`.
Matrix feature_mask(Eigen::Index d, double rho, std::uint64_t seed);

/// Zeroes the same randomly chosen columns in every row.
Matrix mask_features(const Matrix& x, double rho, std::uint64_t seed);
Var mask_features(const Var& x, double rho, std::uint64_t seed);

/// Symmetric n x n keep-mask with one Bernoulli(1 - rho_edge) draw per
/// unordered pair; the diagonal is 0.
Matrix edge_keep_mask(Eigen::Index n, double rho_edge, std::uint64_t seed);

/// Drops each undirected edge with probability `rho_edge`. Surviving weights
/// are unchanged and the tag is preserved.
WeightedAdjacency drop_edges(const WeightedAdjacency& a, double rho_edge,
                             std::uint64_t seed);

struct AugmentSeeds {
  std::uint64_t anchor_features = 0;
  std::uint64_t learner_features = 0;
  std::uint64_t anchor_edges = 0;
  std::uint64_t learner_edges = 0;

  /// Seeds for one epoch of a run.
  static AugmentSeeds for_epoch(std::uint64_t run_seed, long epoch);
};

struct AugmentRates {
  double rho_anchor = 0.0;
  double rho_learner = 0.0;
  double rho_edge = 0.0;
};

struct GraphViewPair {
  WeightedAdjacency a_anchor;
  WeightedAdjacency a_learner;
  Var x_anchor;
  Var x_learner;
  AugmentSeeds seeds;
};

/// Applies feature masking and edge dropping to both views.
GraphViewPair make_views(const WeightedAdjacency& anchor,
                         const WeightedAdjacency& learner, const Var& features,
                         const AugmentRates& rates, const AugmentSeeds& seeds);

struct ContrastiveConfig {
  int hidden = 64;
  int projection = 64;
  double dropout = 0.0;
};

/// Two-layer GCN encoder followed by a Linear-ReLU-Linear projector. One
/// instance serves both views.
class EncoderProjector {
 public:
  EncoderProjector(Eigen::Index input_width, ContrastiveConfig cfg, std::uint64_t seed);

  Var operator()(const WeightedAdjacency& a, const Var& x,
                 Rng* dropout_rng = nullptr) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  ContrastiveConfig cfg_;
  ParameterSet params_;
  GcnLayer enc1_, enc2_;
  Linear proj1_, proj2_;
};

/// Symmetric NT-Xent where each row's denominator runs over the other
/// view's j != i (the positive pair is not in the denominator):
///   l(u_i, v_i) = cos(u_i, v_i)/t - log sum_{j != i} exp(cos(u_i, v_j)/t)
///   L = (1/2n) sum_i [l(a_i, b_i) + l(b_i, a_i)]
Var nt_xent(const Var& z_anchor, const Var& z_learner, double temperature);
double nt_xent(const Matrix& z_anchor, const Matrix& z_learner, double temperature);

/// tau * anchor + (1 - tau) * learner, tagged anchor. tau = 1 returns the
/// anchor weights untouched.
WeightedAdjacency bootstrap(const WeightedAdjacency& anchor,
                            const WeightedAdjacency& learner, double tau);

}  // namespace tabgsl
