// Symmetric GCN normalization and the GCN node classifier.
#pragma once

#include "tabgsl/graph_learn.hpp"
#include "tabgsl/nn.hpp"

#include <cstdint>
#include <vector>

namespace tabgsl {

/// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I. Differentiable
/// in A. Throws std::invalid_argument on negative weights.
WeightedAdjacency gcn_normalize(const WeightedAdjacency& a);

/// One graph convolution: A_norm X W + b.
struct GcnLayer {
  Linear linear;

  GcnLayer() = default;
  GcnLayer(ParameterSet& params, const std::string& name, Eigen::Index in,
           Eigen::Index out, Rng& rng)
      : linear(params, name, in, out, rng) {}

  Var operator()(const Var& a_norm, const Var& x) const;
};

struct GcnClassifierConfig {
  int width = 32;  // d_mt
  int layers = 2;  // L_mt
  double dropout = 0.0;
};

/// L_mt graph convolutions (ReLU between, none after the last) followed by a
/// one-hidden-layer MLP readout.
class GcnClassifier {
 public:
  GcnClassifier(Eigen::Index input_width, int class_count, GcnClassifierConfig cfg,
                std::uint64_t seed);

  Var logits(const Var& h, const WeightedAdjacency& a, Rng* dropout_rng = nullptr) const;
  Var log_probabilities(const Var& h, const WeightedAdjacency& a,
                        Rng* dropout_rng = nullptr) const {
    return ag::log_softmax_rows(logits(h, a, dropout_rng));
  }
  /// Row-stochastic class probabilities (n x C).
  Var predict(const Var& h, const WeightedAdjacency& a,
              Rng* dropout_rng = nullptr) const {
    return ag::softmax_rows(logits(h, a, dropout_rng));
  }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  GcnClassifierConfig cfg_;
  ParameterSet params_;
  std::vector<GcnLayer> layers_;
  Linear readout_hidden_, readout_out_;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// -(1/|mask|) sum_{i in mask} log max(p[i, y_i], 1e-12), from probabilities.
double nll_loss(const Matrix& probabilities, const std::vector<int>& y,
                const std::vector<Eigen::Index>& mask);

/// Same loss from log-probabilities, differentiable.
Var nll_loss(const Var& log_probabilities, const std::vector<int>& y,
             const std::vector<Eigen::Index>& mask);

}  // namespace tabgsl
