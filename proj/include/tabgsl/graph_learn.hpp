// Learner-view adjacency (MLP + cosine), kNN sparsification, and the anchor
// view built from a frozen classifier's class probabilities.
#pragma once

#include "tabgsl/nn.hpp"
#include "tabgsl/tabdata.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace tabgsl {

enum class AdjacencyTag { kRaw, kKnn, kAnchor, kNormalized };

std::string to_string(AdjacencyTag tag);

/// Dense n x n edge weights. The weights may be an interior autodiff node so
/// gradients flow back into whatever produced them.
struct WeightedAdjacency {
  Var w;
  AdjacencyTag tag = AdjacencyTag::kRaw;

  Eigen::Index n() const { return w.rows(); }
  const Matrix& weights() const { return w.value(); }

  static WeightedAdjacency fixed(Matrix w, AdjacencyTag tag) {
    return {ag::constant(std::move(w)), tag};
  }
};

/// Describes the first violated invariant (symmetry within `tol`, range
/// [0, 1], zero diagonal for non-normalized tags), or nullopt if all hold.
/// With `knn_k` set it also requires every edge to be among the top k of at
/// least one endpoint, which caps the total at 2nk nonzeros.
std::optional<std::string> check_adjacency(const WeightedAdjacency& a,
                                           std::optional<int> knn_k = std::nullopt,
                                           double tol = 1e-9);

/// Cosine similarity between rows, negatives clamped to 0, diagonal zeroed.
/// Rows with zero norm have similarity 0 to everything.
Matrix pairwise_cosine(const Matrix& v);
Var pairwise_cosine(const Var& v);

/// Top-k selection mask per row over off-diagonal entries; ties go to the
/// lower column index.
Matrix knn_mask(const Matrix& w, int k);

/// Keeps each row's k largest off-diagonal weights, then symmetrizes with
/// the elementwise max. Differentiable with respect to the kept weights.
WeightedAdjacency knn_sparsify(const WeightedAdjacency& a, int k);

struct GraphLearnerConfig {
  int width = 64;    // d_gl
  int layers = 2;    // L_gl
  double dropout = 0.0;
};

/// MLP over instance embeddings followed by pairwise cosine.
///
/// Weights start as (zero-padded) identities with zero bias, and the hidden
/// activation is a PReLU whose negative slope starts at 1, so the initial
/// output is exactly pairwise_cosine(H). The slopes are trained with the
/// rest of the parameters, which is where the nonlinearity comes from.
class GraphLearner {
 public:
  GraphLearner(Eigen::Index input_width, GraphLearnerConfig cfg);

  Var embed(const Var& h, Rng* dropout_rng = nullptr) const;
  WeightedAdjacency operator()(const Var& h, Rng* dropout_rng = nullptr) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const GraphLearnerConfig& config() const { return cfg_; }

 private:
  GraphLearnerConfig cfg_;
  Eigen::Index input_width_;
  ParameterSet params_;
  std::vector<Var> weights_, biases_, slopes_;
};

struct AnchorTrainConfig {
  int hidden = 64;
  double lr = 1e-2;
  double weight_decay = 0.0;
  int max_epochs = 200;
  int patience = 30;
};

/// Two-hidden-layer MLP over dense raw features (numeric block followed by
/// one-hot categoricals), trained once and frozen.
class AnchorClassifier {
 public:
  AnchorClassifier(Eigen::Index input_width, int class_count, int hidden,
                   std::uint64_t seed);

  Var logits(const Matrix& features) const;
  Matrix predict_proba(const TabularDataset& ds) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  int best_epoch() const { return best_epoch_; }
  double best_valid_metric() const { return best_valid_; }

 private:
  friend AnchorClassifier train_anchor_classifier(const TabularDataset&,
                                                  const SplitIndices&,
                                                  const AnchorTrainConfig&,
                                                  std::uint64_t);
  ParameterSet params_;
  Linear l1_, l2_, l3_;
  int best_epoch_ = -1;
  double best_valid_ = 0.0;
};

/// Full-batch Adam on train-split cross-entropy, early-stopped on validation
/// macro F1 with best-epoch weights restored.
AnchorClassifier train_anchor_classifier(const TabularDataset& ds,
                                         const SplitIndices& split,
                                         const AnchorTrainConfig& cfg,
                                         std::uint64_t seed);

WeightedAdjacency build_anchor_adjacency(const Matrix& probabilities);
WeightedAdjacency build_anchor_adjacency(const AnchorClassifier& cls,
                                         const TabularDataset& ds);

}  // namespace tabgsl
