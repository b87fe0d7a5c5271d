#include "tabgsl/graph_learn.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/metrics.hpp"
#include "tabgsl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tabgsl {

std::string to_string(AdjacencyTag tag) {
  switch (tag) {
    case AdjacencyTag::kRaw: return "raw";
    case AdjacencyTag::kKnn: return "knn";
    case AdjacencyTag::kAnchor: return "anchor";
    case AdjacencyTag::kNormalized: return "normalized";
  }
  return "unknown";
}

std::optional<std::string> check_adjacency(const WeightedAdjacency& a,
                                           std::optional<int> knn_k, double tol) {
  const Matrix& w = a.weights();
  const Eigen::Index n = w.rows();
  if (w.cols() != n) return "adjacency is not square";
  Eigen::Index total_nonzeros = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index nonzeros = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = w(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream ss;
        ss << "entry (" << i << "," << j << ") = " << v << " outside [0,1]";
        return ss.str();
      }
      if (std::abs(v - w(j, i)) > tol) {
        std::ostringstream ss;
        ss << "asymmetric at (" << i << "," << j << ")";
        return ss.str();
      }
      if (v != 0.0) ++nonzeros;
    }
    if (a.tag != AdjacencyTag::kNormalized && w(i, i) != 0.0) {
      return "nonzero diagonal at row " + std::to_string(i);
    }
    total_nonzeros += nonzeros;
  }
  if (knn_k && n > 1) {
    // A row can exceed 2k through incoming selections, so the bound is on
    // the support: every edge must be some endpoint's own top-k pick.
    const auto k = static_cast<Eigen::Index>(*knn_k);
    if (total_nonzeros > 2 * n * k) {
      return std::to_string(total_nonzeros) + " nonzeros, above 2nk";
    }
    const Matrix picks = knn_mask(w, static_cast<int>(std::min<Eigen::Index>(k, n - 1)));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (w(i, j) != 0.0 && picks(i, j) == 0.0 && picks(j, i) == 0.0) {
          std::ostringstream ss;
          ss << "edge (" << i << "," << j << ") is in neither endpoint's top-" << k;
          return ss.str();
        }
      }
    }
  }
  return std::nullopt;
}

Matrix pairwise_cosine(const Matrix& v) {
  return pairwise_cosine(ag::constant(v)).value();
}

Var pairwise_cosine(const Var& v) {
  Var unit = ag::normalize_rows(v);
  Var sim = ag::relu(ag::matmul(unit, ag::transpose(unit)));
  const Eigen::Index n = v.rows();
  Matrix off = Matrix::Ones(n, n);
  off.diagonal().setZero();
  return ag::mul_const(sim, off);
}

Matrix knn_mask(const Matrix& w, int k) {
  if (k < 1) throw ConfigError("k must be at least 1, got " + std::to_string(k));
  const Eigen::Index n = w.rows();
  Matrix mask = Matrix::Zero(n, n);
  const auto keep = std::min<Eigen::Index>(k, n - 1);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    cols.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) cols.push_back(j);
    }
    auto better = [&](Eigen::Index a, Eigen::Index b) {
      if (w(i, a) != w(i, b)) return w(i, a) > w(i, b);
      return a < b;
    };
    std::partial_sort(cols.begin(), cols.begin() + keep, cols.end(), better);
    for (Eigen::Index r = 0; r < keep; ++r) mask(i, cols[static_cast<std::size_t>(r)]) = 1.0;
  }
  return mask;
}

WeightedAdjacency knn_sparsify(const WeightedAdjacency& a, int k) {
  Var kept = ag::mul_const(a.w, knn_mask(a.weights(), k));
  return {ag::maximum(kept, ag::transpose(kept)), AdjacencyTag::kKnn};
}

GraphLearner::GraphLearner(Eigen::Index input_width, GraphLearnerConfig cfg)
    : cfg_(cfg), input_width_(input_width) {
  if (cfg_.layers < 1) throw ConfigError("L_gl must be at least 1");
  if (cfg_.width < 1) throw ConfigError("d_gl must be positive");
  Eigen::Index in = input_width;
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string name = "graph_learner." + std::to_string(l);
    weights_.push_back(params_.add(name + ".weight", Matrix::Identity(in, cfg_.width)));
    biases_.push_back(params_.add(name + ".bias", Matrix::Zero(1, cfg_.width)));
    if (l + 1 < cfg_.layers) {
      slopes_.push_back(params_.add(name + ".slope", Matrix::Ones(1, cfg_.width)));
    }
    in = cfg_.width;
  }
}

Var GraphLearner::embed(const Var& h, Rng* dropout_rng) const {
  if (h.cols() != input_width_) {
    throw ConfigError("graph learner expects width " + std::to_string(input_width_) +
                      ", got " + std::to_string(h.cols()));
  }
  Var x = h;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = ag::add_row(ag::matmul(x, weights_[l]), biases_[l]);
    if (l < slopes_.size()) {
      x = dropout(ag::prelu(x, slopes_[l]), cfg_.dropout, dropout_rng);
    }
  }
  return x;
}

WeightedAdjacency GraphLearner::operator()(const Var& h, Rng* dropout_rng) const {
  return {pairwise_cosine(embed(h, dropout_rng)), AdjacencyTag::kRaw};
}

AnchorClassifier::AnchorClassifier(Eigen::Index input_width, int class_count,
                                   int hidden, std::uint64_t seed) {
  Rng rng(seed);
  l1_ = Linear(params_, "anchor.l1", input_width, hidden, rng);
  l2_ = Linear(params_, "anchor.l2", hidden, hidden, rng);
  l3_ = Linear(params_, "anchor.l3", hidden, class_count, rng);
}

Var AnchorClassifier::logits(const Matrix& features) const {
  Var x = ag::constant(features);
  x = ag::relu(l1_(x));
  x = ag::relu(l2_(x));
  return l3_(x);
}

Matrix AnchorClassifier::predict_proba(const TabularDataset& ds) const {
  return ag::softmax_rows(logits(ds.dense_features())).value();
}

namespace {

std::vector<int> argmax_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto i : rows) {
    Eigen::Index best;
    m.row(i).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<int> labels_at(const std::vector<int>& y,
                           const std::vector<Eigen::Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

AnchorClassifier train_anchor_classifier(const TabularDataset& ds,
                                         const SplitIndices& split,
                                         const AnchorTrainConfig& cfg,
                                         std::uint64_t seed) {
  std::vector<int> present(static_cast<std::size_t>(ds.class_count), 0);
  for (auto i : split.train) present[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])] = 1;
  for (int c = 0; c < ds.class_count; ++c) {
    if (!present[static_cast<std::size_t>(c)]) {
      throw DataError("class " + std::to_string(c) + " is absent from the train split");
    }
  }
  const Matrix features = ds.dense_features();
  AnchorClassifier cls(features.cols(), ds.class_count, cfg.hidden, seed);
  Adam opt;
  opt.add_group(cls.params_, {.lr = cfg.lr, .weight_decay = cfg.weight_decay});

  const std::vector<int> train_y = labels_at(ds.y, split.train);
  const std::vector<int> valid_y = labels_at(ds.y, split.valid);
  std::vector<Eigen::Index> train_cols(train_y.begin(), train_y.end());

  auto best = cls.params_.snapshot();
  double best_metric = -1.0;
  int best_epoch = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    cls.params_.zero_grad();
    Var logp = ag::log_softmax_rows(cls.logits(features));
    Var loss = ag::scale(ag::sum(ag::pick(logp, split.train, train_cols)),
                         -1.0 / static_cast<double>(split.train.size()));
    ag::backward(loss);
    opt.step();

    const Matrix logits = cls.logits(features).value();
    const double metric =
        split.valid.empty()
            ? 0.0
            : f1_scores(valid_y, argmax_rows(logits, split.valid), ds.class_count).macro;
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best = cls.params_.snapshot();
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }
  cls.params_.restore(best);
  cls.params_.zero_grad();
  cls.best_epoch_ = best_epoch;
  cls.best_valid_ = best_metric;
  return cls;
}

WeightedAdjacency build_anchor_adjacency(const Matrix& probabilities) {
  return WeightedAdjacency::fixed(pairwise_cosine(probabilities), AdjacencyTag::kAnchor);
}

WeightedAdjacency build_anchor_adjacency(const AnchorClassifier& cls,
                                         const TabularDataset& ds) {
  return build_anchor_adjacency(cls.predict_proba(ds));
}

}  // namespace tabgsl
