#include "tabgsl/gnn_head.hpp"

#include "tabgsl/error.hpp"

#include <cmath>
#include <stdexcept>

namespace tabgsl {

WeightedAdjacency gcn_normalize(const WeightedAdjacency& a) {
  const Eigen::Index n = a.n();
  if ((a.weights().array() < 0.0).any()) {
    throw std::invalid_argument("gcn_normalize: negative edge weight");
  }
  Var with_loops = ag::add_const(a.w, Matrix::Identity(n, n));
  Var inv_sqrt_deg = ag::pow_scalar(ag::row_sum(with_loops), -0.5);
  Var out = ag::scale_cols(ag::scale_rows(with_loops, inv_sqrt_deg), inv_sqrt_deg);
  return {out, AdjacencyTag::kNormalized};
}

Var GcnLayer::operator()(const Var& a_norm, const Var& x) const {
  // Multiply in whichever order keeps the n x n product narrow.
  if (linear.out_features() < linear.in_features()) {
    return ag::add_row(ag::matmul(a_norm, ag::matmul(x, linear.weight)), linear.bias);
  }
  return linear(ag::matmul(a_norm, x));
}

GcnClassifier::GcnClassifier(Eigen::Index input_width, int class_count,
                             GcnClassifierConfig cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg_.layers < 1) throw ConfigError("L_mt must be at least 1");
  Rng rng(seed);
  Eigen::Index in = input_width;
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_.emplace_back(params_, "gcn." + std::to_string(l), in, cfg_.width, rng);
    in = cfg_.width;
  }
  readout_hidden_ = Linear(params_, "readout.hidden", cfg_.width, cfg_.width, rng);
  readout_out_ = Linear(params_, "readout.out", cfg_.width, class_count, rng);
}

Var GcnClassifier::logits(const Var& h, const WeightedAdjacency& a,
                          Rng* dropout_rng) const {
  if (h.cols() != layers_.front().linear.in_features()) {
    throw ConfigError("GCN classifier expects width " +
                      std::to_string(layers_.front().linear.in_features()) +
                      ", got " + std::to_string(h.cols()));
  }
  if (a.n() != h.rows()) throw ConfigError("adjacency size does not match node count");
  const Var a_norm = a.tag == AdjacencyTag::kNormalized ? a.w : gcn_normalize(a).w;
  Var z = h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    z = layers_[l](a_norm, dropout(z, cfg_.dropout, dropout_rng));
    if (l + 1 < layers_.size()) z = ag::relu(z);
  }
  z = dropout(ag::relu(readout_hidden_(z)), cfg_.dropout, dropout_rng);
  return readout_out_(z);
}

double nll_loss(const Matrix& probabilities, const std::vector<int>& y,
                const std::vector<Eigen::Index>& mask) {
  if (mask.empty()) throw std::invalid_argument("nll_loss: empty mask");
  double total = 0.0;
  for (auto i : mask) {
    const double p = probabilities(i, y[static_cast<std::size_t>(i)]);
    total += std::log(std::max(p, kProbabilityFloor));
  }
  return -total / static_cast<double>(mask.size());
}

Var nll_loss(const Var& log_probabilities, const std::vector<int>& y,
             const std::vector<Eigen::Index>& mask) {
  if (mask.empty()) throw std::invalid_argument("nll_loss: empty mask");
  std::vector<Eigen::Index> cols;
  cols.reserve(mask.size());
  for (auto i : mask) cols.push_back(y[static_cast<std::size_t>(i)]);
  Var picked = ag::pick(log_probabilities, mask, cols);
  const auto m = static_cast<Eigen::Index>(mask.size());
  Var floored = ag::maximum(
      picked, ag::constant(Matrix::Constant(m, 1, std::log(kProbabilityFloor))));
  return ag::scale(ag::sum(floored), -1.0 / static_cast<double>(m));
}

}  // namespace tabgsl
