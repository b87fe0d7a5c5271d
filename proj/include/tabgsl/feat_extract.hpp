// Feature tokenizer and per-instance transformer encoder.
//
// Each instance becomes a sequence of m + 1 tokens: a shared [CLS] vector,
// one token per categorical column (embedding-table row) and one per numeric
// column (value * weight + bias). Self-attention runs inside each instance's
// own sequence; the [CLS] output of the last layer is the instance embedding.
#pragma once

#include "tabgsl/nn.hpp"
#include "tabgsl/tabdata.hpp"

#include <cstdint>
#include <vector>

namespace tabgsl {

struct FeatureTokens {
  /// (n * token_count) x width; rows [i * token_count, (i+1) * token_count)
  /// belong to instance i, position 0 being [CLS].
  Var tokens;
  Eigen::Index n = 0;
  Eigen::Index token_count = 0;
  Eigen::Index width = 0;
};

class FeatureTokenizer {
 public:
  FeatureTokenizer() = default;
  FeatureTokenizer(ParameterSet& params, Eigen::Index m_num,
                   const std::vector<int>& cat_cardinalities, Eigen::Index width,
                   Rng& rng);

  FeatureTokens operator()(const Eigen::MatrixXd& x_num,
                           const Eigen::MatrixXi& x_cat) const;

  Var cls;
  Var num_weight;  // m_num x width
  Var num_bias;    // m_num x width
  std::vector<Var> cat_tables;  // cardinality_j x width
};

struct TransformerBlock {
  Var ln1_gamma, ln1_beta;
  Linear query, key, value, out;
  Var ln2_gamma, ln2_beta;
  Linear ffn_in, ffn_out;
  int heads = 1;

  TransformerBlock() = default;
  TransformerBlock(ParameterSet& params, const std::string& name,
                   Eigen::Index width, Rng& rng);

  /// Pre-norm block: x + attn(LN(x)), then x + FFN(LN(x)).
  Var operator()(const Var& x, Eigen::Index block, double dropout_rate,
                 Rng* dropout_rng) const;
};

struct FeatureExtractorConfig {
  int width = 16;   // d_fe
  int layers = 1;   // L_fe
  double dropout = 0.0;
};

inline int attention_heads(int width) { return std::max(1, width / 64); }
inline constexpr int kFfnMultiplier = 2;

class FeatureExtractor {
 public:
  FeatureExtractor(Eigen::Index m_num, const std::vector<int>& cat_cardinalities,
                   FeatureExtractorConfig cfg, std::uint64_t seed);

  FeatureTokens tokenize(const TabularDataset& ds) const;
  /// Runs the transformer stack and reads out the [CLS] rows (n x width).
  Var extract(const FeatureTokens& tokens, Rng* dropout_rng = nullptr) const;
  Var operator()(const TabularDataset& ds, Rng* dropout_rng = nullptr) const {
    return extract(tokenize(ds), dropout_rng);
  }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const FeatureExtractorConfig& config() const { return cfg_; }
  const FeatureTokenizer& tokenizer() const { return tokenizer_; }

 private:
  FeatureExtractorConfig cfg_;
  ParameterSet params_;
  FeatureTokenizer tokenizer_;
  std::vector<TransformerBlock> blocks_;
  Var final_gamma_, final_beta_;
};

}  // namespace tabgsl
