#include "tabgsl/feat_extract.hpp"

#include "tabgsl/error.hpp"

namespace tabgsl {

namespace {
constexpr double kEmbeddingStd = 0.02;
}

FeatureTokenizer::FeatureTokenizer(ParameterSet& params, Eigen::Index m_num,
                                   const std::vector<int>& cat_cardinalities,
                                   Eigen::Index width, Rng& rng) {
  cls = params.add("tokenizer.cls", normal_matrix(rng, 1, width, kEmbeddingStd));
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  Matrix w(m_num, width), b(m_num, width);
  for (Eigen::Index i = 0; i < m_num; ++i) {
    for (Eigen::Index j = 0; j < width; ++j) {
      w(i, j) = rng.uniform(-bound, bound);
      b(i, j) = rng.uniform(-bound, bound);
    }
  }
  num_weight = params.add("tokenizer.num_weight", std::move(w));
  num_bias = params.add("tokenizer.num_bias", std::move(b));
  for (std::size_t j = 0; j < cat_cardinalities.size(); ++j) {
    cat_tables.push_back(params.add(
        "tokenizer.cat_table." + std::to_string(j),
        normal_matrix(rng, cat_cardinalities[j], width, kEmbeddingStd)));
  }
}

FeatureTokens FeatureTokenizer::operator()(const Eigen::MatrixXd& x_num,
                                           const Eigen::MatrixXi& x_cat) const {
  const Eigen::Index n = x_num.rows();
  const Eigen::Index m_num = x_num.cols();
  const Eigen::Index m_cat = x_cat.cols();
  const Eigen::Index d = cls.cols();
  if (m_num != num_weight.rows() ||
      m_cat != static_cast<Eigen::Index>(cat_tables.size()) || x_cat.rows() != n) {
    throw DataError("tokenizer: feature widths do not match parameters");
  }
  for (Eigen::Index j = 0; j < m_cat; ++j) {
    const auto card = cat_tables[static_cast<std::size_t>(j)].rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x_cat(i, j) < 0 || x_cat(i, j) >= card) {
        throw DataError("tokenizer: category index " +
                        std::to_string(x_cat(i, j)) + " out of table range in column " +
                        std::to_string(j));
      }
    }
  }
  const Eigen::Index T = 1 + m_cat + m_num;

  Matrix out(n * T, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index base = i * T;
    out.row(base) = cls.value().row(0);
    for (Eigen::Index j = 0; j < m_cat; ++j) {
      out.row(base + 1 + j) =
          cat_tables[static_cast<std::size_t>(j)].value().row(x_cat(i, j));
    }
    for (Eigen::Index j = 0; j < m_num; ++j) {
      out.row(base + 1 + m_cat + j) =
          x_num(i, j) * num_weight.value().row(j) + num_bias.value().row(j);
    }
  }

  std::vector<Var> parents{cls, num_weight, num_bias};
  parents.insert(parents.end(), cat_tables.begin(), cat_tables.end());
  Var tokens = ag::make_op(
      std::move(out), std::move(parents),
      [x_num, x_cat, n, T, m_num, m_cat](ag::Node& node) {
        const auto& G = node.grad;
        const Eigen::Index width = G.cols();
        Matrix g_cls = Matrix::Zero(1, width);
        Matrix g_w = Matrix::Zero(m_num, width);
        Matrix g_b = Matrix::Zero(m_num, width);
        std::vector<Matrix> g_tab;
        for (Eigen::Index j = 0; j < m_cat; ++j) {
          const auto& tab = node.parents[static_cast<std::size_t>(3 + j)]->value;
          g_tab.push_back(Matrix::Zero(tab.rows(), width));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::Index base = i * T;
          g_cls += G.row(base);
          for (Eigen::Index j = 0; j < m_cat; ++j) {
            g_tab[static_cast<std::size_t>(j)].row(x_cat(i, j)) += G.row(base + 1 + j);
          }
          for (Eigen::Index j = 0; j < m_num; ++j) {
            const auto g = G.row(base + 1 + m_cat + j);
            g_w.row(j) += x_num(i, j) * g;
            g_b.row(j) += g;
          }
        }
        if (node.parents[0]->requires_grad) node.parents[0]->accumulate(g_cls);
        if (node.parents[1]->requires_grad) node.parents[1]->accumulate(g_w);
        if (node.parents[2]->requires_grad) node.parents[2]->accumulate(g_b);
        for (Eigen::Index j = 0; j < m_cat; ++j) {
          auto& p = *node.parents[static_cast<std::size_t>(3 + j)];
          if (p.requires_grad) p.accumulate(g_tab[static_cast<std::size_t>(j)]);
        }
      });
  return {tokens, n, T, d};
}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name,
                                   Eigen::Index width, Rng& rng)
    : heads(attention_heads(static_cast<int>(width))) {
  ln1_gamma = params.add(name + ".ln1.gamma", Matrix::Ones(1, width));
  ln1_beta = params.add(name + ".ln1.beta", Matrix::Zero(1, width));
  query = Linear(params, name + ".attn.query", width, width, rng);
  key = Linear(params, name + ".attn.key", width, width, rng);
  value = Linear(params, name + ".attn.value", width, width, rng);
  out = Linear(params, name + ".attn.out", width, width, rng);
  ln2_gamma = params.add(name + ".ln2.gamma", Matrix::Ones(1, width));
  ln2_beta = params.add(name + ".ln2.beta", Matrix::Zero(1, width));
  ffn_in = Linear(params, name + ".ffn.in", width, kFfnMultiplier * width, rng);
  ffn_out = Linear(params, name + ".ffn.out", kFfnMultiplier * width, width, rng);
}

Var TransformerBlock::operator()(const Var& x, Eigen::Index block,
                                 double dropout_rate, Rng* dropout_rng) const {
  Var h = ag::layer_norm(x, ln1_gamma, ln1_beta);
  Var attn = ag::block_attention(query(h), key(h), value(h), block, heads);
  Var y = x + dropout(out(attn), dropout_rate, dropout_rng);
  Var f = ag::layer_norm(y, ln2_gamma, ln2_beta);
  f = dropout(ag::relu(ffn_in(f)), dropout_rate, dropout_rng);
  return y + ffn_out(f);
}

FeatureExtractor::FeatureExtractor(Eigen::Index m_num,
                                   const std::vector<int>& cat_cardinalities,
                                   FeatureExtractorConfig cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg_.layers < 1) {
    throw ConfigError("L_fe must be at least 1, got " + std::to_string(cfg_.layers));
  }
  if (cfg_.width < 1 || cfg_.width % attention_heads(cfg_.width) != 0) {
    throw ConfigError("d_fe must be divisible by the attention head count");
  }
  Rng rng(seed);
  tokenizer_ = FeatureTokenizer(params_, m_num, cat_cardinalities, cfg_.width, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    blocks_.emplace_back(params_, "transformer." + std::to_string(l), cfg_.width, rng);
  }
  final_gamma_ = params_.add("readout.ln.gamma", Matrix::Ones(1, cfg_.width));
  final_beta_ = params_.add("readout.ln.beta", Matrix::Zero(1, cfg_.width));
}

FeatureTokens FeatureExtractor::tokenize(const TabularDataset& ds) const {
  return tokenizer_(ds.x_num, ds.x_cat);
}

Var FeatureExtractor::extract(const FeatureTokens& tokens, Rng* dropout_rng) const {
  Var x = tokens.tokens;
  for (const auto& blk : blocks_) x = blk(x, tokens.token_count, cfg_.dropout, dropout_rng);
  std::vector<Eigen::Index> cls_rows(static_cast<std::size_t>(tokens.n));
  for (Eigen::Index i = 0; i < tokens.n; ++i) {
    cls_rows[static_cast<std::size_t>(i)] = i * tokens.token_count;
  }
  return ag::layer_norm(ag::gather_rows(x, cls_rows), final_gamma_, final_beta_);
}

}  // namespace tabgsl
