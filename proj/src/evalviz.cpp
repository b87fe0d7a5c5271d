#include "tabgsl/evalviz.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tabgsl {

std::string MetricResult::formatted() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.0f±%.1f", mean * 100.0, std * 100.0);
  return buf;
}

MetricResult aggregate(std::string metric, std::vector<double> scores, int failed_trials) {
  MetricResult r;
  r.metric = std::move(metric);
  r.scores = std::move(scores);
  r.failed_trials = failed_trials;
  if (r.scores.empty()) return r;
  const double n = static_cast<double>(r.scores.size());
  r.mean = std::accumulate(r.scores.begin(), r.scores.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : r.scores) ss += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

MetricResult multi_trial(const TabularDataset& ds, const SplitIndices& split,
                         const TrainConfig& cfg, int trials, int workers) {
  if (trials < 1) throw ConfigError("trials: must be at least 1");
  cfg.validate();
  std::vector<double> scores(static_cast<std::size_t>(trials), 0.0);
  std::vector<char> failed(static_cast<std::size_t>(trials), 0);
  parallel_for(trials, workers, [&](int i) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    try {
      scores[static_cast<std::size_t>(i)] = train(ds, split, c).report.test_metric;
    } catch (const DivergenceError&) {
      failed[static_cast<std::size_t>(i)] = 1;
    }
  });
  std::vector<double> done;
  int failures = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (failed[i]) {
      ++failures;
    } else {
      done.push_back(scores[i]);
    }
  }
  return aggregate(ds.class_count == 2 ? "minority_f1" : "macro_f1", std::move(done),
                   failures);
}

SweepParam parse_sweep_param(const std::string& s) {
  if (s == "tau") return SweepParam::kTau;
  if (s == "k") return SweepParam::kK;
  throw ConfigError("param: expected tau or k, got '" + s + "'");
}

std::string to_string(SweepParam p) { return p == SweepParam::kTau ? "tau" : "k"; }

std::vector<SweepRow> sweep(const TabularDataset& ds, const SplitIndices& split,
                            const TrainConfig& base, SweepParam param,
                            const std::vector<double>& values, int trials, int workers) {
  std::vector<TrainConfig> configs;
  for (double v : values) {
    TrainConfig c = base;
    if (param == SweepParam::kTau) {
      c.tau = v;
    } else {
      if (v != std::floor(v)) throw ConfigError("k: must be an integer, got " + std::to_string(v));
      c.k = static_cast<int>(v);
    }
    c.validate();
    configs.push_back(c);
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    rows.push_back({values[i], multi_trial(ds, split, configs[i], trials, workers)});
  }
  return rows;
}

namespace {

struct RankedDiffs {
  std::vector<int> doubled_ranks;  // 2 * average rank, always an integer
  long w_plus2 = 0;                // doubled positive rank sum
  double tie_term = 0.0;           // sum of t^3 - t over tie groups
};

RankedDiffs rank_differences(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("signed rank: length mismatch");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  if (d.size() < 5) {
    throw std::invalid_argument("signed rank: fewer than 5 nonzero differences");
  }
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  RankedDiffs r;
  r.doubled_ranks.assign(d.size(), 0);
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    // Positions i..j (0-based) share rank ((i+1) + (j+1)) / 2.
    const int doubled = static_cast<int>(i + j + 2);
    for (std::size_t p = i; p <= j; ++p) r.doubled_ranks[idx[p]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    r.tie_term += t * t * t - t;
    i = j + 1;
  }
  for (std::size_t p = 0; p < d.size(); ++p) {
    if (d[p] > 0) r.w_plus2 += r.doubled_ranks[p];
  }
  return r;
}

double normal_p(const RankedDiffs& r) {
  const double n = static_cast<double>(r.doubled_ranks.size());
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - r.tie_term / 48.0;
  const double w = static_cast<double>(r.w_plus2) / 2.0;
  // Continuity correction of half a rank unit.
  const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

constexpr std::size_t kExactLimit = 20;

}  // namespace

double paired_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  const RankedDiffs r = rank_differences(a, b);
  const std::size_t n = r.doubled_ranks.size();
  if (n > kExactLimit) return normal_p(r);
  // Counting the sign assignments by their doubled W+ is the same
  // enumeration, grouped by statistic value.
  const long total = std::accumulate(r.doubled_ranks.begin(), r.doubled_ranks.end(), 0L);
  std::vector<double> count(static_cast<std::size_t>(total + 1), 0.0);
  count[0] = 1.0;
  long reach = 0;
  for (int rank : r.doubled_ranks) {
    reach += rank;
    for (long s = reach; s >= rank; --s) {
      count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - rank)];
    }
  }
  const long observed = std::abs(2 * r.w_plus2 - total);
  double extreme = 0.0;
  for (long s = 0; s <= total; ++s) {
    if (std::abs(2 * s - total) >= observed) extreme += count[static_cast<std::size_t>(s)];
  }
  return extreme / std::ldexp(1.0, static_cast<int>(n));
}

double signed_rank_normal_approx(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  return normal_p(rank_differences(a, b));
}

double homophily(const Matrix& w, const std::vector<int>& y) {
  if (w.rows() != w.cols() || static_cast<std::size_t>(w.rows()) != y.size()) {
    throw std::invalid_argument("homophily: adjacency and labels disagree in size");
  }
  double same = 0.0;
  double all = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < w.cols(); ++j) {
      all += w(i, j);
      if (y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)]) same += w(i, j);
    }
  }
  if (!(all > 0.0)) throw std::invalid_argument("homophily: graph has zero total weight");
  return same / all;
}

NodeOrder parse_node_order(const std::string& s) {
  if (s == "by_class" || s == "by-class") return NodeOrder::kByClass;
  if (s == "natural") return NodeOrder::kNatural;
  throw ConfigError("order: expected by_class or natural, got '" + s + "'");
}

std::vector<Eigen::Index> node_order(const std::vector<int>& y, NodeOrder order) {
  std::vector<Eigen::Index> idx(y.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (order == NodeOrder::kByClass) {
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return y[static_cast<std::size_t>(a)] < y[static_cast<std::size_t>(b)];
    });
  }
  return idx;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << kExportHeader << '\n';
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  std::string line;
  if (!std::getline(in, line) || line != kExportHeader) {
    throw DataError(p.string() + ": missing export header");
  }
  return in;
}

std::string fmt(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return prefix.string() + suffix;
}

}  // namespace

GraphExportPaths export_graph(const Matrix& w, const std::vector<int>& y, NodeOrder order,
                              const std::filesystem::path& prefix,
                              const std::vector<int>& predicted) {
  const Eigen::Index n = w.rows();
  if (w.cols() != n || static_cast<std::size_t>(n) != y.size()) {
    throw std::invalid_argument("export_graph: adjacency and labels disagree in size");
  }
  if (!predicted.empty() && predicted.size() != y.size()) {
    throw std::invalid_argument("export_graph: predictions and labels disagree in size");
  }
  GraphExportPaths paths{with_suffix(prefix, ".edges.tsv"), with_suffix(prefix, ".matrix.csv"),
                         with_suffix(prefix, ".order.tsv")};
  const auto perm = node_order(y, order);
  {
    auto out = open_out(paths.edges);
    out << "src\tdst\tweight\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (w(i, j) >= kEdgeThreshold) out << i << '\t' << j << '\t' << fmt(w(i, j), 17) << '\n';
      }
    }
  }
  {
    auto out = open_out(paths.matrix);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c) out << ',';
        out << fmt(w(perm[static_cast<std::size_t>(r)], perm[static_cast<std::size_t>(c)]), 17);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(paths.order);
    out << "position\tnode\tlabel\tpredicted\n";
    for (std::size_t p = 0; p < perm.size(); ++p) {
      const auto node = static_cast<std::size_t>(perm[p]);
      out << p << '\t' << node << '\t' << y[node] << '\t';
      if (predicted.empty()) {
        out << "NA";
      } else {
        out << predicted[node];
      }
      out << '\n';
    }
  }
  return paths;
}

Matrix read_graph_export(const std::filesystem::path& edges,
                         const std::filesystem::path& order) {
  std::string line;
  auto ord = open_in(order);
  std::getline(ord, line);  // column header
  Eigen::Index n = 0;
  while (std::getline(ord, line)) {
    if (!line.empty()) ++n;
  }
  Matrix w = Matrix::Zero(n, n);
  auto in = open_in(edges);
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double v = 0.0;
    if (!(ss >> i >> j >> v) || i < 0 || j < 0 || i >= n || j >= n) {
      throw DataError(edges.string() + ": malformed edge '" + line + "'");
    }
    w(i, j) = v;
    w(j, i) = v;
  }
  return w;
}

void export_embeddings(const Matrix& h, const std::vector<int>& y,
                       const std::filesystem::path& out_path) {
  if (static_cast<std::size_t>(h.rows()) != y.size()) {
    throw std::invalid_argument("export_embeddings: rows and labels disagree");
  }
  auto out = open_out(out_path);
  out << "label";
  for (Eigen::Index c = 0; c < h.cols(); ++c) out << "\th" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    out << y[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < h.cols(); ++c) out << '\t' << fmt(h(r, c), 9);
    out << '\n';
  }
}

EmbeddingFile read_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  EmbeddingFile f;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int label = 0;
    if (!(ss >> label)) throw DataError(path.string() + ": malformed row");
    f.labels.push_back(label);
    rows.emplace_back();
    double v = 0.0;
    while (ss >> v) rows.back().push_back(v);
  }
  const Eigen::Index d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  f.values.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != d) {
      throw DataError(path.string() + ": ragged embedding rows");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      f.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
  }
  return f;
}

}  // namespace tabgsl
