// Multi-seed aggregation, sensitivity sweeps, significance testing,
// homophily, and plot-ready exports of learned graphs and embeddings.
#pragma once

#include "tabgsl/config.hpp"
#include "tabgsl/graph_learn.hpp"
#include "tabgsl/metrics.hpp"
#include "tabgsl/tabdata.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tabgsl {

inline constexpr const char* kExportHeader = "# tabgsl-export v1";

struct MetricResult {
  std::string metric;
  std::vector<double> scores;  // one per completed trial
  double mean = 0.0;
  double std = 0.0;            // population std
  int failed_trials = 0;

  bool partial() const { return failed_trials > 0; }
  /// Percentages, e.g. "52±0.2".
  std::string formatted() const;
};

MetricResult aggregate(std::string metric, std::vector<double> scores,
                       int failed_trials = 0);

/// Trains `trials` runs with seeds cfg.seed + 0 .. cfg.seed + trials - 1 on
/// the fixed split and aggregates the test metric.
MetricResult multi_trial(const TabularDataset& ds, const SplitIndices& split,
                         const TrainConfig& cfg, int trials, int workers = 1);

enum class SweepParam { kTau, kK };

SweepParam parse_sweep_param(const std::string& s);
std::string to_string(SweepParam p);

struct SweepRow {
  double value = 0.0;
  MetricResult result;
};

/// One multi_trial per value with everything else fixed.
std::vector<SweepRow> sweep(const TabularDataset& ds, const SplitIndices& split,
                            const TrainConfig& base, SweepParam param,
                            const std::vector<double>& values, int trials,
                            int workers = 1);

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped,
/// tied magnitudes share average ranks. Exact enumeration of all sign
/// assignments for up to 20 nonzero differences, normal approximation with
/// tie correction above that. Throws std::invalid_argument with fewer than
/// 5 nonzero differences.
double paired_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

/// Same statistic through the normal approximation regardless of size.
double signed_rank_normal_approx(const std::vector<double>& a,
                                 const std::vector<double>& b);

/// Fraction of upper-triangle edge weight joining same-label nodes.
double homophily(const Matrix& w, const std::vector<int>& y);

enum class NodeOrder { kByClass, kNatural };
NodeOrder parse_node_order(const std::string& s);

/// Node permutation: natural index order, or stable sort by (label, index).
std::vector<Eigen::Index> node_order(const std::vector<int>& y, NodeOrder order);

struct GraphExportPaths {
  std::filesystem::path edges;
  std::filesystem::path matrix;
  std::filesystem::path order;
};

inline constexpr double kEdgeThreshold = 1e-6;

/// Writes `<prefix>.edges.tsv` (src<TAB>dst<TAB>weight with src < dst and
/// weight >= 1e-6), `<prefix>.matrix.csv` (dense weights in node order) and
/// `<prefix>.order.tsv` (position, node, label, predicted label).
GraphExportPaths export_graph(const Matrix& w, const std::vector<int>& y,
                              NodeOrder order, const std::filesystem::path& prefix,
                              const std::vector<int>& predicted = {});

/// Rebuilds the n x n matrix from an edge list and an order file.
Matrix read_graph_export(const std::filesystem::path& edges,
                         const std::filesystem::path& order);

/// TSV with one row per instance: label then the embedding at 9 significant
/// digits.
void export_embeddings(const Matrix& h, const std::vector<int>& y,
                       const std::filesystem::path& out);

struct EmbeddingFile {
  std::vector<int> labels;
  Matrix values;
};
EmbeddingFile read_embeddings(const std::filesystem::path& path);

}  // namespace tabgsl
