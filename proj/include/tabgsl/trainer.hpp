// Training orchestration: the joint end-to-end objective, the two-phase
// strategies, early stopping and random hyperparameter search.
#pragma once

#include "tabgsl/config.hpp"
#include "tabgsl/contrast.hpp"
#include "tabgsl/error.hpp"
#include "tabgsl/feat_extract.hpp"
#include "tabgsl/gnn_head.hpp"
#include "tabgsl/graph_learn.hpp"
#include "tabgsl/tabdata.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tabgsl {

/// Every trainable component of one run plus the current anchor structure.
class Model {
 public:
  Model(const TabularDataset& ds, const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  int class_count() const { return class_count_; }

  FeatureExtractor& extractor() { return fe_; }
  const FeatureExtractor& extractor() const { return fe_; }
  GraphLearner& graph_learner() { return gl_; }
  const GraphLearner& graph_learner() const { return gl_; }
  EncoderProjector& encoder() { return enc_; }
  const EncoderProjector& encoder() const { return enc_; }
  GcnClassifier& head() { return head_; }
  const GcnClassifier& head() const { return head_; }

  /// Extractor, graph learner, encoder and projector.
  ParameterSet gsl_parameters() const;
  /// GCN classifier and readout.
  ParameterSet nc_parameters() const;
  /// All of the above, in checkpoint order.
  ParameterSet all_parameters() const;

  WeightedAdjacency& anchor() { return anchor_; }
  const WeightedAdjacency& anchor() const { return anchor_; }
  void set_anchor(WeightedAdjacency a) { anchor_ = std::move(a); }

  struct Inference {
    Matrix embeddings;   // H
    Matrix graph;        // kNN learner adjacency
    Matrix probabilities;
    std::vector<int> predictions;
  };
  /// Dropout-free forward pass over every instance.
  Inference infer(const TabularDataset& ds) const;

 private:
  TrainConfig cfg_;
  int class_count_;
  FeatureExtractor fe_;
  GraphLearner gl_;
  EncoderProjector enc_;
  GcnClassifier head_;
  WeightedAdjacency anchor_;
};

struct EpochRecord {
  std::string phase;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> l_nc;
  std::optional<double> l_gcl;
  std::optional<double> valid_metric;
};

struct TrainReport {
  std::string strategy;
  std::vector<std::string> phases;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_valid_metric = 0.0;
  double test_metric = 0.0;
  double test_minority_f1 = 0.0;
  double test_macro_f1 = 0.0;
  double anchor_valid_metric = 0.0;
  double learned_graph_homophily = 0.0;
  double wall_time_s = 0.0;
  std::string config_hash;
  TrainConfig config;
  bool diverged = false;
  std::string graph_snapshot;

  nlohmann::json to_json() const;
  static TrainReport from_json(const nlohmann::json& j);
};

/// Thrown when a loss turns non-finite; carries the report up to the failure.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainReport partial)
      : DivergenceError(what), report(std::move(partial)) {}
  TrainReport report;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

/// Observer invoked after every completed epoch; used by tests to watch
/// parameters and the anchor evolve.
using EpochObserver = std::function<void(const Model&, const EpochRecord&)>;

struct TrainHooks {
  EpochObserver on_epoch;
};

/// Trains the anchor classifier and installs the anchor adjacency.
void initialize_anchor(Model& model, const TabularDataset& ds, const SplitIndices& split,
                       TrainReport& report);

/// Losses of one training-mode forward pass, with the autodiff graph.
struct StepLosses {
  Var total;
  Var l_nc;
  Var l_gcl;
  WeightedAdjacency learner;
};

/// Forward pass of the joint objective for `epoch`. `with_nc` / `with_gcl`
/// select the loss terms; at least one must be set.
StepLosses joint_forward(const Model& model, const TabularDataset& ds,
                         const SplitIndices& split, long epoch, bool with_nc,
                         bool with_gcl);

/// Joint L_nc - L_gcl training over all parameters with bootstrapping.
TrainResult train_end_to_end(const TabularDataset& ds, const SplitIndices& split,
                             const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Contrastive phase: minimizes -L_gcl over the GSL parameters for
/// `cfg.pretrain_epochs` epochs, bootstrapping the anchor every epoch.
void run_contrastive_phase(Model& model, const TabularDataset& ds,
                           const SplitIndices& split, TrainReport& report,
                           const TrainHooks& hooks = {});

enum class Trainable { kHeadOnly, kAll };

/// Classification phase on L_nc with early stopping. With kHeadOnly the
/// extractor output and learned graph are computed once and held fixed.
void run_classifier_phase(Model& model, const TabularDataset& ds,
                          const SplitIndices& split, Trainable which,
                          TrainReport& report, const TrainHooks& hooks = {});

TrainResult train_two_stage(const TabularDataset& ds, const SplitIndices& split,
                            const TrainConfig& cfg, const TrainHooks& hooks = {});
TrainResult train_pretrain_finetune(const TabularDataset& ds, const SplitIndices& split,
                                    const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Dispatches on cfg.strategy.
TrainResult train(const TabularDataset& ds, const SplitIndices& split,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Headline validation/test metric of a model on `rows`.
double evaluate_metric(const Model& model, const TabularDataset& ds,
                       const std::vector<Eigen::Index>& rows);

/// Draws the tuned fields from the published ranges (log-uniform learning
/// rates); schedule, strategy and seed come from `base`.
TrainConfig sample_config(const TrainConfig& base, Rng& rng);

struct LeaderboardEntry {
  int trial = 0;
  double valid_metric = 0.0;
  double test_metric = 0.0;
  bool failed = false;
  TrainConfig config;
};

struct SearchResult {
  TrainConfig best;
  std::vector<LeaderboardEntry> leaderboard;  // sorted, best first
};

/// Trial i's configuration depends only on (seed, i), so a larger budget
/// extends a smaller one.
SearchResult random_search(const TabularDataset& ds, const SplitIndices& split,
                           const TrainConfig& base, int budget, std::uint64_t seed,
                           int workers = 1);

/// Runs `fn(i)` for i in [0, count) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

/// Worker cap from TABGSL_NUM_WORKERS (default 1).
int workers_from_env();

}  // namespace tabgsl
