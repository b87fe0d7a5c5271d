#include "tabgsl/trainer.hpp"

#include "tabgsl/evalviz.hpp"
#include "tabgsl/metrics.hpp"
#include "tabgsl/optim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace tabgsl {

namespace {

const TrainConfig& validated(const TrainConfig& cfg) {
  cfg.validate();
  return cfg;
}

std::uint64_t init_seed(const TrainConfig& cfg, std::uint64_t component) {
  return derive_seed(derive_seed(cfg.seed, SeedStream::kInit), component);
}

std::vector<int> labels_at(const std::vector<int>& y,
                           const std::vector<Eigen::Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> argmax_rows(const Matrix& p) {
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best;
    p.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double headline_on(const std::vector<int>& y, const std::vector<int>& pred,
                   const std::vector<Eigen::Index>& rows, int class_count) {
  const auto truth = labels_at(y, rows);
  const auto guess = labels_at(pred, rows);
  return headline_metric(f1_scores(truth, guess, class_count), class_count);
}

Rng dropout_rng(const TrainConfig& cfg, long epoch) {
  return Rng(derive_seed(derive_seed(cfg.seed, SeedStream::kDropout),
                         static_cast<std::uint64_t>(epoch)));
}

/// Tracks the best validation epoch and the state to restore.
class BestTracker {
 public:
  BestTracker(const ParameterSet& params, const Model& model)
      : params_(params), model_(model) {}

  /// Returns true when training should stop.
  bool observe(int epoch, double metric, int patience) {
    if (metric > best_metric_) {
      best_metric_ = metric;
      best_epoch_ = epoch;
      best_params_ = params_.snapshot();
      best_anchor_ = model_.anchor().weights();
      return false;
    }
    return epoch - best_epoch_ >= patience;
  }

  void restore(ParameterSet& params, Model& model) const {
    if (best_epoch_ < 0) return;
    params.restore(best_params_);
    model.set_anchor(WeightedAdjacency::fixed(best_anchor_, AdjacencyTag::kAnchor));
  }

  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }

 private:
  const ParameterSet& params_;
  const Model& model_;
  double best_metric_ = -std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  std::vector<Matrix> best_params_;
  Matrix best_anchor_;
};

int next_epoch(const TrainReport& report) {
  return report.epochs.empty() ? 0 : report.epochs.back().epoch + 1;
}

void check_finite(double value, const char* what, TrainReport& report) {
  if (!std::isfinite(value)) {
    report.diverged = true;
    throw TrainingDiverged(std::string("non-finite ") + what + " at epoch " +
                               std::to_string(next_epoch(report)),
                           report);
  }
}

TrainReport start_report(const TrainConfig& cfg) {
  TrainReport r;
  r.strategy = to_string(cfg.strategy);
  r.config = cfg;
  r.config_hash = config_hash(cfg);
  return r;
}

void finalize_report(const Model& model, const TabularDataset& ds,
                     const SplitIndices& split, TrainReport& report,
                     std::chrono::steady_clock::time_point started) {
  const auto inf = model.infer(ds);
  const auto scores =
      f1_scores(labels_at(ds.y, split.test), labels_at(inf.predictions, split.test),
                ds.class_count);
  report.test_minority_f1 = scores.minority;
  report.test_macro_f1 = scores.macro;
  report.test_metric = headline_metric(scores, ds.class_count);
  try {
    report.learned_graph_homophily = homophily(inf.graph, ds.y);
  } catch (const std::invalid_argument&) {
    report.learned_graph_homophily = 0.0;  // empty learned graph
  }
  report.wall_time_s = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
}

}  // namespace

Model::Model(const TabularDataset& ds, const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      class_count_(ds.class_count),
      fe_(ds.m_num(), ds.cat_cardinalities,
          {.width = cfg.d_fe, .layers = cfg.L_fe, .dropout = cfg.dropout_gsl},
          init_seed(cfg, 0)),
      gl_(cfg.d_fe, {.width = cfg.d_gl, .layers = cfg.L_gl, .dropout = cfg.dropout_gsl}),
      enc_(cfg.d_fe,
           {.hidden = cfg.d_gl, .projection = cfg.d_gl, .dropout = cfg.dropout_gsl},
           init_seed(cfg, 1)),
      head_(cfg.d_fe, ds.class_count,
            {.width = cfg.d_mt, .layers = cfg.L_mt, .dropout = cfg.dropout_nc},
            init_seed(cfg, 2)),
      anchor_(WeightedAdjacency::fixed(Matrix::Zero(ds.n(), ds.n()),
                                       AdjacencyTag::kAnchor)) {}

ParameterSet Model::gsl_parameters() const {
  ParameterSet ps;
  ps.extend(fe_.params(), "feat_extract.");
  ps.extend(gl_.params(), "graph_learn.");
  ps.extend(enc_.params(), "contrast.");
  return ps;
}

ParameterSet Model::nc_parameters() const {
  ParameterSet ps;
  ps.extend(head_.params(), "gnn_head.");
  return ps;
}

ParameterSet Model::all_parameters() const {
  ParameterSet ps = gsl_parameters();
  ps.extend(nc_parameters());
  return ps;
}

Model::Inference Model::infer(const TabularDataset& ds) const {
  Var h = fe_(ds);
  WeightedAdjacency learner = knn_sparsify(gl_(h), cfg_.k);
  Matrix p = head_.predict(h, learner).value();
  auto pred = argmax_rows(p);
  return {h.value(), learner.weights(), std::move(p), std::move(pred)};
}

void initialize_anchor(Model& model, const TabularDataset& ds, const SplitIndices& split,
                       TrainReport& report) {
  const auto& cfg = model.config();
  AnchorTrainConfig acfg{.hidden = cfg.anchor_hidden,
                         .lr = cfg.anchor_lr,
                         .weight_decay = 0.0,
                         .max_epochs = cfg.anchor_max_epochs,
                         .patience = cfg.patience};
  const auto cls =
      train_anchor_classifier(ds, split, acfg, derive_seed(cfg.seed, SeedStream::kAnchor));
  model.set_anchor(build_anchor_adjacency(cls, ds));
  const Matrix p = cls.predict_proba(ds);
  report.anchor_valid_metric = headline_on(ds.y, argmax_rows(p), split.valid, ds.class_count);
}

StepLosses joint_forward(const Model& model, const TabularDataset& ds,
                         const SplitIndices& split, long epoch, bool with_nc,
                         bool with_gcl) {
  if (!with_nc && !with_gcl) {
    throw std::invalid_argument("joint_forward: no loss term selected");
  }
  const auto& cfg = model.config();
  Rng drop = dropout_rng(cfg, epoch);
  Var h = model.extractor()(ds, &drop);
  WeightedAdjacency learner = knn_sparsify(model.graph_learner()(h, &drop), cfg.k);

  StepLosses out;
  out.learner = learner;
  if (with_gcl) {
    const auto views =
        make_views(model.anchor(), learner, h,
                   {.rho_anchor = cfg.rho_anchor,
                    .rho_learner = cfg.rho_learner,
                    .rho_edge = cfg.rho_edge},
                   AugmentSeeds::for_epoch(cfg.seed, epoch));
    Var z_anchor = model.encoder()(views.a_anchor, views.x_anchor, &drop);
    Var z_learner = model.encoder()(views.a_learner, views.x_learner, &drop);
    out.l_gcl = nt_xent(z_anchor, z_learner, cfg.t);
  }
  if (with_nc) {
    out.l_nc = nll_loss(model.head().log_probabilities(h, learner, &drop), ds.y, split.train);
  }
  if (with_nc && with_gcl) {
    out.total = out.l_nc - out.l_gcl;
  } else if (with_nc) {
    out.total = out.l_nc;
  } else {
    out.total = ag::scale(out.l_gcl, -1.0);
  }
  return out;
}

double evaluate_metric(const Model& model, const TabularDataset& ds,
                       const std::vector<Eigen::Index>& rows) {
  const auto inf = model.infer(ds);
  return headline_on(ds.y, inf.predictions, rows, model.class_count());
}

TrainResult train_end_to_end(const TabularDataset& ds, const SplitIndices& split,
                             const TrainConfig& cfg, const TrainHooks& hooks) {
  const auto started = std::chrono::steady_clock::now();
  TrainConfig c = cfg;
  c.strategy = Strategy::kEndToEnd;
  Model model(ds, c);
  TrainReport report = start_report(c);
  initialize_anchor(model, ds, split, report);
  report.phases = {"joint"};

  ParameterSet params = model.all_parameters();
  Adam opt;
  opt.add_group(model.gsl_parameters(), {.lr = c.lr_gsl, .weight_decay = c.weight_decay_gsl});
  opt.add_group(model.nc_parameters(), {.lr = c.lr_nc, .weight_decay = c.weight_decay_nc});

  BestTracker best(params, model);
  for (int epoch = 0; epoch < c.max_epochs; ++epoch) {
    params.zero_grad();
    StepLosses step = joint_forward(model, ds, split, epoch, true, true);
    EpochRecord rec{"joint", epoch, step.total.scalar(), step.l_nc.scalar(),
                    step.l_gcl.scalar(), std::nullopt};
    check_finite(rec.loss, "loss", report);
    ag::backward(step.total);
    opt.step();
    model.set_anchor(bootstrap(model.anchor(), step.learner, c.tau));
    rec.valid_metric = evaluate_metric(model, ds, split.valid);
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(model, rec);
    if (best.observe(epoch, *rec.valid_metric, c.patience)) break;
  }
  best.restore(params, model);
  params.zero_grad();
  report.best_epoch = best.best_epoch();
  report.best_valid_metric = best.best_metric();
  finalize_report(model, ds, split, report, started);
  return {std::move(model), std::move(report)};
}

void run_contrastive_phase(Model& model, const TabularDataset& ds,
                           const SplitIndices& split, TrainReport& report,
                           const TrainHooks& hooks) {
  const auto& c = model.config();
  report.phases.push_back("contrastive");
  ParameterSet params = model.gsl_parameters();
  Adam opt;
  opt.add_group(params, {.lr = c.lr_gsl, .weight_decay = c.weight_decay_gsl});
  const int first = next_epoch(report);
  for (int e = 0; e < c.pretrain_epochs; ++e) {
    const int epoch = first + e;
    params.zero_grad();
    StepLosses step = joint_forward(model, ds, split, epoch, false, true);
    EpochRecord rec{"contrastive", epoch, step.total.scalar(), std::nullopt,
                    step.l_gcl.scalar(), std::nullopt};
    check_finite(rec.loss, "contrastive loss", report);
    ag::backward(step.total);
    opt.step();
    model.set_anchor(bootstrap(model.anchor(), step.learner, c.tau));
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(model, rec);
  }
  params.zero_grad();
}

void run_classifier_phase(Model& model, const TabularDataset& ds,
                          const SplitIndices& split, Trainable which,
                          TrainReport& report, const TrainHooks& hooks) {
  const auto& c = model.config();
  report.phases.push_back(which == Trainable::kHeadOnly ? "classifier" : "finetune");
  ParameterSet params =
      which == Trainable::kHeadOnly ? model.nc_parameters() : model.all_parameters();
  Adam opt;
  if (which == Trainable::kAll) {
    opt.add_group(model.gsl_parameters(), {.lr = c.lr_gsl, .weight_decay = c.weight_decay_gsl});
  }
  opt.add_group(model.nc_parameters(), {.lr = c.lr_nc, .weight_decay = c.weight_decay_nc});

  // Frozen inputs for the head-only phase.
  Var fixed_h;
  WeightedAdjacency fixed_graph;
  if (which == Trainable::kHeadOnly) {
    const auto inf = model.infer(ds);
    fixed_h = ag::constant(inf.embeddings);
    fixed_graph = WeightedAdjacency::fixed(inf.graph, AdjacencyTag::kKnn);
  }

  ParameterSet tracked = model.all_parameters();
  BestTracker best(tracked, model);
  const int first = next_epoch(report);
  for (int e = 0; e < c.max_epochs; ++e) {
    const int epoch = first + e;
    params.zero_grad();
    Var l_nc;
    if (which == Trainable::kHeadOnly) {
      Rng drop = dropout_rng(c, epoch);
      l_nc = nll_loss(model.head().log_probabilities(fixed_h, fixed_graph, &drop), ds.y,
                      split.train);
    } else {
      l_nc = joint_forward(model, ds, split, epoch, true, false).total;
    }
    EpochRecord rec{report.phases.back(), epoch, l_nc.scalar(), l_nc.scalar(),
                    std::nullopt, std::nullopt};
    check_finite(rec.loss, "classification loss", report);
    ag::backward(l_nc);
    opt.step();
    rec.valid_metric = evaluate_metric(model, ds, split.valid);
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(model, rec);
    if (best.observe(epoch, *rec.valid_metric, c.patience)) break;
  }
  best.restore(tracked, model);
  tracked.zero_grad();
  report.best_epoch = best.best_epoch();
  report.best_valid_metric = best.best_metric();
}

TrainResult train_two_stage(const TabularDataset& ds, const SplitIndices& split,
                            const TrainConfig& cfg, const TrainHooks& hooks) {
  const auto started = std::chrono::steady_clock::now();
  TrainConfig c = cfg;
  c.strategy = Strategy::kTwoStage;
  Model model(ds, c);
  TrainReport report = start_report(c);
  initialize_anchor(model, ds, split, report);
  run_contrastive_phase(model, ds, split, report, hooks);
  run_classifier_phase(model, ds, split, Trainable::kHeadOnly, report, hooks);
  finalize_report(model, ds, split, report, started);
  return {std::move(model), std::move(report)};
}

TrainResult train_pretrain_finetune(const TabularDataset& ds, const SplitIndices& split,
                                    const TrainConfig& cfg, const TrainHooks& hooks) {
  const auto started = std::chrono::steady_clock::now();
  TrainConfig c = cfg;
  c.strategy = Strategy::kPretrainFinetune;
  Model model(ds, c);
  TrainReport report = start_report(c);
  initialize_anchor(model, ds, split, report);
  run_contrastive_phase(model, ds, split, report, hooks);
  run_classifier_phase(model, ds, split, Trainable::kAll, report, hooks);
  finalize_report(model, ds, split, report, started);
  return {std::move(model), std::move(report)};
}

TrainResult train(const TabularDataset& ds, const SplitIndices& split,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  switch (cfg.strategy) {
    case Strategy::kEndToEnd: return train_end_to_end(ds, split, cfg, hooks);
    case Strategy::kTwoStage: return train_two_stage(ds, split, cfg, hooks);
    case Strategy::kPretrainFinetune: return train_pretrain_finetune(ds, split, cfg, hooks);
  }
  throw ConfigError("strategy: unsupported");
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json TrainReport::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"phase", e.phase},
                  {"epoch", e.epoch},
                  {"loss", e.loss},
                  {"l_nc", optional_json(e.l_nc)},
                  {"l_gcl", optional_json(e.l_gcl)},
                  {"valid_metric", optional_json(e.valid_metric)}});
  }
  return {{"format", "tabgsl-report"},
          {"version", 1},
          {"strategy", strategy},
          {"phases", phases},
          {"epochs", ep},
          {"best_epoch", best_epoch},
          {"best_valid_metric", best_valid_metric},
          {"test_metric", test_metric},
          {"test_minority_f1", test_minority_f1},
          {"test_macro_f1", test_macro_f1},
          {"anchor_valid_metric", anchor_valid_metric},
          {"learned_graph_homophily", learned_graph_homophily},
          {"wall_time_s", wall_time_s},
          {"config_hash", config_hash},
          {"config", tabgsl::to_json(config)},
          {"diverged", diverged},
          {"graph_snapshot", graph_snapshot}};
}

TrainReport TrainReport::from_json(const nlohmann::json& j) {
  TrainReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.phases = j.at("phases").get<std::vector<std::string>>();
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("phase").get<std::string>(), e.at("epoch").get<int>(),
                        e.at("loss").is_null() ? std::nan("") : e.at("loss").get<double>(),
                        optional_from(e, "l_nc"), optional_from(e, "l_gcl"),
                        optional_from(e, "valid_metric")});
  }
  r.best_epoch = j.at("best_epoch").get<int>();
  r.best_valid_metric = j.at("best_valid_metric").get<double>();
  r.test_metric = j.at("test_metric").get<double>();
  r.test_minority_f1 = j.at("test_minority_f1").get<double>();
  r.test_macro_f1 = j.at("test_macro_f1").get<double>();
  r.anchor_valid_metric = j.at("anchor_valid_metric").get<double>();
  r.learned_graph_homophily = j.at("learned_graph_homophily").get<double>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.config = config_from_json(j.at("config"));
  r.diverged = j.at("diverged").get<bool>();
  r.graph_snapshot = j.at("graph_snapshot").get<std::string>();
  return r;
}

namespace {

template <typename T, std::size_t N>
T pick_one(Rng& rng, const std::array<T, N>& values) {
  return values[rng.below(N)];
}

double log_uniform(Rng& rng, double lo, double hi) {
  const double v = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  return std::clamp(v, lo, std::nextafter(hi, lo));
}

}  // namespace

TrainConfig sample_config(const TrainConfig& base, Rng& rng) {
  TrainConfig c = base;
  c.d_fe = pick_one(rng, std::array{16, 32, 64, 128, 256, 512});
  c.L_fe = pick_one(rng, std::array{1, 2, 3, 4});
  c.k = pick_one(rng, std::array{5, 10, 15, 20, 25, 30, 35});
  c.d_gl = pick_one(rng, std::array{64, 128, 256});
  c.L_gl = pick_one(rng, std::array{2, 3});
  c.tau = pick_one(rng, std::array{0.99, 0.999, 0.9999, 0.99999, 1.0});
  c.rho_anchor = rng.uniform(0.6, 0.75);
  c.rho_learner = rng.uniform(0.0, 0.7);
  c.rho_edge = rng.uniform(0.25, 0.55);
  c.lr_gsl = log_uniform(rng, 5e-4, 5e-3);
  c.weight_decay_gsl = rng.uniform(0.0, 1e-5);
  c.dropout_gsl = rng.uniform(0.4, 0.8);
  c.t = pick_one(rng, std::array{0.2, 0.3, 0.4});
  c.L_mt = pick_one(rng, std::array{2, 3});
  c.d_mt = pick_one(rng, std::array{16, 32, 64, 128});
  c.lr_nc = log_uniform(rng, 5e-4, 5e-3);
  c.weight_decay_nc = rng.uniform(0.0, 1e-5);
  c.dropout_nc = rng.uniform(0.4, 0.8);
  return c;
}

SearchResult random_search(const TabularDataset& ds, const SplitIndices& split,
                           const TrainConfig& base, int budget, std::uint64_t seed,
                           int workers) {
  if (budget < 1) throw ConfigError("budget: must be at least 1");
  const std::uint64_t search_seed = derive_seed(seed, SeedStream::kSearch);
  std::vector<LeaderboardEntry> entries(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) {
    Rng rng(derive_seed(search_seed, static_cast<std::uint64_t>(i)));
    entries[static_cast<std::size_t>(i)].trial = i;
    entries[static_cast<std::size_t>(i)].config = sample_config(base, rng);
  }
  parallel_for(budget, workers, [&](int i) {
    auto& e = entries[static_cast<std::size_t>(i)];
    try {
      const auto result = train(ds, split, e.config);
      e.valid_metric = result.report.best_valid_metric;
      e.test_metric = result.report.test_metric;
    } catch (const DivergenceError&) {
      e.failed = true;
      e.valid_metric = -1.0;
    }
  });
  std::stable_sort(entries.begin(), entries.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                     if (a.failed != b.failed) return !a.failed;
                     if (a.valid_metric != b.valid_metric) {
                       return a.valid_metric > b.valid_metric;
                     }
                     return a.trial < b.trial;
                   });
  return {entries.front().config, std::move(entries)};
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  const int n = std::min(workers, count);
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

int workers_from_env() {
  const char* v = std::getenv("TABGSL_NUM_WORKERS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

}  // namespace tabgsl
