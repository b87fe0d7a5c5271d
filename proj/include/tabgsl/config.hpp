// Training hyperparameters and their JSON form.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace tabgsl {

enum class Strategy { kEndToEnd, kTwoStage, kPretrainFinetune };

std::string to_string(Strategy s);
/// Accepts "end2end", "two_stage"/"two-stage", "pt_ft"/"pt-ft".
Strategy parse_strategy(const std::string& s);

struct TrainConfig {
  // Feature extractor.
  int d_fe = 16;
  int L_fe = 1;
  // Graph learner and contrastive views.
  int k = 10;
  int d_gl = 64;
  int L_gl = 2;
  double tau = 0.9999;
  double rho_anchor = 0.6;
  double rho_learner = 0.3;
  double rho_edge = 0.3;
  double t = 0.2;
  // Optimization; "gsl" covers the extractor, graph learner, encoder and
  // projector, "nc" the GCN classifier.
  double lr_gsl = 1e-3;
  double lr_nc = 1e-3;
  double weight_decay_gsl = 0.0;
  double weight_decay_nc = 0.0;
  double dropout_gsl = 0.4;
  double dropout_nc = 0.4;
  // Node classifier.
  int L_mt = 2;
  int d_mt = 32;
  // Schedule.
  int max_epochs = 500;
  int patience = 30;
  int pretrain_epochs = 100;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kEndToEnd;
  // Anchor classifier.
  int anchor_hidden = 64;
  double anchor_lr = 1e-2;
  int anchor_max_epochs = 200;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// True when every tuned field lies inside the published tuning ranges.
bool in_search_space(const TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
/// Starts from defaults; unknown keys and ill-typed values raise ConfigError.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);

/// SHA-256 over the canonical JSON dump.
std::string config_hash(const TrainConfig& cfg);

}  // namespace tabgsl
