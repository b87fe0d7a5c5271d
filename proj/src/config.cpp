#include "tabgsl/config.hpp"

#include "tabgsl/digest.hpp"
#include "tabgsl/error.hpp"
#include "tabgsl/feat_extract.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace tabgsl {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kEndToEnd: return "end2end";
    case Strategy::kTwoStage: return "two_stage";
    case Strategy::kPretrainFinetune: return "pt_ft";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "end2end") return Strategy::kEndToEnd;
  if (s == "two_stage" || s == "two-stage") return Strategy::kTwoStage;
  if (s == "pt_ft" || s == "pt-ft") return Strategy::kPretrainFinetune;
  throw ConfigError("strategy: unknown value '" + s + "'");
}

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ConfigError(std::string(field) + ": " + why);
}

bool unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

template <typename T, std::size_t N>
bool one_of(T v, const std::array<T, N>& set) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

}  // namespace

void TrainConfig::validate() const {
  require(d_fe >= 1 && d_fe % attention_heads(d_fe) == 0, "d_fe",
          "must be positive and divisible by the head count");
  require(L_fe >= 1 && L_fe <= 4, "L_fe", "must lie in [1, 4]");
  require(k >= 1, "k", "must be at least 1");
  require(d_gl >= 1, "d_gl", "must be positive");
  require(L_gl == 2 || L_gl == 3, "L_gl", "must be 2 or 3");
  require(unit_interval(tau), "tau", "must lie in [0, 1]");
  require(unit_interval(rho_anchor), "rho_anchor", "must lie in [0, 1]");
  require(unit_interval(rho_learner), "rho_learner", "must lie in [0, 1]");
  require(unit_interval(rho_edge), "rho_edge", "must lie in [0, 1]");
  require(t > 0.0 && std::isfinite(t), "t", "must be positive");
  require(lr_gsl >= 0.0 && std::isfinite(lr_gsl), "lr_gsl", "must be non-negative");
  require(lr_nc >= 0.0 && std::isfinite(lr_nc), "lr_nc", "must be non-negative");
  require(weight_decay_gsl >= 0.0, "weight_decay_gsl", "must be non-negative");
  require(weight_decay_nc >= 0.0, "weight_decay_nc", "must be non-negative");
  require(dropout_gsl >= 0.0 && dropout_gsl < 1.0, "dropout_gsl", "must lie in [0, 1)");
  require(dropout_nc >= 0.0 && dropout_nc < 1.0, "dropout_nc", "must lie in [0, 1)");
  require(L_mt == 2 || L_mt == 3, "L_mt", "must be 2 or 3");
  require(d_mt >= 1, "d_mt", "must be positive");
  require(max_epochs >= 1, "max_epochs", "must be at least 1");
  require(patience >= 1, "patience", "must be at least 1");
  require(pretrain_epochs >= 0, "pretrain_epochs", "must be non-negative");
  require(strategy == Strategy::kEndToEnd || pretrain_epochs >= 1, "pretrain_epochs",
          "must be at least 1 for two-phase strategies");
  require(anchor_hidden >= 1, "anchor_hidden", "must be positive");
  require(anchor_lr > 0.0, "anchor_lr", "must be positive");
  require(anchor_max_epochs >= 1, "anchor_max_epochs", "must be at least 1");
}

bool in_search_space(const TrainConfig& c) {
  return one_of(c.d_fe, std::array{16, 32, 64, 128, 256, 512}) &&
         one_of(c.L_fe, std::array{1, 2, 3, 4}) &&
         one_of(c.k, std::array{5, 10, 15, 20, 25, 30, 35}) &&
         one_of(c.d_gl, std::array{64, 128, 256}) && one_of(c.L_gl, std::array{2, 3}) &&
         one_of(c.tau, std::array{0.99, 0.999, 0.9999, 0.99999, 1.0}) &&
         c.rho_anchor >= 0.6 && c.rho_anchor < 0.75 && c.rho_learner >= 0.0 &&
         c.rho_learner < 0.7 && c.rho_edge >= 0.25 && c.rho_edge < 0.55 &&
         c.lr_gsl >= 5e-4 && c.lr_gsl < 5e-3 && c.weight_decay_gsl >= 0.0 &&
         c.weight_decay_gsl < 1e-5 && c.dropout_gsl >= 0.4 && c.dropout_gsl < 0.8 &&
         one_of(c.t, std::array{0.2, 0.3, 0.4}) && one_of(c.L_mt, std::array{2, 3}) &&
         one_of(c.d_mt, std::array{16, 32, 64, 128}) && c.lr_nc >= 5e-4 &&
         c.lr_nc < 5e-3 && c.weight_decay_nc >= 0.0 && c.weight_decay_nc < 1e-5 &&
         c.dropout_nc >= 0.4 && c.dropout_nc < 0.8;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"d_fe", c.d_fe},
      {"L_fe", c.L_fe},
      {"k", c.k},
      {"d_gl", c.d_gl},
      {"L_gl", c.L_gl},
      {"tau", c.tau},
      {"rho_anchor", c.rho_anchor},
      {"rho_learner", c.rho_learner},
      {"rho_edge", c.rho_edge},
      {"t", c.t},
      {"lr_gsl", c.lr_gsl},
      {"lr_nc", c.lr_nc},
      {"weight_decay_gsl", c.weight_decay_gsl},
      {"weight_decay_nc", c.weight_decay_nc},
      {"dropout_gsl", c.dropout_gsl},
      {"dropout_nc", c.dropout_nc},
      {"L_mt", c.L_mt},
      {"d_mt", c.d_mt},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"pretrain_epochs", c.pretrain_epochs},
      {"seed", c.seed},
      {"strategy", to_string(c.strategy)},
      {"anchor_hidden", c.anchor_hidden},
      {"anchor_lr", c.anchor_lr},
      {"anchor_max_epochs", c.anchor_max_epochs},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  const nlohmann::json known = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(key + ": unknown config key");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(field)>;
    const auto& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          field = v.get<T>();
        } else {
          const auto s = v.get<long long>();
          if (s < 0) throw ConfigError(std::string(key) + ": must be non-negative");
          field = static_cast<T>(s);
        }
      } else {
        field = v.get<T>();
      }
    } else {
      if (!v.is_number()) throw ConfigError(std::string(key) + ": expected a number");
      field = v.get<T>();
    }
  };
  get("d_fe", c.d_fe);
  get("L_fe", c.L_fe);
  get("k", c.k);
  get("d_gl", c.d_gl);
  get("L_gl", c.L_gl);
  get("tau", c.tau);
  get("rho_anchor", c.rho_anchor);
  get("rho_learner", c.rho_learner);
  get("rho_edge", c.rho_edge);
  get("t", c.t);
  get("lr_gsl", c.lr_gsl);
  get("lr_nc", c.lr_nc);
  get("weight_decay_gsl", c.weight_decay_gsl);
  get("weight_decay_nc", c.weight_decay_nc);
  get("dropout_gsl", c.dropout_gsl);
  get("dropout_nc", c.dropout_nc);
  get("L_mt", c.L_mt);
  get("d_mt", c.d_mt);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("pretrain_epochs", c.pretrain_epochs);
  get("seed", c.seed);
  get("anchor_hidden", c.anchor_hidden);
  get("anchor_lr", c.anchor_lr);
  get("anchor_max_epochs", c.anchor_max_epochs);
  if (j.contains("strategy")) {
    if (!j.at("strategy").is_string()) throw ConfigError("strategy: expected a string");
    c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  }
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const TrainConfig& cfg) {
  return sha256_hex(to_json(cfg).dump());
}

}  // namespace tabgsl
