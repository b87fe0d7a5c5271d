#include "tabgsl/cli.hpp"

#include "tabgsl/checkpoint.hpp"
#include "tabgsl/error.hpp"
#include "tabgsl/evalviz.hpp"
#include "tabgsl/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace tabgsl {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kReportFile = "report.json";
constexpr const char* kCheckpointFile = "model.ckpt.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kGraphPrefix = "graph";

struct Options {
  std::string data;
  std::string schema;
  std::string config;
  std::string out;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::string param;
  std::string values;
  int trials = 5;
  int budget = 10;
  std::string checkpoint;
  std::string what = "graph";
  std::string order = "by_class";
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

TrainConfig resolve_config(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
  if (!o.strategy.empty()) cfg.strategy = parse_strategy(o.strategy);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

struct PreparedData {
  TabularDataset ds;
  SplitIndices split;
};

/// Loads the table; the split comes from `split` when given, otherwise from
/// the root seed's split stream.
PreparedData prepare_data(const Options& o, std::uint64_t root_seed,
                          const SplitIndices* split = nullptr) {
  if (!fs::exists(o.data)) throw DataError("data file not found: " + o.data);
  if (!fs::exists(o.schema)) throw DataError("schema file not found: " + o.schema);
  TabularDataset raw = load_dataset(o.data, o.schema);
  SplitIndices s = split != nullptr
                       ? *split
                       : stratified_split(raw, kDefaultRatios,
                                          derive_seed(root_seed, SeedStream::kSplit));
  return {preprocess(raw, s), std::move(s)};
}

json seeds_json(std::uint64_t root) {
  return {{"root", root},
          {"rule", "derive_seed(root, stream) = mix64(mix64(root) ^ "
                   "mix64(stream + 0x632be59bd9b4e019)), mix64 = SplitMix64 finalizer"},
          {"split", derive_seed(root, SeedStream::kSplit)},
          {"init", derive_seed(root, SeedStream::kInit)},
          {"augment", derive_seed(root, SeedStream::kAugment)},
          {"anchor", derive_seed(root, SeedStream::kAnchor)},
          {"search", derive_seed(root, SeedStream::kSearch)},
          {"dropout", derive_seed(root, SeedStream::kDropout)}};
}

std::string join_command(const std::vector<std::string>& args) {
  std::string s = "tabgsl";
  for (const auto& a : args) s += " " + a;
  return s;
}

int cmd_train(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const TrainConfig cfg = resolve_config(o);
  if (!fs::exists(o.data)) throw DataError("data file not found: " + o.data);
  if (!fs::exists(o.schema)) throw DataError("schema file not found: " + o.schema);
  const fs::path dir = prepare_out(o.out);
  write_json(dir / kManifestFile,
             {{"tool", "tabgsl"},
              {"version", TABGSL_VERSION},
              {"command", join_command(args)},
              {"config", to_json(cfg)},
              {"config_hash", config_hash(cfg)},
              {"dataset", {{"path", o.data}, {"sha256", file_sha256(o.data)}}},
              {"schema", {{"path", o.schema}, {"sha256", file_sha256(o.schema)}}},
              {"seeds", seeds_json(cfg.seed)},
              {"artifacts",
               {{"report", kReportFile},
                {"checkpoint", kCheckpointFile},
                {"graph_edges", std::string(kGraphPrefix) + ".edges.tsv"},
                {"graph_matrix", std::string(kGraphPrefix) + ".matrix.csv"},
                {"graph_order", std::string(kGraphPrefix) + ".order.tsv"}}}});

  const PreparedData data = prepare_data(o, cfg.seed);
  try {
    TrainResult result = train(data.ds, data.split, cfg);
    const auto inf = result.model.infer(data.ds);
    export_graph(inf.graph, data.ds.y, NodeOrder::kByClass, dir / kGraphPrefix,
                 inf.predictions);
    result.report.graph_snapshot = std::string(kGraphPrefix) + ".edges.tsv";
    save_checkpoint(result.model, data.ds, data.split, dir / kCheckpointFile);
    write_json(dir / kReportFile, result.report.to_json());
    out << "strategy " << result.report.strategy << ", best epoch "
        << result.report.best_epoch << ", test metric " << fmt17(result.report.test_metric)
        << '\n';
  } catch (const TrainingDiverged& e) {
    write_json(dir / kReportFile, e.report.to_json());
    throw;
  }
  return kExitOk;
}

json read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
  std::ifstream in(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// The split is needed before the model so preprocessing matches training.
SplitIndices checkpoint_split(const json& j) {
  try {
    const json& s = j.at("split");
    return {s.at("train").get<std::vector<Eigen::Index>>(),
            s.at("valid").get<std::vector<Eigen::Index>>(),
            s.at("test").get<std::vector<Eigen::Index>>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

int cmd_eval(const Options& o, std::ostream& out) {
  const json j = read_checkpoint(o.checkpoint);
  const SplitIndices split = checkpoint_split(j);
  const PreparedData data = prepare_data(o, 0, &split);
  const LoadedCheckpoint ck = checkpoint_from_json(j, data.ds);
  const auto inf = ck.model.infer(data.ds);
  auto scores_on = [&](const std::vector<Eigen::Index>& rows) {
    std::vector<int> t;
    std::vector<int> p;
    for (auto i : rows) {
      t.push_back(data.ds.y[static_cast<std::size_t>(i)]);
      p.push_back(inf.predictions[static_cast<std::size_t>(i)]);
    }
    return f1_scores(t, p, data.ds.class_count);
  };
  const auto test = scores_on(ck.split.test);
  const auto valid = scores_on(ck.split.valid);
  const json result = {{"test_metric", headline_metric(test, data.ds.class_count)},
                       {"test_minority_f1", test.minority},
                       {"test_macro_f1", test.macro},
                       {"valid_metric", headline_metric(valid, data.ds.class_count)}};
  if (!o.out.empty()) write_json(prepare_out(o.out) / "eval.json", result);
  out << result.dump(2) << '\n';
  return kExitOk;
}

std::vector<double> parse_values(const std::string& s, std::ostream& err) {
  std::vector<double> values;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError("values: '" + tok + "' is not a number");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("values: empty list");
  std::set<double> unique(values.begin(), values.end());
  if (unique.size() != values.size()) {
    err << "warning: duplicate sweep values removed\n";
  }
  return {unique.begin(), unique.end()};
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = resolve_config(o);
  const SweepParam param = parse_sweep_param(o.param);
  const auto values = parse_values(o.values, err);
  if (o.trials < 1) throw ConfigError("trials: must be at least 1");
  // Validate every point before any training starts.
  for (double v : values) {
    TrainConfig c = cfg;
    if (param == SweepParam::kTau) {
      c.tau = v;
    } else {
      if (v != static_cast<double>(static_cast<int>(v))) {
        throw ConfigError("k: must be an integer, got " + fmt17(v));
      }
      c.k = static_cast<int>(v);
    }
    c.validate();
  }
  const PreparedData data = prepare_data(o, cfg.seed);
  const fs::path dir = prepare_out(o.out);
  const auto rows =
      sweep(data.ds, data.split, cfg, param, values, o.trials, workers_from_env());
  const fs::path csv = dir / ("sweep_" + to_string(param) + ".csv");
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv.string());
  f << "value,mean,std,trials,failed\n";
  for (const auto& r : rows) {
    f << fmt17(r.value) << ',' << fmt17(r.result.mean) << ',' << fmt17(r.result.std) << ','
      << r.result.scores.size() << ',' << r.result.failed_trials << '\n';
    out << to_string(param) << '=' << fmt17(r.value) << ' ' << r.result.formatted() << '\n';
  }
  return kExitOk;
}

int cmd_search(const Options& o, std::ostream& out) {
  const TrainConfig base = resolve_config(o);
  if (o.budget < 1) throw ConfigError("budget: must be at least 1");
  const PreparedData data = prepare_data(o, base.seed);
  const fs::path dir = prepare_out(o.out);
  const auto result =
      random_search(data.ds, data.split, base, o.budget, base.seed, workers_from_env());
  std::ofstream f(dir / "leaderboard.csv");
  if (!f) throw std::runtime_error("cannot write leaderboard");
  f << "rank,trial,valid_metric,test_metric,failed,config_hash\n";
  for (std::size_t r = 0; r < result.leaderboard.size(); ++r) {
    const auto& e = result.leaderboard[r];
    f << r + 1 << ',' << e.trial << ',' << fmt17(e.valid_metric) << ','
      << fmt17(e.test_metric) << ',' << (e.failed ? 1 : 0) << ',' << config_hash(e.config)
      << '\n';
  }
  json configs = json::array();
  for (const auto& e : result.leaderboard) {
    configs.push_back({{"trial", e.trial}, {"config", to_json(e.config)}});
  }
  write_json(dir / "leaderboard_configs.json", configs);
  write_json(dir / "best_config.json", to_json(result.best));
  out << "best trial " << result.leaderboard.front().trial << ", valid metric "
      << fmt17(result.leaderboard.front().valid_metric) << '\n';
  return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out) {
  const json j = read_checkpoint(o.checkpoint);
  const SplitIndices split = checkpoint_split(j);
  const PreparedData data = prepare_data(o, 0, &split);
  const LoadedCheckpoint ck = checkpoint_from_json(j, data.ds);
  const auto inf = ck.model.infer(data.ds);
  const fs::path dir = prepare_out(o.out);
  if (o.what == "graph") {
    const auto paths = export_graph(inf.graph, data.ds.y, parse_node_order(o.order),
                                    dir / kGraphPrefix, inf.predictions);
    out << paths.edges.string() << '\n'
        << paths.matrix.string() << '\n'
        << paths.order.string() << '\n';
  } else {
    const fs::path path = dir / "embeddings.tsv";
    export_embeddings(inf.embeddings, data.ds.y, path);
    out << path.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph structure learning for tabular classification", "tabgsl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TABGSL_VERSION);
  Options o;

  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "CSV file with a header row")->required();
    sub->add_option("--schema", o.schema, "JSON schema: [{name, kind}, ...]")->required();
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Root seed (overrides the config)");
  };

  auto* train = app.add_subcommand("train", "Train one model");
  add_data(train);
  train->add_option("--config", o.config, "JSON training config")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--strategy", o.strategy, "end2end | two-stage | pt-ft");
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "Recompute metrics from a checkpoint");
  add_data(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  eval->add_option("--out", o.out, "Optional output directory for eval.json");

  auto* sw = app.add_subcommand("sweep", "Sensitivity sweep over tau or k");
  add_data(sw);
  sw->add_option("--config", o.config, "JSON base config");
  sw->add_option("--out", o.out, "Output directory")->required();
  sw->add_option("--param", o.param, "tau | k")->required();
  sw->add_option("--values", o.values, "Comma-separated values")->required();
  sw->add_option("--trials", o.trials, "Seeds per value")->capture_default_str();
  sw->add_option("--strategy", o.strategy, "end2end | two-stage | pt-ft");
  add_seed(sw);

  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  add_data(search);
  search->add_option("--config", o.config, "JSON base config (schedule, strategy)");
  search->add_option("--out", o.out, "Output directory")->required();
  search->add_option("--budget", o.budget, "Number of sampled configs")->capture_default_str();
  search->add_option("--strategy", o.strategy, "end2end | two-stage | pt-ft");
  add_seed(search);

  auto* exp = app.add_subcommand("export", "Export the learned graph or embeddings");
  add_data(exp);
  exp->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  exp->add_option("--out", o.out, "Output directory")->required();
  exp->add_option("--what", o.what, "graph | embeddings")
      ->check(CLI::IsMember({"graph", "embeddings"}))
      ->capture_default_str();
  exp->add_option("--order", o.order, "by_class | natural")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << TABGSL_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(o, args, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (sw->parsed()) return cmd_sweep(o, out, err);
    if (search->parsed()) return cmd_search(o, out);
    if (exp->parsed()) return cmd_export(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace tabgsl
