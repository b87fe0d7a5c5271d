#include "tabgsl/checkpoint.hpp"

#include "tabgsl/error.hpp"

#include <fstream>

namespace tabgsl {

namespace {

using nlohmann::json;

json tensor_json(const Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json group_json(const ParameterSet& ps) {
  json g = json::object();
  for (const auto& p : ps.items()) g[p.name] = tensor_json(p.var.value());
  return g;
}

void restore_group(ParameterSet& ps, const json& g, const std::string& group) {
  if (!g.is_object() || g.size() != ps.size()) {
    throw DataError("checkpoint group '" + group + "' does not match the model");
  }
  for (auto& p : ps.items()) {
    if (!g.contains(p.name)) {
      throw DataError("checkpoint group '" + group + "' lacks " + p.name);
    }
    const json& t = g.at(p.name);
    Matrix& v = p.var.mutable_value();
    if (t.at("rows").get<Eigen::Index>() != v.rows() ||
        t.at("cols").get<Eigen::Index>() != v.cols()) {
      throw DataError("checkpoint shape mismatch for " + p.name);
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != v.size()) {
      throw DataError("checkpoint data size mismatch for " + p.name);
    }
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        v(r, c) = data[static_cast<std::size_t>(r * v.cols() + c)];
      }
    }
  }
}

json dims_json(const TabularDataset& ds) {
  return {{"n", ds.n()},
          {"m_num", ds.m_num()},
          {"cat_cardinalities", ds.cat_cardinalities},
          {"class_count", ds.class_count}};
}

}  // namespace

nlohmann::json checkpoint_json(const Model& model, const TabularDataset& ds,
                               const SplitIndices& split) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", to_json(model.config())},
          {"dims", dims_json(ds)},
          {"split", {{"train", split.train}, {"valid", split.valid}, {"test", split.test}}},
          {"groups",
           {{"feat_extract", group_json(model.extractor().params())},
            {"graph_learn", group_json(model.graph_learner().params())},
            {"contrast", group_json(model.encoder().params())},
            {"gnn_head", group_json(model.head().params())}}}};
}

void save_checkpoint(const Model& model, const TabularDataset& ds, const SplitIndices& split,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint_json(model, ds, split).dump() << '\n';
}

LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j, const TabularDataset& ds) {
  try {
    if (j.at("format") != kCheckpointFormat) throw DataError("not a tabgsl checkpoint");
    if (j.at("version") != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    }
    if (j.at("dims") != dims_json(ds)) {
      throw DataError("checkpoint was trained on a dataset with different dimensions");
    }
    LoadedCheckpoint out{Model(ds, config_from_json(j.at("config"))), {}};
    const json& s = j.at("split");
    out.split.train = s.at("train").get<std::vector<Eigen::Index>>();
    out.split.valid = s.at("valid").get<std::vector<Eigen::Index>>();
    out.split.test = s.at("test").get<std::vector<Eigen::Index>>();
    out.split.validate(ds.n());
    const json& g = j.at("groups");
    restore_group(out.model.extractor().params(), g.at("feat_extract"), "feat_extract");
    restore_group(out.model.graph_learner().params(), g.at("graph_learn"), "graph_learn");
    restore_group(out.model.encoder().params(), g.at("contrast"), "contrast");
    restore_group(out.model.head().params(), g.at("gnn_head"), "gnn_head");
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const TabularDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j, ds);
}

}  // namespace tabgsl
