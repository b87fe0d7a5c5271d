#include "tabgsl/tabdata.hpp"

#include "tabgsl/digest.hpp"
#include "tabgsl/error.hpp"
#include "tabgsl/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace tabgsl {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits one CSV record. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_real(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::kNumeric;
  if (s == "categorical") return ColumnKind::kCategorical;
  if (s == "target") return ColumnKind::kTarget;
  throw DataError("unknown column kind '" + s + "'");
}

}  // namespace

Schema parse_schema(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw DataError("schema must be a JSON array");
  Schema schema;
  std::set<std::string> names;
  int targets = 0;
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("kind")) {
      throw DataError("schema entries need 'name' and 'kind'");
    }
    ColumnSchema col{entry.at("name").get<std::string>(),
                     parse_kind(entry.at("kind").get<std::string>())};
    if (col.name.empty()) throw DataError("schema column with empty name");
    if (!names.insert(col.name).second) {
      throw DataError("duplicate schema column '" + col.name + "'");
    }
    if (col.kind == ColumnKind::kTarget) ++targets;
    schema.push_back(std::move(col));
  }
  if (targets != 1) {
    throw DataError("schema must have exactly one target column, found " +
                    std::to_string(targets));
  }
  if (schema.size() < 2) throw DataError("schema has no feature columns");
  return schema;
}

Schema load_schema(const std::filesystem::path& path) {
  return parse_schema(read_file(path));
}

Eigen::MatrixXd TabularDataset::dense_features() const {
  Eigen::Index width = m_num();
  for (int c : cat_cardinalities) width += c;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n(), width);
  out.leftCols(m_num()) = x_num;
  Eigen::Index offset = m_num();
  for (Eigen::Index j = 0; j < m_cat(); ++j) {
    for (Eigen::Index i = 0; i < n(); ++i) out(i, offset + x_cat(i, j)) = 1.0;
    offset += cat_cardinalities[static_cast<std::size_t>(j)];
  }
  return out;
}

void TabularDataset::validate() const {
  if (n() < 1) throw DataError("dataset is empty");
  if (m_num() + m_cat() < 1) throw DataError("dataset has no features");
  if (x_num.rows() != n() || x_cat.rows() != n()) {
    throw DataError("feature row count does not match label count");
  }
  if (static_cast<Eigen::Index>(cat_cardinalities.size()) != m_cat()) {
    throw DataError("cardinality list does not match categorical width");
  }
  for (int v : y) {
    if (v < 0 || v >= class_count) throw DataError("label out of range");
  }
  for (Eigen::Index j = 0; j < m_cat(); ++j) {
    for (Eigen::Index i = 0; i < n(); ++i) {
      const int v = x_cat(i, j);
      if (v < 0 || v >= cat_cardinalities[static_cast<std::size_t>(j)]) {
        throw DataError("category index out of range");
      }
    }
  }
  if (!x_num.allFinite()) throw DataError("non-finite numeric value");
}

void SplitIndices::validate(Eigen::Index n) const {
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (const auto* part : {&train, &valid, &test}) {
    for (Eigen::Index i : *part) {
      if (i < 0 || i >= n) throw DataError("split index out of range");
      if (seen[static_cast<std::size_t>(i)]++) {
        throw DataError("split index " + std::to_string(i) + " repeated");
      }
    }
  }
  for (int s : seen) {
    if (s == 0) throw DataError("split does not cover every instance");
  }
}

TabularDataset parse_dataset(std::istream& csv, const Schema& schema) {
  std::string line;
  if (!std::getline(csv, line)) throw DataError("CSV is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  bool match = header.size() == schema.size();
  for (std::size_t i = 0; match && i < header.size(); ++i) {
    match = header[i] == schema[i].name;
  }
  if (!match) {
    std::set<std::string> have(header.begin(), header.end());
    std::string detail;
    for (const auto& col : schema) {
      if (!have.count(col.name)) detail += " missing '" + col.name + "'";
    }
    throw DataError("column mismatch between schema and CSV header" +
                    (detail.empty() ? std::string(" (order or count)") : detail));
  }

  std::vector<std::size_t> num_cols, cat_cols;
  std::size_t target_col = 0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    switch (schema[i].kind) {
      case ColumnKind::kNumeric: num_cols.push_back(i); break;
      case ColumnKind::kCategorical: cat_cols.push_back(i); break;
      case ColumnKind::kTarget: target_col = i; break;
    }
  }

  std::vector<std::vector<double>> num_rows;
  std::vector<std::vector<int>> cat_rows;
  std::vector<std::string> target_tokens;
  std::vector<std::map<std::string, int>> levels(cat_cols.size());
  std::vector<std::vector<std::string>> level_order(cat_cols.size());

  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != schema.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(schema.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      cells[c] = trim(cells[c]);
      if (cells[c].empty()) {
        throw DataError("line " + std::to_string(line_no) +
                        ": missing cell in column '" + schema[c].name + "'");
      }
    }
    std::vector<double> nums;
    nums.reserve(num_cols.size());
    for (std::size_t c : num_cols) {
      double v;
      if (!parse_real(cells[c], v)) {
        throw DataError("line " + std::to_string(line_no) +
                        ": non-numeric token '" + cells[c] + "' in column '" +
                        schema[c].name + "'");
      }
      nums.push_back(v);
    }
    std::vector<int> cats;
    cats.reserve(cat_cols.size());
    for (std::size_t k = 0; k < cat_cols.size(); ++k) {
      const auto& tok = cells[cat_cols[k]];
      auto [it, inserted] =
          levels[k].emplace(tok, static_cast<int>(level_order[k].size()));
      if (inserted) level_order[k].push_back(tok);
      cats.push_back(it->second);
    }
    num_rows.push_back(std::move(nums));
    cat_rows.push_back(std::move(cats));
    target_tokens.push_back(cells[target_col]);
  }
  if (target_tokens.empty()) throw DataError("CSV has no data rows");

  TabularDataset ds;
  ds.schema = schema;
  const auto n = static_cast<Eigen::Index>(target_tokens.size());
  ds.x_num.resize(n, static_cast<Eigen::Index>(num_cols.size()));
  ds.x_cat.resize(n, static_cast<Eigen::Index>(cat_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < ds.x_num.cols(); ++j) {
      ds.x_num(i, j) = num_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    for (Eigen::Index j = 0; j < ds.x_cat.cols(); ++j) {
      ds.x_cat(i, j) = cat_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  for (const auto& lv : level_order) {
    ds.cat_cardinalities.push_back(static_cast<int>(lv.size()));
  }

  std::vector<std::string> classes(target_tokens.begin(), target_tokens.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const bool all_numeric = std::all_of(classes.begin(), classes.end(),
                                       [](const std::string& s) {
                                         double v;
                                         return parse_real(s, v);
                                       });
  if (all_numeric) {
    std::stable_sort(classes.begin(), classes.end(),
                     [](const std::string& a, const std::string& b) {
                       return std::strtod(a.c_str(), nullptr) <
                              std::strtod(b.c_str(), nullptr);
                     });
  }
  std::map<std::string, int> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    class_index[classes[c]] = static_cast<int>(c);
  }
  ds.y.reserve(target_tokens.size());
  for (const auto& t : target_tokens) ds.y.push_back(class_index.at(t));
  ds.class_count = static_cast<int>(classes.size());
  ds.class_names = std::move(classes);
  ds.validate();
  return ds;
}

TabularDataset load_dataset(const std::filesystem::path& csv_path,
                            const std::filesystem::path& schema_path) {
  const Schema schema = load_schema(schema_path);
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open " + csv_path.string());
  return parse_dataset(in, schema);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = x.rowwise() - mean.transpose();
  return z.array().rowwise() / stddev.transpose().array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd x = z.array().rowwise() * stddev.transpose().array();
  return x.rowwise() + mean.transpose();
}

Standardizer fit_standardizer(const TabularDataset& ds,
                              const std::vector<Eigen::Index>& rows) {
  if (rows.empty()) throw DataError("cannot fit standardizer on empty rows");
  const Eigen::Index m = ds.m_num();
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(m);
  s.stddev = Eigen::VectorXd::Ones(m);
  const auto count = static_cast<double>(rows.size());
  for (Eigen::Index j = 0; j < m; ++j) {
    double mu = 0.0;
    for (auto i : rows) mu += ds.x_num(i, j);
    mu /= count;
    double var = 0.0;
    for (auto i : rows) var += (ds.x_num(i, j) - mu) * (ds.x_num(i, j) - mu);
    var /= count;
    s.mean(j) = mu;
    const double sd = std::sqrt(var);
    s.stddev(j) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

TabularDataset preprocess(const TabularDataset& ds, const SplitIndices& fit_on,
                          Standardizer* stats_out) {
  fit_on.validate(ds.n());
  Standardizer s = fit_standardizer(ds, fit_on.train);
  TabularDataset out = ds;
  out.x_num = s.apply(ds.x_num);
  // Zero-variance columns standardize to exactly zero.
  for (Eigen::Index j = 0; j < out.m_num(); ++j) {
    bool constant = true;
    for (auto i : fit_on.train) {
      if (ds.x_num(i, j) != ds.x_num(fit_on.train.front(), j)) {
        constant = false;
        break;
      }
    }
    if (constant) out.x_num.col(j).setZero();
  }
  if (stats_out) *stats_out = s;
  return out;
}

SplitIndices stratified_split(const std::vector<int>& y, int class_count,
                              const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw DataError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto C = static_cast<std::size_t>(class_count);

  std::vector<std::vector<Eigen::Index>> members(C);
  for (Eigen::Index i = 0; i < n; ++i) {
    members[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])].push_back(i);
  }
  std::string too_small;
  for (std::size_t c = 0; c < C; ++c) {
    if (members[c].size() < 3) too_small += " " + std::to_string(c);
  }
  if (!too_small.empty()) {
    throw DataError("a split would be empty for class(es):" + too_small);
  }

  // Global split sizes by largest remainder.
  std::array<long, 3> target{};
  {
    std::array<double, 3> frac{};
    long assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double q = ratios[s] * static_cast<double>(n);
      target[s] = static_cast<long>(std::floor(q));
      frac[s] = q - std::floor(q);
      assigned += target[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });
    for (int k = 0; assigned < n; ++k, ++assigned) ++target[order[k % 3]];
  }

  // Controlled rounding of q[c][s] = target[s] * N_c / n: every cell ends at
  // its floor or ceiling while row sums stay N_c and column sums target[s].
  // The increments form a transportation problem solved by min-cost flow;
  // cells whose floor is 0 are favoured so each class reaches every split.
  std::vector<std::array<long, 3>> counts(C);
  std::vector<long> row_need(C, 0);
  std::array<long, 3> col_need = target;
  const int node_count = static_cast<int>(C) + 5;
  const int source = node_count - 2;
  const int sink = node_count - 1;
  struct Edge {
    int to;
    long cap;
    double cost;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<int>> graph(static_cast<std::size_t>(node_count));
  auto add_edge = [&](int u, int v, long cap, double cost) {
    graph[static_cast<std::size_t>(u)].push_back(static_cast<int>(edges.size()));
    edges.push_back({v, cap, cost});
    graph[static_cast<std::size_t>(v)].push_back(static_cast<int>(edges.size()));
    edges.push_back({u, 0, -cost});
  };
  const long total = static_cast<long>(n);
  for (std::size_t c = 0; c < C; ++c) {
    const long nc = static_cast<long>(members[c].size());
    row_need[c] = nc;
    for (int s = 0; s < 3; ++s) {
      const long num = target[s] * nc;
      counts[c][s] = num / total;
      row_need[c] -= counts[c][s];
      col_need[s] -= counts[c][s];
      if (num % total != 0) {
        const double frac = static_cast<double>(num % total) / static_cast<double>(total);
        add_edge(static_cast<int>(c), static_cast<int>(C) + s, 1,
                 counts[c][s] == 0 ? -2.0 - frac : -frac);
      }
    }
    add_edge(source, static_cast<int>(c), row_need[c], 0.0);
  }
  for (int s = 0; s < 3; ++s) add_edge(static_cast<int>(C) + s, sink, col_need[s], 0.0);

  // Successive shortest paths with Bellman-Ford; the graph is tiny.
  for (;;) {
    std::vector<double> dist(static_cast<std::size_t>(node_count),
                             std::numeric_limits<double>::infinity());
    std::vector<int> via(static_cast<std::size_t>(node_count), -1);
    dist[static_cast<std::size_t>(source)] = 0.0;
    for (bool changed = true; changed;) {
      changed = false;
      for (int u = 0; u < node_count; ++u) {
        if (!std::isfinite(dist[static_cast<std::size_t>(u)])) continue;
        for (int e : graph[static_cast<std::size_t>(u)]) {
          const Edge& ed = edges[static_cast<std::size_t>(e)];
          const double d = dist[static_cast<std::size_t>(u)] + ed.cost;
          if (ed.cap > 0 && d < dist[static_cast<std::size_t>(ed.to)] - 1e-12) {
            dist[static_cast<std::size_t>(ed.to)] = d;
            via[static_cast<std::size_t>(ed.to)] = e;
            changed = true;
          }
        }
      }
    }
    if (via[static_cast<std::size_t>(sink)] < 0) break;
    for (int v = sink; v != source;) {
      const int e = via[static_cast<std::size_t>(v)];
      --edges[static_cast<std::size_t>(e)].cap;
      ++edges[static_cast<std::size_t>(e ^ 1)].cap;
      v = edges[static_cast<std::size_t>(e ^ 1)].to;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (int e : graph[c]) {
      const Edge& ed = edges[static_cast<std::size_t>(e)];
      const int s = ed.to - static_cast<int>(C);
      if (e % 2 == 0 && s >= 0 && s < 3 && ed.cap == 0) ++counts[c][s];
    }
  }

  // Tiny classes can make the rounding leave a split without a member;
  // borrow one from the class's largest split.
  for (std::size_t c = 0; c < C; ++c) {
    for (int s = 0; s < 3; ++s) {
      if (counts[c][s] == 0) {
        const auto donor = std::max_element(counts[c].begin(), counts[c].end());
        --*donor;
        ++counts[c][s];
      }
    }
  }

  Rng rng(seed);
  SplitIndices out;
  for (std::size_t c = 0; c < C; ++c) {
    auto idx = members[c];
    rng.shuffle(idx);
    auto it = idx.begin();
    out.train.insert(out.train.end(), it, it + counts[c][0]);
    it += counts[c][0];
    out.valid.insert(out.valid.end(), it, it + counts[c][1]);
    it += counts[c][1];
    out.test.insert(out.test.end(), it, idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

}  // namespace tabgsl
