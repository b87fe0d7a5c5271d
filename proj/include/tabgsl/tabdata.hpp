// Tabular dataset loading, standardization and stratified splitting.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tabgsl {

enum class ColumnKind { kNumeric, kCategorical, kTarget };

struct ColumnSchema {
  std::string name;
  ColumnKind kind;
};

using Schema = std::vector<ColumnSchema>;

/// Parses a JSON array of {"name", "kind"} objects and validates it: names
/// unique and non-empty, exactly one target column. Throws DataError.
Schema parse_schema(const std::string& json_text);
Schema load_schema(const std::filesystem::path& path);

struct TabularDataset {
  Eigen::MatrixXd x_num;  // n x m_num
  Eigen::MatrixXi x_cat;  // n x m_cat, 0-based category indices
  std::vector<int> y;
  int class_count = 0;
  Schema schema;
  std::vector<int> cat_cardinalities;
  /// Original target tokens, indexed by class.
  std::vector<std::string> class_names;

  Eigen::Index n() const { return static_cast<Eigen::Index>(y.size()); }
  Eigen::Index m_num() const { return x_num.cols(); }
  Eigen::Index m_cat() const { return x_cat.cols(); }

  /// Numeric block followed by one-hot encoded categorical columns.
  Eigen::MatrixXd dense_features() const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;
};

struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> valid;
  std::vector<Eigen::Index> test;

  /// Throws DataError unless the three sets are disjoint and cover [0, n).
  void validate(Eigen::Index n) const;
};

/// Reads a CSV document with a header row. Numeric columns are parsed as
/// reals and left unstandardized; categorical levels are indexed in order of
/// first appearance; target classes are indexed in sorted order (numeric
/// order when every label parses as a number).
TabularDataset parse_dataset(std::istream& csv, const Schema& schema);
TabularDataset load_dataset(const std::filesystem::path& csv_path,
                            const std::filesystem::path& schema_path);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // population std, clamped to 1 when zero

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;
};

Standardizer fit_standardizer(const TabularDataset& ds,
                              const std::vector<Eigen::Index>& rows);

/// Standardizes numeric columns with statistics from `fit_on.train`.
TabularDataset preprocess(const TabularDataset& ds, const SplitIndices& fit_on,
                          Standardizer* stats_out = nullptr);

using SplitRatios = std::array<double, 3>;
inline constexpr SplitRatios kDefaultRatios{0.70, 0.15, 0.15};

/// Per-class proportional split; each class contributes to every split.
SplitIndices stratified_split(const std::vector<int>& y, int class_count,
                              const SplitRatios& ratios, std::uint64_t seed);
inline SplitIndices stratified_split(const TabularDataset& ds,
                                     const SplitRatios& ratios,
                                     std::uint64_t seed) {
  return stratified_split(ds.y, ds.class_count, ratios, seed);
}

/// SHA-256 of a file's bytes, lowercase hex.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace tabgsl
