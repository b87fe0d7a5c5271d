// Small generated datasets shared by the unit and acceptance tests.
#pragma once

#include "tabgsl/tabdata.hpp"

#include <cstdint>
#include <filesystem>

namespace tabgsl::testing {

/// Two unit-variance Gaussian clusters in `d` numeric columns whose means are
/// `separation` standard deviations apart. The offset is spread evenly over
/// the first `informative` columns; the rest are pure noise. `minority`
/// instances get label 1.
TabularDataset two_gaussians(int n, int d, double separation, int minority,
                             std::uint64_t seed, int informative);

/// The acceptance dataset: n = 300, d = 10, means 4 sigma apart along one
/// column, 100 minority rows.
inline TabularDataset acceptance_clusters(std::uint64_t seed = 7) {
  return two_gaussians(300, 10, 4.0, 100, seed, 1);
}

/// Random mixed-type table with labels cycling through the classes.
TabularDataset random_mixed(int n, int m_num, int m_cat, int cardinality, int classes,
                            std::uint64_t seed);

struct Prepared {
  TabularDataset ds;
  SplitIndices split;
};

/// Default stratified split, then train-fitted standardization.
Prepared prepare(const TabularDataset& raw, std::uint64_t split_seed);

/// Writes raw data as CSV plus a JSON schema; numbers at full precision.
void write_dataset(const TabularDataset& raw, const std::filesystem::path& csv,
                   const std::filesystem::path& schema);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace tabgsl::testing
