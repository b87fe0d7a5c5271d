#include "support/synthetic.hpp"

#include "tabgsl/error.hpp"
#include "tabgsl/rng.hpp"
#include "tabgsl/tabdata.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tabgsl {
namespace {

const char* kSchema = R"([
  {"name": "age", "kind": "numeric"},
  {"name": "income", "kind": "numeric"},
  {"name": "city", "kind": "categorical"},
  {"name": "label", "kind": "target"}
])";

TabularDataset parse(const std::string& csv, const char* schema = kSchema) {
  std::istringstream in(csv);
  return parse_dataset(in, parse_schema(schema));
}

TEST(Schema, RejectsBadSchemas) {
  EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "numeric"}])"), DataError);
  EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "target"},
                                {"name": "b", "kind": "target"}])"),
               DataError);
  EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "numeric"},
                                {"name": "a", "kind": "target"}])"),
               DataError);
  EXPECT_THROW(parse_schema(R"([{"name": "", "kind": "numeric"},
                                {"name": "y", "kind": "target"}])"),
               DataError);
  EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "ordinal"},
                                {"name": "y", "kind": "target"}])"),
               DataError);
}

TEST(LoadDataset, FiveRowMixedTable) {
  const auto ds = parse(
      "age,income,city,label\n"
      "30,1.5,paris,yes\n"
      "41,2.5,rome,no\n"
      "25,0.5,paris,no\n"
      "38,3.0,oslo,yes\n"
      "52,1.0,rome,no\n");
  EXPECT_EQ(ds.n(), 5);
  EXPECT_EQ(ds.m_num(), 2);
  EXPECT_EQ(ds.m_cat(), 1);
  EXPECT_EQ(ds.class_count, 2);
  EXPECT_EQ(ds.cat_cardinalities, std::vector<int>{3});
  // First-appearance order for categories.
  EXPECT_EQ(ds.x_cat(0, 0), 0);
  EXPECT_EQ(ds.x_cat(1, 0), 1);
  EXPECT_EQ(ds.x_cat(3, 0), 2);
  EXPECT_EQ(ds.x_cat(4, 0), 1);
  // Sorted target classes.
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"no", "yes"}));
  EXPECT_EQ(ds.y, (std::vector<int>{1, 0, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(ds.x_num(3, 1), 3.0);
}

TEST(LoadDataset, NumericLabelsSortNumerically) {
  const auto ds = parse(
      "age,income,city,label\n"
      "1,1,a,10\n"
      "2,2,a,9\n"
      "3,3,b,2\n");
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"2", "9", "10"}));
  EXPECT_EQ(ds.y, (std::vector<int>{2, 1, 0}));
}

TEST(LoadDataset, QuotesAndByteOrderMark) {
  const auto ds = parse(
      "\xEF\xBB\xBF"
      "age,income,city,label\n"
      "1,2,\"new york, ny\",a\n"
      "3,4,\"say \"\"hi\"\"\",b\n");
  EXPECT_EQ(ds.n(), 2);
  EXPECT_EQ(ds.cat_cardinalities[0], 2);
}

TEST(LoadDataset, MirrorsTable4Dataset23) {
  // Same shape as the contraceptive-method-choice table: 2 numeric,
  // 7 categorical, 3 classes.
  std::string schema = "[";
  std::string header;
  for (int j = 0; j < 2; ++j) {
    schema += R"({"name": "n)" + std::to_string(j) + R"(", "kind": "numeric"},)";
    header += "n" + std::to_string(j) + ",";
  }
  for (int j = 0; j < 7; ++j) {
    schema += R"({"name": "c)" + std::to_string(j) + R"(", "kind": "categorical"},)";
    header += "c" + std::to_string(j) + ",";
  }
  schema += R"({"name": "y", "kind": "target"}])";
  std::ostringstream csv;
  csv << header << "y\n";
  Rng rng(23);
  for (int i = 0; i < 1473; ++i) {
    csv << rng.uniform(15, 50) << ',' << rng.below(17);
    for (int j = 0; j < 7; ++j) csv << ",v" << rng.below(4);
    csv << ',' << (i % 3) + 1 << '\n';
  }
  std::istringstream in(csv.str());
  const auto ds = parse_dataset(in, parse_schema(schema));
  EXPECT_EQ(ds.n(), 1473);
  EXPECT_EQ(ds.m_num(), 2);
  EXPECT_EQ(ds.m_cat(), 7);
  EXPECT_EQ(ds.class_count, 3);
}

TEST(LoadDataset, MissingSchemaColumnIsColumnMismatch) {
  try {
    parse("age,city,label\n1,a,x\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("column mismatch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("income"), std::string::npos);
  }
}

TEST(LoadDataset, RejectsBadCells) {
  EXPECT_THROW(parse("age,income,city,label\n1,abc,a,x\n"), DataError);
  EXPECT_THROW(parse("age,income,city,label\n1,,a,x\n"), DataError);
  EXPECT_THROW(parse("age,income,city,label\n1,2,a\n"), DataError);
  EXPECT_THROW(parse(""), DataError);
}

TEST(LoadDataset, MissingFileIsDataError) {
  EXPECT_THROW(load_dataset("/nonexistent/data.csv", "/nonexistent/schema.json"), DataError);
}

TEST(LoadDataset, FileRoundTripMatchesInMemoryTable) {
  const auto raw = testing::random_mixed(40, 3, 2, 4, 3, 5);
  const auto dir = testing::scratch_dir("tabdata_roundtrip");
  testing::write_dataset(raw, dir / "d.csv", dir / "s.json");
  const auto back = load_dataset(dir / "d.csv", dir / "s.json");
  EXPECT_EQ(back.x_num, raw.x_num);
  EXPECT_EQ(back.y, raw.y);
  EXPECT_EQ(back.m_cat(), raw.m_cat());
  EXPECT_EQ(file_sha256(dir / "d.csv").size(), 64u);
}

TEST(Preprocess, StandardizesWithTrainStatistics) {
  TabularDataset ds;
  ds.x_num.resize(4, 2);
  ds.x_num << 1, 5, 3, 5, 100, 5, -7, 5;
  ds.x_cat.resize(4, 1);
  ds.x_cat << 0, 1, 1, 0;
  ds.cat_cardinalities = {2};
  ds.y = {0, 1, 0, 1};
  ds.class_count = 2;
  SplitIndices split{{0, 1}, {2}, {3}};
  const auto out = preprocess(ds, split);
  EXPECT_DOUBLE_EQ(out.x_num(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(out.x_num(1, 0), 1.0);
  // Constant column becomes zeros.
  EXPECT_TRUE(out.x_num.col(1).isZero(0.0));
  // Categorical indices untouched.
  EXPECT_EQ(out.x_cat, ds.x_cat);
}

TEST(Preprocess, TrainColumnsHaveZeroMeanUnitStdAndInvert) {
  const auto raw = testing::random_mixed(120, 4, 1, 3, 2, 8);
  SplitIndices split = stratified_split(raw, kDefaultRatios, 3);
  Standardizer st;
  const auto out = preprocess(raw, split, &st);
  for (Eigen::Index j = 0; j < out.m_num(); ++j) {
    double mean = 0.0;
    for (auto i : split.train) mean += out.x_num(i, j);
    mean /= static_cast<double>(split.train.size());
    double var = 0.0;
    for (auto i : split.train) var += (out.x_num(i, j) - mean) * (out.x_num(i, j) - mean);
    var /= static_cast<double>(split.train.size());
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
  }
  const Eigen::MatrixXd back = st.invert(out.x_num);
  for (Eigen::Index i = 0; i < back.size(); ++i) {
    const double r = raw.x_num.data()[i];
    EXPECT_LE(std::abs(back.data()[i] - r), 1e-9 * std::max(1.0, std::abs(r)));
  }
}

std::vector<int> labels(int n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int c = 0; c < classes; ++c) {
    for (int r = 0; r < 3; ++r) y[static_cast<std::size_t>(c * 3 + r)] = c;
  }
  for (int i = classes * 3; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  rng.shuffle(y);
  return y;
}

TEST(StratifiedSplit, HundredRowsGiveSeventyFifteenFifteen) {
  for (int classes : {2, 3, 5}) {
    const auto y = labels(100, classes, static_cast<std::uint64_t>(classes));
    const auto s = stratified_split(y, classes, kDefaultRatios, 1);
    EXPECT_EQ(s.train.size(), 70u) << classes;
    EXPECT_EQ(s.valid.size(), 15u) << classes;
    EXPECT_EQ(s.test.size(), 15u) << classes;
  }
}

TEST(StratifiedSplit, TenRowsBalancedBinary) {
  const std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = stratified_split(y, 2, kDefaultRatios, seed);
    for (int c = 0; c < 2; ++c) {
      auto count = [&](const std::vector<Eigen::Index>& idx) {
        return std::count_if(idx.begin(), idx.end(),
                             [&](Eigen::Index i) { return y[static_cast<std::size_t>(i)] == c; });
      };
      EXPECT_GE(count(s.train), 3);
      EXPECT_LE(count(s.train), 4);
      EXPECT_GE(count(s.valid), 1);
      EXPECT_GE(count(s.test), 1);
    }
  }
}

TEST(StratifiedSplit, RejectsBadRatiosAndTinyClasses) {
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  EXPECT_THROW(stratified_split(y, 2, {0.5, 0.5, 0.5}, 0), DataError);
  EXPECT_THROW(stratified_split(y, 2, {1.0, 0.0, 0.0}, 0), DataError);
  try {
    stratified_split({0, 0, 0, 1, 1}, 2, kDefaultRatios, 0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(StratifiedSplit, FuzzedPartitionAndProportionProperties) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(5));
    const int n = classes * 3 + static_cast<int>(rng.below(300));
    const auto y = labels(n, classes, rng.next());
    const auto s = stratified_split(y, classes, kDefaultRatios, rng.next());
    ASSERT_NO_THROW(s.validate(n));
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (const auto* part : {&s.train, &s.valid, &s.test}) {
      ASSERT_FALSE(part->empty());
      ASSERT_TRUE(std::is_sorted(part->begin(), part->end()));
      for (auto i : *part) ++seen[static_cast<std::size_t>(i)];
    }
    ASSERT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    // The proportion bound and "every class in every split" conflict when a
    // class is too small to reach the smaller splits on its own.
    std::size_t smallest = s.train.size() + s.valid.size() + s.test.size();
    for (int c = 0; c < classes; ++c) {
      smallest = std::min<std::size_t>(smallest, static_cast<std::size_t>(std::count(y.begin(), y.end(), c)));
    }
    if (static_cast<double>(smallest) * std::min(s.valid.size(), s.test.size()) <
        static_cast<double>(n)) {
      continue;
    }
    for (int c = 0; c < classes; ++c) {
      const double full =
          static_cast<double>(std::count(y.begin(), y.end(), c)) / static_cast<double>(n);
      for (const auto* part : {&s.train, &s.valid, &s.test}) {
        const double in = static_cast<double>(std::count_if(part->begin(), part->end(), [&](Eigen::Index i) {
                            return y[static_cast<std::size_t>(i)] == c;
                          })) /
                          static_cast<double>(part->size());
        EXPECT_LE(std::abs(in - full), 1.0 / static_cast<double>(part->size()) + 1e-12)
            << "n=" << n << " C=" << classes << " class " << c;
      }
    }
  }
}

TEST(StratifiedSplit, DeterministicForSeed) {
  const auto y = labels(157, 3, 4);
  const auto a = stratified_split(y, 3, kDefaultRatios, 17);
  const auto b = stratified_split(y, 3, kDefaultRatios, 17);
  const auto c = stratified_split(y, 3, kDefaultRatios, 18);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(SplitIndices, ValidateCatchesOverlapAndGaps) {
  EXPECT_THROW((SplitIndices{{0, 1}, {1}, {2}}.validate(3)), DataError);
  EXPECT_THROW((SplitIndices{{0}, {1}, {2}}.validate(4)), DataError);
}

}  // namespace
}  // namespace tabgsl
