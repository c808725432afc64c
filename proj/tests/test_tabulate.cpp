#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ivf/tabulate.hpp"

using namespace ivf;

namespace {

std::vector<Record> parse(const std::string& text, CsvSchema schema = {}) {
  std::istringstream in(text);
  return ingest_csv(in, schema);
}

std::vector<Record> with_y(std::initializer_list<double> ys) {
  std::vector<Record> r;
  for (double y : ys) r.push_back({0, 0, y, {}});
  return r;
}

std::vector<double> ys(const std::vector<Record>& r) {
  std::vector<double> out;
  for (const auto& x : r) out.push_back(x.y);
  return out;
}

}  // namespace

TEST(Ingest, RowsInFileOrder) {
  auto r = parse("z,d,y\n1,0,1\n0,1,0\n1,1,1\n");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].z, 1);
  EXPECT_EQ(r[1].d, 1);
  EXPECT_EQ(r[2].y, 1.0);
}

TEST(Ingest, HeaderOnly) { EXPECT_TRUE(parse("z,d,y\n").empty()); }

TEST(Ingest, MappedNumericOutcome) {
  CsvSchema s;
  s.y = "wage";
  auto r = parse("z,d,wage\n1,1,12.7\n", s);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].y, 12.7);
}

TEST(Ingest, MissingColumnIsSchemaError) { EXPECT_THROW(parse("z,y\n1,0\n"), SchemaError); }

TEST(Ingest, BadInstrumentReportsRow) {
  try {
    parse("z,d,y\n1,0,1\nabc,0,1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Ingest, MissingValueIsParseError) { EXPECT_THROW(parse("z,d,y\n1,,1\n"), ParseError); }

TEST(Ingest, QuotedFieldsAndCovariates) {
  CsvSchema s;
  s.covariates = {"region"};
  auto r = parse("z,d,y,region\n1,0,1,\"north, east\"\n", s);
  ASSERT_EQ(r.size(), 1u);
  ASSERT_EQ(r[0].v.size(), 1u);
  EXPECT_EQ(r[0].v[0], "north, east");
}

TEST(Ingest, TreatmentThreshold) {
  CsvSchema s;
  s.d = "educ";
  s.treatment_above = 12;
  auto r = parse("z,educ,y\n1,12,0\n0,13,1\n", s);
  EXPECT_EQ(r[0].d, 0);
  EXPECT_EQ(r[1].d, 1);
}

TEST(Ingest, BinnedCovariate) {
  CsvSchema s;
  s.covariates = {"age"};
  s.bin_widths["age"] = 10;
  auto r = parse("z,d,y,age\n1,0,1,34\n0,0,1,39.5\n0,1,0,40\n", s);
  EXPECT_EQ(r[0].v[0], r[1].v[0]);
  EXPECT_NE(r[1].v[0], r[2].v[0]);
}

TEST(Dichotomize, OddCount) { EXPECT_EQ(ys(dichotomize_median(with_y({1, 2, 3}))), (std::vector<double>{0, 0, 1})); }

TEST(Dichotomize, AllTied) { EXPECT_EQ(ys(dichotomize_median(with_y({5, 5, 5}))), (std::vector<double>{0, 0, 0})); }

TEST(Dichotomize, EvenCountMidpoint) {
  EXPECT_EQ(ys(dichotomize_median(with_y({1, 2, 3, 4}))), (std::vector<double>{0, 0, 1, 1}));
}

TEST(Dichotomize, EmptyThrows) { EXPECT_THROW(dichotomize_median({}), DomainError); }

TEST(Tabulate, NoCovariatesSingleStratum) {
  std::vector<Record> r;
  for (int i = 0; i < 10; ++i) r.push_back({i % 2, (i / 2) % 2, double(i % 3 == 0), {}});
  auto s = tabulate(r);
  EXPECT_EQ(s.stratum_count(), 1u);
  EXPECT_EQ(s.strata.begin()->first, StratumKey{});
  EXPECT_EQ(s.total(), 10);
  EXPECT_EQ(format_key(s.strata.begin()->first), "(all)");
}

TEST(Tabulate, OneFactorTwoLevels) {
  std::vector<Record> r{{0, 0, 1, {"a"}}, {1, 0, 0, {"b"}}, {1, 1, 1, {"a"}}};
  auto s = tabulate(r);
  EXPECT_EQ(s.stratum_count(), 2u);
  EXPECT_EQ(s.strata.at({"a"})(1, 1, 1), 1);
}

TEST(Tabulate, NonBinaryOutcomeRejected) {
  std::vector<Record> r{{0, 0, 2.5, {}}};
  EXPECT_THROW(tabulate(r), DomainError);
}

TEST(Tabulate, InvariantsOnRandomRecords) {
  std::mt19937_64 g(11);
  std::vector<Record> r;
  for (int i = 0; i < 500; ++i)
    r.push_back({int(g() % 2), int(g() % 2), double(g() % 2), {std::to_string(g() % 4), std::to_string(g() % 3)}});
  auto s = tabulate(r);
  EXPECT_EQ(s.total(), 500);

  auto shuffled = r;
  std::shuffle(shuffled.begin(), shuffled.end(), g);
  auto s2 = tabulate(shuffled);
  EXPECT_EQ(s.strata, s2.strata);

  // coarsening: dropping the second covariate sums the finer strata
  const std::size_t first[] = {0};
  auto coarse = tabulate(r, first);
  for (const auto& [key, counts] : coarse.strata) {
    JointCounts acc(2, 2);
    for (const auto& [fk, fc] : s.strata)
      if (fk[0] == key[0]) acc += fc;
    EXPECT_EQ(acc, counts);
  }
  EXPECT_EQ(coarse.collapsed(), s.collapsed());
}

TEST(JointCounts, ProportionNeedsArm) {
  JointCounts t(2, 2);
  t.add(1, 0, 1, 3);
  EXPECT_DOUBLE_EQ(t.proportion(1, 0, 1), 1.0);
  EXPECT_THROW(t.proportion(0, 0, 0), EstimationError);
}
