#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "mediation/data.hpp"
#include "mediation/sim.hpp"

using namespace mediation;

namespace {

ColumnRoles basic_roles() {
  ColumnRoles r;
  r.covariates = {"w1"};
  r.treatment = "a";
  r.intermediate = {"z1"};
  r.mediators = {"m1"};
  r.outcome = "y";
  return r;
}

} // namespace

TEST(Data, ThreeRowReadBack) {
  const auto d = parse_csv("w1,a,z1,m1,y\n0.5,1,2,3,4\n1.5,0,-1,0,2.25\n2,1,0,1,1e-3\n", basic_roles());
  EXPECT_EQ(d.n(), 3);
  EXPECT_EQ(d.w().cols(), 1);
  EXPECT_EQ(d.z().cols(), 1);
  EXPECT_EQ(d.m().cols(), 1);
  EXPECT_DOUBLE_EQ(d.w()(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(d.a()[1], 0.0);
  EXPECT_DOUBLE_EQ(d.z()(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(d.y()[2], 1e-3);
}

TEST(Data, HeaderOrderAndQuotedFields) {
  const auto d = parse_csv("y,\"m1\",a,z1,w1,extra\r\n1,2,0,3,4,\"x,y\"\r\n", basic_roles());
  EXPECT_DOUBLE_EQ(d.y()[0], 1.0);
  EXPECT_DOUBLE_EQ(d.m()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(d.w()(0, 0), 4.0);
}

TEST(Data, NonBinaryTreatmentRejected) {
  EXPECT_THROW(parse_csv("w1,a,z1,m1,y\n0,2,0,0,0\n", basic_roles()), ValidationError);
  EXPECT_NO_THROW(parse_csv("w1,a,z1,m1,y\n0,2,0,0,0\n", basic_roles(), TreatmentKind::continuous));
}

TEST(Data, MissingColumnNamed) {
  try {
    parse_csv("w1,a,z1,y\n0,1,0,0\n", basic_roles());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "m1");
    EXPECT_NE(std::string(e.what()).find("m1"), std::string::npos);
  }
}

TEST(Data, NonNumericCellReportsRow) {
  try {
    parse_csv("w1,a,z1,m1,y\n0,1,0,0,1\n0,1,abc,0,1\n", basic_roles());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Data, RaggedRowRejected) { EXPECT_THROW(parse_csv("w1,a,z1,m1,y\n0,1,0,0\n", basic_roles()), ParseError); }

TEST(Data, RolesMustBeDistinct) {
  ColumnRoles r = basic_roles();
  r.mediators = {"z1"};
  EXPECT_THROW(r.validate(), ConfigError);
}

TEST(Data, SimulationRoundTripIsBitExact) {
  sim::SimConfig cfg;
  cfg.n = 300;
  const auto d = sim::draw_dgp(cfg, 99);
  const auto path = std::filesystem::temp_directory_path() / "mediation_roundtrip.csv";
  write_csv(path.string(), d);
  const auto back = load_csv(path.string(), sim::default_roles());
  std::filesystem::remove(path);
  EXPECT_TRUE(back == d);
  EXPECT_EQ(to_csv(back), to_csv(d));
}

TEST(Data, DesignPutsTreatmentFirst) {
  const auto d = parse_csv("w1,a,z1,m1,y\n7,1,2,3,4\n", basic_roles());
  const Matrix x = design(d, Layout::AZMW);
  ASSERT_EQ(x.cols(), 4);
  EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(x(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(x(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(x(0, 3), 7.0);
  EXPECT_EQ(design(d, Layout::AW).cols(), 2);
  EXPECT_EQ(design(d, Layout::AMW).cols(), 3);
  EXPECT_THROW(design(d, Layout::AZMW, ZSource::permuted), ConfigError);
}

TEST(Data, ZpiMustPermuteZ) {
  const auto d = parse_csv("w1,a,z1,m1,y\n0,1,1,0,0\n0,0,2,0,0\n", basic_roles());
  Matrix swapped(2, 1);
  swapped << 2, 1;
  EXPECT_NO_THROW(d.with_zpi(swapped));
  Matrix other(2, 1);
  other << 2, 3;
  EXPECT_THROW(d.with_zpi(other), ValidationError);
}

TEST(Folds, BalancedTenByFive) {
  const auto f = make_folds(10, 5, 1);
  for (int j = 0; j < 5; ++j) EXPECT_EQ(f.validation(j).size(), 2u);
}

TEST(Folds, SevenByThree) {
  const auto f = make_folds(7, 3, 1);
  std::multiset<std::size_t> sizes;
  for (int j = 0; j < 3; ++j) sizes.insert(f.validation(j).size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{2, 2, 3}));
}

TEST(Folds, PartitionAndDeterminism) {
  const auto f = make_folds(1000, 5, 42);
  const auto g = make_folds(1000, 5, 42);
  EXPECT_EQ(f.assignment, g.assignment);
  std::vector<int> seen(1000, 0);
  for (int j = 0; j < 5; ++j) {
    for (Index i : f.validation(j)) ++seen[static_cast<std::size_t>(i)];
    EXPECT_EQ(f.training(j).size() + f.validation(j).size(), 1000u);
  }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_NE(make_folds(1000, 5, 43).assignment, f.assignment);
}

TEST(Folds, RangeChecked) {
  EXPECT_THROW(make_folds(10, 0, 1), ArgumentError);
  EXPECT_THROW(make_folds(3, 4, 1), ArgumentError);
}
