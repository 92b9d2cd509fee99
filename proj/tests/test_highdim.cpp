#include "dpsim/highdim.hpp"

#include <cmath>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/onedim.hpp"
#include "dpsim/oracle.hpp"
#include "gtest/gtest.h"

namespace dpsim {
namespace {

Matrix random_box_points(std::size_t n, std::size_t d, double radius, std::uint64_t idx) {
  RngStream rng(777, stream_id(StreamTag::kTest, idx));
  Matrix m(n, d);
  for (double& v : m.data) v = rng.uniform() * radius;
  return m;
}

TEST(HighdimTest, SingleDimensionMatchesPlainTree) {
  const Matrix data = random_box_points(64, 1, 1.0, 1);
  const DomainPromise box{PromiseKind::kBox, 1.0, 1};
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 99, false);
  EXPECT_DOUBLE_EQ(s.per_tree_epsilon, 1.0);
  // Identical stream mapping: a lone tree built on coordinate stream 0 with
  // the full budget produces the same bits.
  std::vector<double> col(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) col[i] = data.at(i, 0);
  const auto t = build_tree(col, 1.0, RngStream(99, stream_id(StreamTag::kTree, 0)), false);
  EXPECT_EQ(t.node_values, s.trees[0].node_values);
}

TEST(HighdimTest, PureBudgetSplitsEvenly) {
  const Matrix data = random_box_points(32, 4, 1.0, 2);
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 4}, 1.0, 1, true);
  EXPECT_DOUBLE_EQ(s.per_tree_epsilon, 0.25);
}

TEST(HighdimTest, AdvancedBudgetSplitIsAudited) {
  const Matrix data = random_box_points(32, 100, 1.0, 3);
  const PrivacyBudget budget{1.0, 1e-5};
  const auto s = build_l1(data, budget, 0.1, {PromiseKind::kBox, 1.0, 100}, 1.0, 1, true);
  EXPECT_NEAR(s.per_tree_epsilon, 0.0204, 2e-4);
  EXPECT_LE(advanced_composition_total(s.per_tree_epsilon, budget.delta, 100),
            budget.epsilon * (1 + 1e-12));
}

TEST(HighdimTest, QueryMatchesOracleNoiseOff) {
  Matrix data(2, 2);
  data.at(0, 0) = 0.0; data.at(0, 1) = 0.0;
  data.at(1, 0) = 1.0; data.at(1, 1) = 1.0;
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 2}, 1.0, 7, true);
  const std::vector<double> y{0.0, 0.0};
  const double truth = exact_distance_sum(data, y, DistanceFn::kL1);
  EXPECT_DOUBLE_EQ(truth, 2.0);
  EXPECT_LE(std::fabs(query_l1(s, y) - truth), 0.1 * truth + 2.0 * 2.0);
}

TEST(HighdimTest, AllPointsAtQueryStaysWithinSlack) {
  Matrix data(50, 3);
  for (std::size_t i = 0; i < data.rows; ++i)
    for (std::size_t j = 0; j < 3; ++j) data.at(i, j) = 0.4;
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 3}, 1.0, 7, true);
  const std::vector<double> y{0.4, 0.4, 0.4};
  EXPECT_DOUBLE_EQ(query_l1(s, y), 0.0);
}

TEST(HighdimTest, QueryL1EqualsPerCoordinateSums) {
  const Matrix data = random_box_points(200, 5, 2.0, 4);
  const DomainPromise box{PromiseKind::kBox, 2.0, 5};
  const auto s = build_l1(data, {1.0, 0.0}, 0.2, box, 1.0, 21, true);
  const std::vector<double> y{0.3, 1.9, 0.0, 2.0, 1.0};
  KahanSum per_coord;
  for (std::size_t j = 0; j < 5; ++j) {
    per_coord.add(distance_query(s.trees[j], y[j] / 2.0, 0.2, 2.0));
  }
  EXPECT_DOUBLE_EQ(query_l1(s, y), per_coord.value());
}

TEST(HighdimTest, LppMatchesOracleAndL1Special) {
  Matrix data(2, 2);
  data.at(0, 0) = 0.0; data.at(0, 1) = 0.0;
  data.at(1, 0) = 2.0; data.at(1, 1) = 0.0;
  const DomainPromise box{PromiseKind::kBox, 2.0, 2};
  const auto s2 = build_l1(data, {1.0, 0.0}, 0.1, box, 2.0, 5, true);
  const std::vector<double> y{1.0, 0.0};
  const double truth = exact_distance_sum(data, y, DistanceFn::kLpP, 2.0);
  EXPECT_DOUBLE_EQ(truth, 2.0);
  EXPECT_LE(std::fabs(query_lpp(s2, y, 2.0) - truth), 0.1 * truth + 2.0 * 4.0 * 2);

  EXPECT_THROW(query_lpp(s2, y, 3.0), std::invalid_argument);

  const auto s1 = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 5, false);
  EXPECT_EQ(query_lpp(s1, y, 1.0), query_l1(s1, y));
}

TEST(HighdimTest, LppPointMassIsZero) {
  Matrix data(30, 2);
  for (std::size_t i = 0; i < data.rows; ++i) {
    data.at(i, 0) = 0.7;
    data.at(i, 1) = 0.1;
  }
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 2}, 4.0, 5, true);
  const std::vector<double> y{0.7, 0.1};
  EXPECT_DOUBLE_EQ(query_lpp(s, y, 4.0), 0.0);
}

TEST(HighdimTest, RebuildIsBitReproducibleAndSeedChangesNoiseOnly) {
  const Matrix data = random_box_points(100, 3, 1.0, 5);
  const DomainPromise box{PromiseKind::kBox, 1.0, 3};
  const auto a = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 123, false);
  const auto b = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 123, false);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a.trees[j].node_values, b.trees[j].node_values);

  const auto c = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 124, false);
  const auto quiet_a = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 123, true);
  const auto quiet_c = build_l1(data, {1.0, 0.0}, 0.1, box, 1.0, 124, true);
  bool noise_differs = false;
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(quiet_a.trees[j].node_values, quiet_c.trees[j].node_values);
    noise_differs |= a.trees[j].node_values != c.trees[j].node_values;
  }
  EXPECT_TRUE(noise_differs);
}

TEST(HighdimTest, RejectsBadParameters) {
  const Matrix data = random_box_points(10, 2, 1.0, 6);
  EXPECT_THROW(build_l1(data, {0.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 2}, 1.0, 1),
               std::invalid_argument);
  EXPECT_THROW(build_l1(data, {1.0, 0.0}, 1.2, {PromiseKind::kBox, 1.0, 2}, 1.0, 1),
               std::invalid_argument);
  EXPECT_THROW(build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 3}, 1.0, 1),
               std::invalid_argument);
  const auto s = build_l1(data, {1.0, 0.0}, 0.1, {PromiseKind::kBox, 1.0, 2}, 1.0, 1, true);
  EXPECT_THROW(query_l1(s, std::vector<double>{0.1}), std::invalid_argument);
}

}  // namespace
}  // namespace dpsim
