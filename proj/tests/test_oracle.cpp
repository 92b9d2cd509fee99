#include "dpsim/oracle.hpp"

#include <cmath>
#include <vector>

#include "dpsim/core.hpp"
#include "gtest/gtest.h"

namespace dpsim {
namespace {

TEST(OracleTest, HandComputedDistanceSums) {
  Matrix one_d(3, 1);
  one_d.at(0, 0) = 0.0;
  one_d.at(1, 0) = 0.5;
  one_d.at(2, 0) = 1.0;
  EXPECT_DOUBLE_EQ(exact_distance_sum(one_d, std::vector<double>{0.0}, DistanceFn::kL1), 1.5);

  Matrix two(2, 2);
  two.at(0, 0) = 0.0; two.at(0, 1) = 0.0;
  two.at(1, 0) = 2.0; two.at(1, 1) = 2.0;
  EXPECT_DOUBLE_EQ(exact_distance_sum(two, std::vector<double>{1.0, 1.0}, DistanceFn::kL2Sq),
                   4.0);

  Matrix tri(1, 2);
  tri.at(0, 0) = 3.0;
  tri.at(0, 1) = 4.0;
  EXPECT_DOUBLE_EQ(exact_distance_sum(tri, std::vector<double>{0.0, 0.0}, DistanceFn::kL2), 5.0);
  EXPECT_DOUBLE_EQ(exact_distance_sum(tri, std::vector<double>{0.0, 0.0}, DistanceFn::kLpP, 3.0),
                   27.0 + 64.0);
}

TEST(OracleTest, HandComputedKernels) {
  Matrix x(1, 3);
  x.at(0, 0) = 0.1; x.at(0, 1) = 0.2; x.at(0, 2) = 0.3;
  const std::vector<double> same{0.1, 0.2, 0.3};
  for (auto k : {KernelId::kGauss, KernelId::kExp, KernelId::kLaplace, KernelId::kInv1pL2,
                 KernelId::kInv1pL2sq, KernelId::kInv1pL1}) {
    EXPECT_DOUBLE_EQ(exact_kde(x, same, k), 1.0);
  }
  std::vector<double> unit{1.1, 0.2, 0.3};  // l2 distance 1
  EXPECT_DOUBLE_EQ(exact_kde(x, unit, KernelId::kExp), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(exact_kde(x, unit, KernelId::kInv1pL2), 0.5);
  EXPECT_THROW(exact_kde(Matrix{}, same, KernelId::kGauss), std::invalid_argument);
}

TEST(OracleTest, KahanBeatsNaiveSummation) {
  const std::size_t n = 2000000;
  KahanSum k;
  double naive = 0.0;
  const double tiny = 1e-10;
  k.add(1e10);
  naive += 1e10;
  for (std::size_t i = 0; i < n; ++i) {
    k.add(tiny);
    naive += tiny;
  }
  const double truth = 1e10 + static_cast<double>(n) * tiny;
  EXPECT_LE(std::fabs(k.value() - truth), std::fabs(naive - truth));
  EXPECT_NEAR(k.value(), truth, 1e-6);
}

TEST(OracleTest, ErrorReportExactMatch) {
  const std::vector<double> t{1.0, 2.0, 3.0};
  const auto rep = error_report(t, t);
  EXPECT_DOUBLE_EQ(rep.mean_abs_error, 0.0);
  EXPECT_DOUBLE_EQ(rep.mean_rel_error, 0.0);
  EXPECT_DOUBLE_EQ(rep.fitted_m, 1.0);
  EXPECT_DOUBLE_EQ(rep.fitted_a, 0.0);
}

TEST(OracleTest, ErrorReportConstantOffset) {
  const std::vector<double> t{1.0, 2.0, 3.0, 4.0};
  std::vector<double> e = t;
  for (double& v : e) v += 1.0;
  const auto rep = error_report(e, t);
  EXPECT_NEAR(rep.fitted_a, 1.0, 1e-9);
  EXPECT_NEAR(rep.fitted_m, 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(rep.mean_abs_error, 1.0);
}

TEST(OracleTest, ErrorReportPureRelative) {
  const std::vector<double> t{1.0, 2.0, 3.0, 4.0};
  std::vector<double> e = t;
  for (double& v : e) v *= 1.1;
  const auto rep = error_report(e, t);
  EXPECT_NEAR(rep.fitted_m, 1.1, 1e-9);
  EXPECT_NEAR(rep.fitted_a, 0.0, 1e-9);
  EXPECT_NEAR(rep.mean_rel_error, 0.1, 1e-9);
}

TEST(OracleTest, ErrorReportRejectsBadInput) {
  const std::vector<double> a{1.0};
  const std::vector<double> b{1.0, 2.0};
  EXPECT_THROW(error_report(a, b), std::invalid_argument);
  EXPECT_THROW(error_report(std::vector<double>{}, std::vector<double>{}),
               std::invalid_argument);
}

TEST(OracleTest, DeterministicAcrossCalls) {
  Matrix m(100, 5);
  RngStream rng(1, stream_id(StreamTag::kTest, 60));
  for (double& v : m.data) v = rng.uniform();
  std::vector<double> y(5, 0.5);
  EXPECT_EQ(exact_distance_sum(m, y, DistanceFn::kL1), exact_distance_sum(m, y, DistanceFn::kL1));
  EXPECT_EQ(exact_kde(m, y, KernelId::kGauss), exact_kde(m, y, KernelId::kGauss));
}

}  // namespace
}  // namespace dpsim
