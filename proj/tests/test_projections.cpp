#include "dpsim/projections.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "dpsim/core.hpp"
#include "gtest/gtest.h"

namespace dpsim {
namespace {

std::vector<double> unit_vector(std::size_t d, std::uint64_t idx) {
  RngStream rng(31, stream_id(StreamTag::kTest, idx));
  std::vector<double> x(d);
  double norm = 0.0;
  for (double& v : x) {
    v = rng.gaussian();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : x) v /= norm;
  return x;
}

TEST(ProjectionsTest, ZeroMapsToZero) {
  const std::vector<double> zero(16, 0.0);
  for (auto kind : {ProjectionKind::kGaussianJL, ProjectionKind::kFastJL,
                    ProjectionKind::kL2ToL1}) {
    const auto out = apply_projection({kind, 16, 24, 5}, zero);
    for (double v : out) EXPECT_DOUBLE_EQ(v, 0.0);
  }
}

TEST(ProjectionsTest, ApplyRejectsWrongDimension) {
  Projector p({ProjectionKind::kGaussianJL, 8, 4, 1});
  EXPECT_THROW(p.apply(std::vector<double>(7, 0.0)), std::invalid_argument);
}

TEST(ProjectionsTest, GaussianJlPreservesUnitNorms) {
  const std::size_t k = 1024;
  const auto x = unit_vector(32, 1);
  int ok = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    const auto y = apply_projection({ProjectionKind::kGaussianJL, 32, k,
                                     static_cast<std::uint64_t>(s)}, x);
    double norm = 0.0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    ok += (norm >= 0.9 && norm <= 1.1);
  }
  EXPECT_GE(ok, static_cast<int>(0.99 * seeds));
}

TEST(ProjectionsTest, L2ToL1PreservesNormsAsL1) {
  const std::size_t k = 2000;
  const auto x = unit_vector(16, 2);
  int ok = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    const auto y = apply_projection({ProjectionKind::kL2ToL1, 16, k,
                                     static_cast<std::uint64_t>(s)}, x);
    double l1 = 0.0;
    for (double v : y) l1 += std::fabs(v);
    ok += (l1 >= 0.9 && l1 <= 1.1);
  }
  EXPECT_GE(ok, static_cast<int>(0.99 * seeds));
}

// Reference for the fast JL factors: explicit Hadamard matrix product.
std::vector<double> srht_reference(const ProjectionSpec& spec, std::span<const double> x) {
  Projector p(spec);  // reuse its deterministic signs/rows via a probe basis
  // Build the dense equivalent by applying to basis vectors.
  std::vector<double> dense(spec.out_dim * spec.in_dim);
  std::vector<double> e(spec.in_dim, 0.0);
  for (std::size_t j = 0; j < spec.in_dim; ++j) {
    e[j] = 1.0;
    const auto col = p.apply(e);
    for (std::size_t i = 0; i < spec.out_dim; ++i) dense[i * spec.in_dim + j] = col[i];
    e[j] = 0.0;
  }
  std::vector<double> out(spec.out_dim, 0.0);
  for (std::size_t i = 0; i < spec.out_dim; ++i)
    for (std::size_t j = 0; j < spec.in_dim; ++j) out[i] += dense[i * spec.in_dim + j] * x[j];
  return out;
}

TEST(ProjectionsTest, FastJlMatchesItsDenseFactorization) {
  // The transform is linear, so it must agree with the dense matrix assembled
  // from its action on the basis; checked across dims including k > d.
  RngStream rng(17, stream_id(StreamTag::kTest, 3));
  for (const auto& [d, k] : std::vector<std::pair<std::size_t, std::size_t>>{
           {8, 4}, {16, 16}, {12, 20}, {64, 33}}) {
    const ProjectionSpec spec{ProjectionKind::kFastJL, d, k, 1234};
    Projector p(spec);
    std::vector<double> x(d);
    for (double& v : x) v = rng.uniform() * 2.0 - 1.0;
    const auto got = p.apply(x);
    const auto want = srht_reference(spec, x);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(ProjectionsTest, FastJlPreservesNormsOnAverage) {
  const auto x = unit_vector(64, 4);
  double sum = 0.0;
  const int seeds = 400;
  for (int s = 0; s < seeds; ++s) {
    const auto y = apply_projection({ProjectionKind::kFastJL, 64, 256,
                                     static_cast<std::uint64_t>(s)}, x);
    double norm = 0.0;
    for (double v : y) norm += v * v;
    sum += norm;
  }
  EXPECT_NEAR(sum / seeds, 1.0, 0.05);
}

TEST(ProjectionsTest, ChooseProjectionDim) {
  EXPECT_EQ(choose_kde_projection_dim(KernelId::kGauss, 0.1, /*fast=*/false), 1842u);
  EXPECT_EQ(choose_kde_projection_dim(KernelId::kInv1pL2, 0.5), 32u);
  EXPECT_EQ(choose_kde_projection_dim(KernelId::kGauss, 0.95, false), kProjDimFloor);
  const std::size_t fast = choose_kde_projection_dim(KernelId::kExp, 0.1, true);
  EXPECT_EQ(fast, static_cast<std::size_t>(std::llround(
                      8.0 * std::log(10.0) * std::log(10.0) / 0.01)));
  EXPECT_THROW(choose_kde_projection_dim(KernelId::kGauss, 0.0), std::invalid_argument);
}

TEST(ProjectionsTest, MatrixDependsOnSpecOnly) {
  // Obliviousness: two instantiations of the same spec share every coefficient
  // regardless of what data they are later applied to.
  const ProjectionSpec spec{ProjectionKind::kGaussianJL, 24, 12, 77};
  Projector a(spec), b(spec);
  const auto ca = a.dense_coefficients();
  const auto cb = b.dense_coefficients();
  ASSERT_EQ(ca.size(), cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) EXPECT_EQ(ca[i], cb[i]);
}

TEST(ProjectionsTest, EmbedIdenticalPointsStayIdentical) {
  Matrix m(2, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    m.at(0, j) = 0.3 * (j + 1);
    m.at(1, j) = 0.3 * (j + 1);
  }
  const auto e = embed_l2_dataset(m, 0.3, {PromiseKind::kL2Ball, 10.0, 6}, 9);
  for (std::size_t j = 0; j < e.points.cols; ++j)
    EXPECT_DOUBLE_EQ(e.points.at(0, j), e.points.at(1, j));
  EXPECT_DOUBLE_EQ(e.box.radius, 2.0 * e.clip);
}

TEST(ProjectionsTest, EmbedPreservesPairDistances) {
  // ||T(x) - T(y)||_1 concentrates around ||x - y||_2 = 1.
  const std::size_t d = 8;
  std::vector<double> x(d, 0.0), y(d, 0.0);
  y[0] = 1.0;
  const std::size_t k = embed_l2_dimension(2, 0.1);
  int ok = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    Projector proj({ProjectionKind::kL2ToL1, d, k, static_cast<std::uint64_t>(s)});
    const auto ex = proj.apply(x);
    const auto ey = proj.apply(y);
    double l1 = 0.0;
    for (std::size_t i = 0; i < k; ++i) l1 += std::fabs(ex[i] - ey[i]);
    ok += (l1 >= 0.9 && l1 <= 1.1);
  }
  EXPECT_GE(ok, static_cast<int>(0.99 * seeds));
}

TEST(ProjectionsTest, EmbedClipRateIsLow) {
  RngStream rng(13, stream_id(StreamTag::kTest, 5));
  const std::size_t n = 200, d = 10;
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      m.at(i, j) = rng.gaussian();
      norm += m.at(i, j) * m.at(i, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) m.at(i, j) *= 5.0 / norm;  // on the promise sphere
  }
  const auto e = embed_l2_dataset(m, 0.3, {PromiseKind::kL2Ball, 5.0, d}, 11);
  const double rate = static_cast<double>(e.clip_count) /
                      static_cast<double>(n * e.points.cols);
  EXPECT_LE(rate, 0.01);
}

}  // namespace
}  // namespace dpsim
