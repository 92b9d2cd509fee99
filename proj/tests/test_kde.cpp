#include "dpsim/kde.hpp"

#include <cmath>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/oracle.hpp"
#include "gtest/gtest.h"

namespace dpsim {
namespace {

Matrix gaussian_cloud(std::size_t n, std::size_t d, double spread, std::uint64_t idx) {
  RngStream rng(555, stream_id(StreamTag::kTest, idx));
  Matrix m(n, d);
  for (double& v : m.data) v = rng.gaussian() * spread;
  return m;
}

TEST(KdeTest, FeatureInnerProductApproximatesKernel) {
  const std::size_t d = 6, D = 4096;
  const FeatureMapSpec spec{KernelId::kGauss, D, d, 12};
  const FeatureMap fmap(spec);
  std::vector<double> x(d, 0.2), y(d, 0.2);
  const auto fx = fmap.features(x);
  double self = 0.0;
  for (double v : fx) self += v * v;
  EXPECT_NEAR(self, 1.0, 3.0 / std::sqrt(static_cast<double>(D)));

  // Pair at squared distance 1: kernel value e^-1.
  y[0] = x[0] + 1.0;
  const auto fy = fmap.features(y);
  double dot = 0.0;
  for (std::size_t i = 0; i < D; ++i) dot += fx[i] * fy[i];
  EXPECT_NEAR(dot, std::exp(-1.0), 3.0 / std::sqrt(static_cast<double>(D)));
}

TEST(KdeTest, ExpAndLaplaceSpectraReconstructTheirKernels) {
  const std::size_t d = 4, D = 8192;
  std::vector<double> x(d, 0.0), y(d, 0.0);
  y[1] = 0.7;
  y[3] = -0.4;
  for (auto kernel : {KernelId::kExp, KernelId::kLaplace}) {
    const FeatureMap fmap({kernel, D, d, 29});
    const auto fx = fmap.features(x);
    const auto fy = fmap.features(y);
    double dot = 0.0;
    for (std::size_t i = 0; i < D; ++i) dot += fx[i] * fy[i];
    const double truth = kernel_value(x, y, kernel);
    EXPECT_NEAR(dot, truth, 4.0 / std::sqrt(static_cast<double>(D)))
        << "kernel id " << static_cast<int>(kernel);
  }
}

TEST(KdeTest, FeaturesAreUniformlyBounded) {
  const std::size_t D = 64;
  const FeatureMap fmap({KernelId::kLaplace, D, 3, 7});
  RngStream rng(3, stream_id(StreamTag::kTest, 40));
  const double bound = std::sqrt(2.0 / static_cast<double>(D));
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x{rng.gaussian() * 10, rng.gaussian() * 10, rng.gaussian() * 10};
    for (double v : fmap.features(x)) EXPECT_LE(std::fabs(v), bound + 1e-15);
  }
}

TEST(KdeTest, BuildRefusesSmallDatasets) {
  const Matrix tiny = gaussian_cloud(10, 4, 1.0, 1);
  try {
    build_kde(tiny, KernelId::kGauss, 1.0, 0.1, false, 1);
    FAIL() << "expected refusal";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("need n >="), std::string::npos);
  }
}

TEST(KdeTest, PointMassKdeIsOneAtTheMass) {
  const std::size_t n = 128, d = 5;
  Matrix m(n, d);
  std::vector<double> c(d, 0.3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m.at(i, j) = c[j];
  const auto sk = build_kde(m, KernelId::kGauss, 1.0, 0.25, false, 3, /*noise_off=*/true);
  const double D = static_cast<double>(sk.fspec.num_features);
  EXPECT_NEAR(query_kde(sk, c), 1.0, 3.0 / std::sqrt(D));
}

TEST(KdeTest, FarQueryDecaysToZero) {
  const Matrix m = gaussian_cloud(300, 4, 0.5, 2);
  const auto sk = build_kde(m, KernelId::kExp, 1.0, 0.2, false, 5, true);
  std::vector<double> far(4, 50.0);
  EXPECT_NEAR(query_kde(sk, far), 0.0, 0.2);
}

TEST(KdeTest, ProjectionShrinksInternalDimension) {
  const double alpha = 0.2;
  const Matrix m = gaussian_cloud(256, 512, 0.3, 3);
  const auto sk = build_kde(m, KernelId::kGauss, 1.0, alpha, true, 7, true);
  ASSERT_TRUE(sk.projection.has_value());
  EXPECT_EQ(sk.fspec.input_dim, choose_kde_projection_dim(KernelId::kGauss, alpha, true));
  EXPECT_LT(sk.fspec.input_dim, 512u);
  // Laplace kernel never projects.
  const auto lk = build_kde(m, KernelId::kLaplace, 1.0, alpha, true, 7, true);
  EXPECT_FALSE(lk.projection.has_value());
  EXPECT_EQ(lk.fspec.input_dim, 512u);
}

TEST(KdeTest, QueryTracksOracleNoiseOn) {
  const std::size_t n = 2000, d = 8;
  const Matrix m = gaussian_cloud(n, d, 0.4, 4);
  const double alpha = 0.2;
  const auto sk = build_kde(m, KernelId::kGauss, 1.0, alpha, false, 11, false);
  RngStream qrng(77, stream_id(StreamTag::kTest, 41));
  double total = 0.0;
  const int queries = 40;
  for (int q = 0; q < queries; ++q) {
    std::vector<double> y(d);
    for (double& v : y) v = qrng.gaussian() * 0.4;
    total += std::fabs(query_kde(sk, y) - exact_kde(m, y, KernelId::kGauss));
  }
  EXPECT_LE(total / queries, alpha);
}

TEST(KdeTest, MoreFeaturesReduceError) {
  const std::size_t n = 1500, d = 6;
  const Matrix m = gaussian_cloud(n, d, 0.4, 5);
  RngStream qrng(78, stream_id(StreamTag::kTest, 42));
  std::vector<std::vector<double>> ys(30, std::vector<double>(d));
  for (auto& y : ys)
    for (double& v : y) v = qrng.gaussian() * 0.4;

  auto mean_err = [&](std::size_t D) {
    const auto sk = detail::build_kde_impl(m, KernelId::kGauss, 1.0, 0.2, std::nullopt, D, 21,
                                           /*noise_off=*/true, /*enforce_min_n=*/false);
    double e = 0.0;
    for (const auto& y : ys) e += std::fabs(query_kde(sk, y) - exact_kde(m, y, KernelId::kGauss));
    return e / ys.size();
  };
  EXPECT_LE(mean_err(4096), mean_err(256));
}

// Replace-one l1 sensitivity of the feature mean is at most 2*sqrt(2D)/n.
TEST(KdeTest, FeatureMeanSensitivityAudit) {
  RngStream rng(91, stream_id(StreamTag::kTest, 43));
  for (std::size_t n : {2u, 5u, 16u}) {
    for (std::size_t D : {8u, 64u}) {
      const FeatureMap fmap({KernelId::kExp, D, 3, 17});
      const double bound = 2.0 * std::sqrt(2.0 * D) / static_cast<double>(n);
      for (int rep = 0; rep < 40; ++rep) {
        Matrix pts(n, 3);
        for (double& v : pts.data) v = rng.gaussian();
        std::vector<double> mean(D, 0.0), moved_mean(D, 0.0), feat(D);
        for (std::size_t i = 0; i < n; ++i) {
          fmap.features(pts.row_span(i), feat);
          for (std::size_t k = 0; k < D; ++k) mean[k] += feat[k];
        }
        // Replace point 0.
        std::vector<double> other{rng.gaussian(), rng.gaussian(), rng.gaussian()};
        moved_mean = mean;
        fmap.features(pts.row_span(0), feat);
        for (std::size_t k = 0; k < D; ++k) moved_mean[k] -= feat[k];
        fmap.features(other, feat);
        for (std::size_t k = 0; k < D; ++k) moved_mean[k] += feat[k];
        double l1 = 0.0;
        for (std::size_t k = 0; k < D; ++k)
          l1 += std::fabs(mean[k] - moved_mean[k]) / static_cast<double>(n);
        EXPECT_LE(l1, bound);
      }
    }
  }
}

TEST(KdeTest, SketchIsObliviousOutsideTheMean) {
  // Feature frequencies/phases depend only on the seed: two sketches of
  // different datasets share them bit for bit.
  const Matrix a = gaussian_cloud(200, 4, 0.3, 6);
  const Matrix b = gaussian_cloud(200, 4, 0.9, 7);
  const auto sa = build_kde(a, KernelId::kGauss, 1.0, 0.25, false, 99, true);
  const auto sb = build_kde(b, KernelId::kGauss, 1.0, 0.25, false, 99, true);
  const auto fa = sa.feature_map().frequencies();
  const auto fb = sb.feature_map().frequencies();
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i], fb[i]);
}

TEST(KdeTest, RejectsUnsupportedKernels) {
  const Matrix m = gaussian_cloud(100, 4, 0.3, 8);
  EXPECT_THROW(build_kde(m, KernelId::kInv1pL2, 1.0, 0.25, false, 1), std::invalid_argument);
}

}  // namespace
}  // namespace dpsim
