#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/parallel.hpp"
#include "dpsim/projections.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// DP kernel density sketches: a Laplace-privatized random-feature mean.
//
// phi(x)_i = sqrt(2/D) * cos(<w_i, x> + b_i) with frequencies w_i drawn from
// the kernel's spectral law, so E<phi(x), phi(y)> = f(x, y). The released
// sketch is the feature mean plus per-coordinate Laplace noise at the audited
// replace-one l1 sensitivity 2*sqrt(2D)/n. Frequencies and phases depend only
// on the seed, never on the data.
// ---------------------------------------------------------------------------

struct FeatureMapSpec {
  KernelId kernel = KernelId::kGauss;
  std::size_t num_features = 0;  // D
  std::size_t input_dim = 0;
  std::uint64_t seed = 0;
};

// Materialized random Fourier feature map.
class FeatureMap {
 public:
  explicit FeatureMap(const FeatureMapSpec& spec) : spec_(spec) {
    if (spec.num_features == 0 || spec.input_dim == 0)
      throw std::invalid_argument("FeatureMap: dimensions must be positive");
    const std::size_t d = spec.input_dim;
    const std::size_t D = spec.num_features;
    freqs_.resize(D * d);
    phases_.resize(D);
    RngStream freq_rng(spec.seed, stream_id(StreamTag::kFeatureFreq));
    RngStream phase_rng(spec.seed, stream_id(StreamTag::kFeaturePhase));
    switch (spec.kernel) {
      case KernelId::kGauss:
        // exp(-||x-y||^2): Gaussian spectral law with per-coordinate std sqrt(2).
        for (double& v : freqs_) v = freq_rng.gaussian() * std::sqrt(2.0);
        break;
      case KernelId::kExp: {
        // exp(-||x-y||_2): radial multivariate Cauchy (Gaussian direction over
        // an independent half-normal amplitude).
        for (std::size_t i = 0; i < D; ++i) {
          double* row = freqs_.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) row[j] = freq_rng.gaussian();
          const double amp = std::fabs(freq_rng.gaussian());
          const double inv = 1.0 / std::max(amp, 1e-300);
          for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
        }
        break;
      }
      case KernelId::kLaplace:
        // exp(-||x-y||_1): independent standard Cauchy per coordinate.
        for (double& v : freqs_) v = freq_rng.cauchy();
        break;
      default:
        throw std::invalid_argument("FeatureMap: unsupported kernel id");
    }
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (double& b : phases_) b = phase_rng.uniform() * two_pi;
  }

  const FeatureMapSpec& spec() const { return spec_; }

  void features(std::span<const double> x, std::span<double> out) const {
    const std::size_t d = spec_.input_dim;
    const std::size_t D = spec_.num_features;
    if (x.size() != d || out.size() != D)
      throw std::invalid_argument("FeatureMap::features: dimension mismatch");
    const double scale = std::sqrt(2.0 / static_cast<double>(D));
    for (std::size_t i = 0; i < D; ++i) {
      const double* row = freqs_.data() + i * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += row[j] * x[j];
      out[i] = scale * std::cos(dot + phases_[i]);
    }
  }

  std::vector<double> features(std::span<const double> x) const {
    std::vector<double> out(spec_.num_features);
    features(x, out);
    return out;
  }

  std::span<const double> frequencies() const { return freqs_; }

 private:
  FeatureMapSpec spec_;
  std::vector<double> freqs_;   // D x d, row-major
  std::vector<double> phases_;  // D
};

inline std::vector<double> rff_features(const FeatureMapSpec& spec, std::span<const double> x) {
  return FeatureMap(spec).features(x);
}

struct DpKdeSketch {
  FeatureMapSpec fspec;
  std::optional<ProjectionSpec> projection;
  std::vector<double> noisy_mean_features;  // D
  std::size_t n = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  bool noise_off = false;

  // Materialized lazily; rebuilt from the specs after deserialization.
  mutable std::shared_ptr<const FeatureMap> fmap;
  mutable std::shared_ptr<const Projector> proj;

  const FeatureMap& feature_map() const {
    if (!fmap) fmap = std::make_shared<FeatureMap>(fspec);
    return *fmap;
  }
  const Projector* projector() const {
    if (!projection) return nullptr;
    if (!proj) proj = std::make_shared<Projector>(*projection);
    return proj.get();
  }
};

inline std::size_t kde_feature_count(double alpha) {
  return static_cast<std::size_t>(std::ceil(kKdeFeatureConst / (alpha * alpha)));
}

inline std::size_t kde_min_n(double alpha, double epsilon) {
  return static_cast<std::size_t>(std::ceil(kKdeMinNConst / (alpha * epsilon * epsilon)));
}

namespace detail {

// Builder shared by the public entry point and the smooth-kernel reduction
// (which applies its own projection and dataset-size gate).
inline DpKdeSketch build_kde_impl(const Matrix& dataset, KernelId kernel, double epsilon,
                                  double alpha, std::optional<ProjectionSpec> projection,
                                  std::size_t num_features, std::uint64_t seed, bool noise_off,
                                  bool enforce_min_n) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_kde: epsilon must be > 0");
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw std::invalid_argument("build_kde: alpha must be in (0, 1)");
  if (kernel != KernelId::kGauss && kernel != KernelId::kExp && kernel != KernelId::kLaplace)
    throw std::invalid_argument("build_kde: unsupported kernel id");
  if (dataset.rows == 0) throw std::invalid_argument("build_kde: empty dataset");
  if (enforce_min_n) {
    const std::size_t min_n = kde_min_n(alpha, epsilon);
    if (dataset.rows < min_n) {
      throw std::invalid_argument(
          "build_kde: dataset too small for the target accuracy: need n >= " +
          std::to_string(min_n) + " = " + std::to_string(kKdeMinNConst) +
          "/(alpha*eps^2), got n = " + std::to_string(dataset.rows));
    }
  }

  DpKdeSketch sk;
  sk.n = dataset.rows;
  sk.epsilon = epsilon;
  sk.alpha = alpha;
  sk.noise_off = noise_off;
  sk.projection = projection;

  const Matrix* points = &dataset;
  Matrix projected;
  if (projection) {
    Projector proj(*projection);
    projected = proj.apply_rows(dataset);
    points = &projected;
  }

  const std::size_t D = num_features;
  sk.fspec = FeatureMapSpec{kernel, D, points->cols, seed};
  FeatureMap fmap(sk.fspec);

  // Chunked feature-mean accumulation: per-chunk partials are combined in a
  // fixed order so the result is independent of the thread count.
  const std::size_t n = points->rows;
  const std::size_t chunk = 256;
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  std::vector<std::vector<double>> partials(num_chunks);
  parallel_for(num_chunks, [&](std::size_t ci) {
    const std::size_t begin = ci * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<double> acc(D, 0.0);
    std::vector<double> feat(D);
    for (std::size_t i = begin; i < end; ++i) {
      fmap.features(points->row_span(i), feat);
      for (std::size_t k = 0; k < D; ++k) acc[k] += feat[k];
    }
    partials[ci] = std::move(acc);
  }, 1);

  sk.noisy_mean_features.assign(D, 0.0);
  for (std::size_t k = 0; k < D; ++k) {
    KahanSum s;
    for (std::size_t ci = 0; ci < num_chunks; ++ci) s.add(partials[ci][k]);
    sk.noisy_mean_features[k] = s.value() / static_cast<double>(n);
  }

  if (!noise_off) {
    // Replace-one l1 sensitivity of the feature mean: 2*sqrt(2D)/n.
    const double sens = 2.0 * std::sqrt(2.0 * static_cast<double>(D)) / static_cast<double>(n);
    const double scale = sens / epsilon;
    RngStream rng(seed, stream_id(StreamTag::kFeatureNoise));
    for (double& v : sk.noisy_mean_features) v += rng.laplace(scale);
  }
  return sk;
}

}  // namespace detail

// Builds a DP-KDE sketch for exp(-||x-y||_2^2), exp(-||x-y||_2) or
// exp(-||x-y||_1). With use_projection, Gaussian/exponential kernels first
// project to choose_kde_projection_dim(alpha) dimensions (fast JL by default);
// there is no dimensionality reduction for the l1 kernel. Refuses datasets
// below the n >= kKdeMinNConst/(alpha*eps^2) utility gate.
inline DpKdeSketch build_kde(const Matrix& dataset, KernelId kernel, double epsilon, double alpha,
                             bool use_projection, std::uint64_t seed, bool noise_off = false,
                             ProjectionKind projection_kind = ProjectionKind::kFastJL,
                             std::size_t projection_dim_override = 0) {
  std::optional<ProjectionSpec> projection;
  if (use_projection && kernel != KernelId::kLaplace) {
    std::size_t k = projection_dim_override
                        ? projection_dim_override
                        : choose_kde_projection_dim(kernel, alpha,
                                                    projection_kind == ProjectionKind::kFastJL);
    if (k < dataset.cols) {
      projection = ProjectionSpec{projection_kind, dataset.cols, k, seed};
    }
  }
  return detail::build_kde_impl(dataset, kernel, epsilon, alpha, projection,
                                kde_feature_count(alpha), seed, noise_off,
                                /*enforce_min_n=*/true);
}

// KDE estimate at y (original dimension); clamped to a diagnostic range.
inline double query_kde(const DpKdeSketch& sk, std::span<const double> y) {
  std::vector<double> projected;
  std::span<const double> q = y;
  if (const Projector* proj = sk.projector()) {
    projected = proj->apply(y);
    q = projected;
  }
  std::vector<double> feat = sk.feature_map().features(q);
  double acc = 0.0;
  for (std::size_t k = 0; k < feat.size(); ++k) acc += feat[k] * sk.noisy_mean_features[k];
  return std::clamp(acc, -0.1, 1.1);
}

}  // namespace dpsim
