#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/parallel.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// Oblivious linear maps. All of them are functions of (kind, dims, seed) only
// and never look at data, so publishing them costs no privacy.
// ---------------------------------------------------------------------------

enum class ProjectionKind { kGaussianJL, kFastJL, kL2ToL1 };

struct ProjectionSpec {
  ProjectionKind kind = ProjectionKind::kGaussianJL;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::uint64_t seed = 0;

  bool operator==(const ProjectionSpec&) const = default;
};

// Materialized projection. GaussianJL and L2ToL1 hold a dense k x d matrix;
// FastJL holds the sign flips and sampled Hadamard rows.
class Projector {
 public:
  explicit Projector(const ProjectionSpec& spec) : spec_(spec) {
    if (spec.in_dim == 0 || spec.out_dim == 0)
      throw std::invalid_argument("Projector: dimensions must be positive");
    RngStream rng(spec.seed, stream_id(StreamTag::kProjection));
    switch (spec.kind) {
      case ProjectionKind::kGaussianJL: {
        const double s = 1.0 / std::sqrt(static_cast<double>(spec.out_dim));
        matrix_.resize(spec.out_dim * spec.in_dim);
        for (double& v : matrix_) v = rng.gaussian() * s;
        break;
      }
      case ProjectionKind::kL2ToL1: {
        const double beta = std::sqrt(2.0 / 3.14159265358979323846);
        const double s = 1.0 / (beta * static_cast<double>(spec.out_dim));
        matrix_.resize(spec.out_dim * spec.in_dim);
        for (double& v : matrix_) v = rng.gaussian() * s;
        break;
      }
      case ProjectionKind::kFastJL: {
        padded_ = std::bit_ceil(std::max<std::size_t>(spec.in_dim, 1));
        signs_.resize(padded_);
        for (auto& s : signs_) s = (rng.next_u64() & 1) ? 1.0 : -1.0;
        rows_.resize(spec.out_dim);
        if (spec.out_dim <= padded_) {
          // Sample without replacement (partial Fisher-Yates).
          std::vector<std::uint32_t> pool(padded_);
          std::iota(pool.begin(), pool.end(), 0u);
          for (std::size_t i = 0; i < spec.out_dim; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.next_below(padded_ - i));
            std::swap(pool[i], pool[j]);
            rows_[i] = pool[i];
          }
        } else {
          for (auto& r : rows_) r = static_cast<std::uint32_t>(rng.next_below(padded_));
        }
        break;
      }
    }
  }

  const ProjectionSpec& spec() const { return spec_; }

  void apply(std::span<const double> x, std::span<double> out) const {
    if (x.size() != spec_.in_dim || out.size() != spec_.out_dim)
      throw std::invalid_argument("Projector::apply: dimension mismatch");
    if (spec_.kind == ProjectionKind::kFastJL) {
      std::vector<double> buf(padded_, 0.0);
      for (std::size_t j = 0; j < x.size(); ++j) buf[j] = x[j] * signs_[j];
      // In-place unnormalized Walsh-Hadamard transform.
      for (std::size_t len = 1; len < padded_; len <<= 1) {
        for (std::size_t i = 0; i < padded_; i += len << 1) {
          for (std::size_t j = i; j < i + len; ++j) {
            const double u = buf[j];
            const double v = buf[j + len];
            buf[j] = u + v;
            buf[j + len] = u - v;
          }
        }
      }
      const double s = 1.0 / std::sqrt(static_cast<double>(spec_.out_dim));
      for (std::size_t i = 0; i < spec_.out_dim; ++i) out[i] = buf[rows_[i]] * s;
      return;
    }
    const double* m = matrix_.data();
    for (std::size_t i = 0; i < spec_.out_dim; ++i) {
      const double* row = m + i * spec_.in_dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < spec_.in_dim; ++j) acc += row[j] * x[j];
      out[i] = acc;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(spec_.out_dim);
    apply(x, out);
    return out;
  }

  Matrix apply_rows(const Matrix& points) const {
    if (points.cols != spec_.in_dim)
      throw std::invalid_argument("Projector::apply_rows: dimension mismatch");
    Matrix out(points.rows, spec_.out_dim);
    parallel_for(points.rows, [&](std::size_t i) { apply(points.row_span(i), out.row_span(i)); });
    return out;
  }

  // Test hook: the materialized dense coefficients (empty for FastJL).
  std::span<const double> dense_coefficients() const { return matrix_; }

 private:
  ProjectionSpec spec_;
  std::vector<double> matrix_;        // dense kinds
  std::vector<double> signs_;         // fast JL
  std::vector<std::uint32_t> rows_;   // fast JL
  std::size_t padded_ = 0;
};

inline std::vector<double> apply_projection(const ProjectionSpec& spec,
                                            std::span<const double> x) {
  return Projector(spec).apply(x);
}

// ---------------------------------------------------------------------------
// Projection dimension for KDE sketches
// ---------------------------------------------------------------------------

// Output dimension preserving KDE values to additive alpha (Gaussian and
// exponential kernels) or relative alpha (the smooth 1/(1+h) family).
inline std::size_t choose_kde_projection_dim(KernelId kernel, double alpha, bool fast = true) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("choose_kde_projection_dim: alpha must be in (0, 1)");
  const double log_term = std::log(1.0 / alpha);
  double k = 0.0;
  if (kernel_is_smooth(kernel)) {
    k = kProjDimConst / (alpha * alpha);
  } else if (fast) {
    k = kProjDimConst * log_term * log_term / (alpha * alpha);
  } else {
    k = kProjDimConst * log_term / (alpha * alpha);
  }
  const auto rounded = static_cast<std::size_t>(std::llround(k));
  return std::max(kProjDimFloor, rounded);
}

// ---------------------------------------------------------------------------
// l2 -> l1 dataset embedding
// ---------------------------------------------------------------------------

struct EmbeddedDataset {
  Matrix points;             // embedded, clipped, shifted into [0, 2C]^k
  ProjectionSpec spec;       // the public map T
  double clip = 0.0;         // C: pre-shift coordinates clipped to [-C, C]
  DomainPromise box;         // box promise for the l1 machinery
  std::size_t clip_count = 0;
};

inline std::size_t embed_l2_dimension(std::size_t n, double alpha) {
  const double nn = static_cast<double>(std::max<std::size_t>(n, 2));
  const double k = kProjDimConst * std::log(nn) * std::log(1.0 / alpha) / (alpha * alpha);
  return std::max(kProjDimFloor, static_cast<std::size_t>(std::llround(k)));
}

inline double embed_l2_clip(double radius, std::size_t n, std::size_t k) {
  const double nk = static_cast<double>(std::max<std::size_t>(n, 2)) * static_cast<double>(k);
  return kEmbedClipConst * radius * std::sqrt(std::log(nk)) / static_cast<double>(k);
}

// Applies the same public map to a query point; must match the dataset path.
inline std::vector<double> embed_l2_point(const Projector& proj, double clip,
                                          std::span<const double> x,
                                          std::size_t* clip_count = nullptr) {
  std::vector<double> out = proj.apply(x);
  for (double& v : out) {
    if (v < -clip) {
      v = -clip;
      if (clip_count) ++*clip_count;
    } else if (v > clip) {
      v = clip;
      if (clip_count) ++*clip_count;
    }
    v += clip;
  }
  return out;
}

// Embeds an l2-ball dataset into an l1 box: T(x) per Gaussian sums scaled by
// 1/(beta*k), coordinates clipped to [-C, C] on the public promise only, then
// shifted to [0, 2C].
inline EmbeddedDataset embed_l2_dataset(const Matrix& dataset, double alpha,
                                        const DomainPromise& promise, std::uint64_t seed) {
  promise.validate();
  if (promise.kind != PromiseKind::kL2Ball)
    throw std::invalid_argument("embed_l2_dataset: promise must be an l2 ball");
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw std::invalid_argument("embed_l2_dataset: alpha must be in (0, 1)");
  EmbeddedDataset out;
  const std::size_t k = embed_l2_dimension(dataset.rows, alpha);
  out.spec = ProjectionSpec{ProjectionKind::kL2ToL1, promise.dimension, k, seed};
  out.clip = embed_l2_clip(promise.radius, dataset.rows, k);
  out.box = DomainPromise{PromiseKind::kBox, 2.0 * out.clip, k};
  Projector proj(out.spec);
  out.points = Matrix(dataset.rows, k);
  std::vector<std::size_t> clips(dataset.rows, 0);
  parallel_for(dataset.rows, [&](std::size_t i) {
    auto e = embed_l2_point(proj, out.clip, dataset.row_span(i), &clips[i]);
    std::copy(e.begin(), e.end(), out.points.row(i));
  });
  for (auto c : clips) out.clip_count += c;
  return out;
}

}  // namespace dpsim
