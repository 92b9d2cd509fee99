#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// l2^2 distance queries via noisy moments:
//   sum_x ||x-y||^2 = sum_x ||x - EX||^2 + n*||y - EX||^2
// Release a noisy centered second moment (eps/2, sensitivity audited at
// kL2sqScalarSens * R^2 * d) and a noisy mean (eps/2, per-coordinate scale
// (2Rd/n)/(eps/2)); queries then cost O(d) with no further privacy loss.
// ---------------------------------------------------------------------------

struct NoisyMoments {
  std::vector<double> noisy_mean;  // original units
  double noisy_s = 0.0;            // noised sum ||x - EX||^2, original units
  std::size_t n = 0;
  DomainPromise promise;
  double epsilon = 0.0;
  bool noise_off = false;
  std::size_t clip_count = 0;
};

inline NoisyMoments build_l2sq(const Matrix& dataset, double epsilon,
                               const DomainPromise& promise, std::uint64_t seed,
                               bool noise_off = false) {
  promise.validate();
  if (promise.kind != PromiseKind::kBox)
    throw std::invalid_argument("build_l2sq: promise must be a box");
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_l2sq: epsilon must be > 0");
  if (dataset.rows < 2)
    throw std::invalid_argument("build_l2sq: need n >= 2 (mean sensitivity blows up)");
  const std::size_t d = promise.dimension;
  if (dataset.cols != d)
    throw std::invalid_argument("build_l2sq: dataset dimension does not match promise");

  NoisyMoments m;
  m.n = dataset.rows;
  m.promise = promise;
  m.epsilon = epsilon;
  m.noise_off = noise_off;

  // Clip into the promise box; the promise is public so this costs nothing.
  Matrix clipped = dataset;
  const double r = promise.radius;
  for (double& v : clipped.data) {
    if (v < 0.0) {
      v = 0.0;
      ++m.clip_count;
    } else if (v > r) {
      v = r;
      ++m.clip_count;
    }
  }

  const double nn = static_cast<double>(m.n);
  m.noisy_mean.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    KahanSum col;
    for (std::size_t i = 0; i < m.n; ++i) col.add(clipped.at(i, j));
    m.noisy_mean[j] = col.value() / nn;
  }
  KahanSum s;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = clipped.at(i, j) - m.noisy_mean[j];
      s.add(dv * dv);
    }
  }
  m.noisy_s = s.value();

  if (!noise_off) {
    RngStream rng(seed, stream_id(StreamTag::kMoments));
    const double dd = static_cast<double>(d);
    const double scalar_scale = kL2sqScalarSens * r * r * dd / (epsilon / 2.0);
    m.noisy_s += rng.laplace(scalar_scale);
    const double mean_scale = (2.0 * r * dd / nn) / (epsilon / 2.0);
    for (std::size_t j = 0; j < d; ++j) m.noisy_mean[j] += rng.laplace(mean_scale);
  }
  return m;
}

inline double query_l2sq(const NoisyMoments& m, std::span<const double> y) {
  if (y.size() != m.noisy_mean.size())
    throw std::invalid_argument("query_l2sq: query dimension mismatch");
  KahanSum sq;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double dv = y[j] - m.noisy_mean[j];
    sq.add(dv * dv);
  }
  return m.noisy_s + static_cast<double>(m.n) * sq.value();
}

}  // namespace dpsim
