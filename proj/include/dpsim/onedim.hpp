#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// Noisy binary-tree histogram over [0, 1]
//
// Leaves are the n+1 integer multiples of 1/n, padded to a power of two so
// every interval has an exact dyadic decomposition. Internal nodes store the
// sum of their children (pre-noise); independent Laplace(eta) noise is added
// to every node, eta = 2*(depth+1)/eps. Replacing one data point changes two
// leaf-to-root paths by 1 each, so the l1 sensitivity is 2*(depth+1).
// ---------------------------------------------------------------------------

struct NoisyTree {
  std::size_t n = 0;       // dataset size
  std::size_t grid = 1;    // n+1 usable leaf positions (multiples of 1/n)
  std::size_t leaves = 1;  // grid padded to a power of two
  int depth = 0;           // log2(leaves)
  std::vector<double> node_values;  // heap order, size 2*leaves - 1
  double eta = 0.0;
  double epsilon = 0.0;
  bool noise_off = false;

  std::size_t node_count() const { return 2 * leaves - 1; }
};

// Nearest multiple of 1/n with ties rounding up, as a leaf index in [0, n].
inline std::size_t grid_index(std::size_t n, double v) {
  if (n == 0) return 0;
  const double scaled = v * static_cast<double>(n);
  double idx = std::floor(scaled + 0.5);
  if (idx < 0.0) idx = 0.0;
  const double top = static_cast<double>(n);
  if (idx > top) idx = top;
  return static_cast<std::size_t>(idx);
}

inline NoisyTree build_tree(std::span<const double> values01, double epsilon, RngStream rng,
                            bool noise_off = false) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_tree: epsilon must be > 0");
  NoisyTree t;
  t.n = values01.size();
  t.grid = t.n + 1;
  t.leaves = std::bit_ceil(t.grid);
  t.depth = std::countr_zero(t.leaves);
  t.epsilon = epsilon;
  t.noise_off = noise_off;
  t.eta = 2.0 * static_cast<double>(t.depth + 1) / epsilon;
  t.node_values.assign(t.node_count(), 0.0);

  const std::size_t leaf_base = t.leaves - 1;
  for (double v : values01) {
    t.node_values[leaf_base + grid_index(t.n, v)] += 1.0;
  }
  // Internal nodes: sum of children, bottom-up.
  for (std::size_t i = leaf_base; i-- > 0;) {
    t.node_values[i] = t.node_values[2 * i + 1] + t.node_values[2 * i + 2];
  }
  if (!noise_off) {
    for (double& nv : t.node_values) nv += rng.laplace(t.eta);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Interval queries (canonical dyadic decomposition)
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;  // half-open [lo, hi)
};

namespace detail {

// Accumulates the canonical cover of leaf range [qlo, qhi) starting from
// `node` spanning [node_lo, node_hi). At most two nodes per level are taken.
inline void cover_sum(const NoisyTree& t, std::size_t node, std::size_t node_lo,
                      std::size_t node_hi, std::size_t qlo, std::size_t qhi, double& acc,
                      std::vector<std::size_t>* visited) {
  if (qhi <= node_lo || node_hi <= qlo) return;
  if (qlo <= node_lo && node_hi <= qhi) {
    acc += t.node_values[node];
    if (visited) visited->push_back(node);
    return;
  }
  const std::size_t mid = node_lo + (node_hi - node_lo) / 2;
  cover_sum(t, 2 * node + 1, node_lo, mid, qlo, qhi, acc, visited);
  cover_sum(t, 2 * node + 2, mid, node_hi, qlo, qhi, acc, visited);
}

}  // namespace detail

// Sum of stored node values over leaf indices [lo_idx, hi_idx), clamped to the
// usable grid. `visited` (optional, test hook) collects the node ids read.
inline double noisy_count_indices(const NoisyTree& t, std::size_t lo_idx, std::size_t hi_idx,
                                  std::vector<std::size_t>* visited = nullptr) {
  hi_idx = std::min(hi_idx, t.grid);
  if (lo_idx >= hi_idx) return 0.0;
  double acc = 0.0;
  detail::cover_sum(t, 0, 0, t.leaves, lo_idx, hi_idx, acc, visited);
  return acc;
}

// Interval query with real endpoints: endpoints round to the nearest grid
// multiple (ties up). hi may be widened past 1 to include the grid point 1.
inline double noisy_count(const NoisyTree& t, const Interval& q,
                          std::vector<std::size_t>* visited = nullptr) {
  if (!(q.lo <= q.hi)) throw std::invalid_argument("noisy_count: interval must have lo <= hi");
  if (t.n == 0) return noisy_count_indices(t, 0, 0, visited);
  const double nn = static_cast<double>(t.n);
  const auto clamp_idx = [&](double raw) {
    double idx = std::floor(raw * nn + 0.5);
    if (idx < 0.0) idx = 0.0;
    const double top = static_cast<double>(t.grid);
    if (idx > top) idx = top;
    return static_cast<std::size_t>(idx);
  };
  return noisy_count_indices(t, clamp_idx(q.lo), clamp_idx(q.hi), visited);
}

// ---------------------------------------------------------------------------
// Distance queries
// ---------------------------------------------------------------------------

namespace detail {

// Shared core for the l1 and lp^p one-dimensional queries. Works entirely in
// leaf-index space: geometric interval bounds b_j ~ n/(1+a)^j are rounded once
// so consecutive intervals stay contiguous and disjoint.
inline double lp_query_core(const NoisyTree& t, double y, double alpha, double p, double scale,
                            std::vector<std::size_t>* visited) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("distance_query: alpha must be in (0, 1)");
  if (!(p >= 1.0)) throw std::invalid_argument("distance_query: p must be >= 1");

  // Out-of-domain query: clamp to the boundary and correct by n*dist^p
  // (exact for p = 1 since all data lies inside [0, 1]).
  double correction = 0.0;
  if (y < 0.0) {
    correction = static_cast<double>(t.n) * std::pow(-y, p);
    y = 0.0;
  } else if (y > 1.0) {
    correction = static_cast<double>(t.n) * std::pow(y - 1.0, p);
    y = 1.0;
  }
  if (t.n == 0) return correction * std::pow(scale, p);

  const double a = alpha / p;
  const std::size_t c = grid_index(t.n, y);

  // J chosen so the innermost untruncated interval is narrower than one grid
  // step; anything closer contributes 0 (absorbed in the additive slack).
  const double nn = static_cast<double>(t.n);
  const std::size_t J =
      (t.n <= 1) ? 0 : static_cast<std::size_t>(std::ceil(std::log(nn) / std::log1p(a)));

  // b[j] = ceil(n/(1+a)^j): interval j then covers exactly the grid offsets o
  // with (1+a)^-(j+1) <= o/n < (1+a)^-j, so each counted point is weighted by
  // at most (1+a) times its rounded distance. b[0] is widened by one slot so a
  // point at distance exactly 1 (weight 1) is still counted.
  std::vector<std::size_t> b(J + 2);
  b[0] = t.n + 1;
  for (std::size_t j = 1; j <= J + 1; ++j) {
    const double raw = nn * std::pow(1.0 + a, -static_cast<double>(j));
    std::size_t v = static_cast<std::size_t>(std::ceil(raw));
    if (v < 1) v = 1;
    b[j] = std::min(v, b[j - 1]);
  }

  double acc = 0.0;
  for (std::size_t j = 0; j <= J; ++j) {
    const std::size_t lo_off = b[j + 1];
    const std::size_t hi_off = b[j];
    if (lo_off >= hi_off) continue;
    const double weight = std::pow(std::pow(1.0 + a, -static_cast<double>(j)), p);
    // Right of y: offsets [lo_off, hi_off).
    double count = noisy_count_indices(t, c + lo_off, c + hi_off, visited);
    // Left of y, mirrored: offsets (-hi_off, -lo_off].
    const std::size_t left_hi = (c + 1 >= lo_off) ? (c + 1 - lo_off) : 0;
    const std::size_t left_lo = (c + 1 >= hi_off) ? (c + 1 - hi_off) : 0;
    if (c + 1 >= lo_off && left_lo < left_hi) {
      count += noisy_count_indices(t, left_lo, left_hi, visited);
    }
    acc += count * weight;
  }
  return (acc + correction) * std::pow(scale, p);
}

}  // namespace detail

// Approximates sum_x |x - y| for a tree over normalized data; the result is
// multiplied back by the recorded domain scale.
inline double distance_query(const NoisyTree& t, double y, double alpha, double scale = 1.0,
                             std::vector<std::size_t>* visited = nullptr) {
  return detail::lp_query_core(t, y, alpha, 1.0, scale, visited);
}

// Approximates sum_x |x - y|^p; degenerates to distance_query bit-for-bit at
// p = 1. The answer scales by scale^p.
inline double lp_distance_query(const NoisyTree& t, double y, double alpha, double p,
                                double scale = 1.0,
                                std::vector<std::size_t>* visited = nullptr) {
  return detail::lp_query_core(t, y, alpha, p, scale, visited);
}

}  // namespace dpsim
