#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/onedim.hpp"
#include "dpsim/parallel.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// d-dimensional l1 / lp^p distance queries: one noisy tree per coordinate,
// budget split across trees (eps/d for pure DP, the advanced-composition root
// for delta > 0). The trees use independent RNG streams so coordinate builds
// parallelize and the post-noise errors are independent across coordinates.
// ---------------------------------------------------------------------------

struct L1Structure {
  std::vector<NoisyTree> trees;
  PrivacyBudget budget;
  double per_tree_epsilon = 0.0;
  DomainPromise promise;
  double p = 1.0;
  double alpha = 0.1;
  std::size_t n = 0;
  std::size_t clip_count = 0;
  std::uint64_t seed = 0;
  bool noise_off = false;
};

inline L1Structure build_l1(const Matrix& dataset, const PrivacyBudget& budget, double alpha,
                            const DomainPromise& promise, double p, std::uint64_t seed,
                            bool noise_off = false) {
  budget.validate();
  promise.validate();
  if (promise.kind != PromiseKind::kBox)
    throw std::invalid_argument("build_l1: promise must be a box");
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw std::invalid_argument("build_l1: alpha must be in (0, 1)");
  if (!(p >= 1.0)) throw std::invalid_argument("build_l1: p must be >= 1");
  const std::size_t d = promise.dimension;
  if (dataset.rows > 0 && dataset.cols != d)
    throw std::invalid_argument("build_l1: dataset dimension does not match promise");

  L1Structure s;
  s.budget = budget;
  s.promise = promise;
  s.p = p;
  s.alpha = alpha;
  s.n = dataset.rows;
  s.seed = seed;
  s.noise_off = noise_off;
  s.per_tree_epsilon =
      budget.pure() ? budget_split_pure(budget, d) : budget_split_advanced(budget, d);

  NormalizedData norm = normalize_domain(dataset, promise);
  s.clip_count = norm.clip_count;

  s.trees.resize(d);
  parallel_for(d, [&](std::size_t j) {
    std::vector<double> column(norm.points.rows);
    for (std::size_t i = 0; i < norm.points.rows; ++i) column[i] = norm.points.at(i, j);
    s.trees[j] = build_tree(column, s.per_tree_epsilon,
                            RngStream(seed, stream_id(StreamTag::kTree, j)), noise_off);
  });
  return s;
}

// Sum over coordinates of the one-dimensional query, each scaled back by R^p.
inline double query_lpp(const L1Structure& s, std::span<const double> y, double p) {
  if (y.size() != s.promise.dimension)
    throw std::invalid_argument("query_lpp: query dimension mismatch");
  if (p != s.p) throw std::invalid_argument("query_lpp: p does not match the built structure");
  const double r = s.promise.radius;
  KahanSum acc;
  for (std::size_t j = 0; j < s.trees.size(); ++j) {
    acc.add(lp_distance_query(s.trees[j], y[j] / r, s.alpha, p, r));
  }
  return acc.value();
}

inline double query_l1(const L1Structure& s, std::span<const double> y) {
  return query_lpp(s, y, 1.0);
}

}  // namespace dpsim
