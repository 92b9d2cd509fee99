#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"
#include "dpsim/l2sq.hpp"
#include "dpsim/parallel.hpp"
#include "dpsim/projections.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// DP classifier: one noisy-moments structure per class, predict the class
// whose noisy mean is closest to the (identically projected and clipped)
// query. Classes disjointly partition the data, so each class receives the
// full budget and the union of releases stays (eps, delta)-DP.
// ---------------------------------------------------------------------------

struct DpClassifier {
  std::vector<int> labels;              // sorted unique labels
  std::vector<NoisyMoments> moments;    // parallel to labels
  std::optional<ProjectionSpec> projection;
  double clip = 1.0;                    // coordinates clipped to [-clip, clip]
  PrivacyBudget budget;
  std::size_t input_dim = 0;
  bool noise_off = false;

  mutable std::shared_ptr<const Projector> proj;
  const Projector* projector() const {
    if (!projection) return nullptr;
    if (!proj) proj = std::make_shared<Projector>(*projection);
    return proj.get();
  }
};

namespace detail {

// Projection + clip + shift into the [0, 2*clip] box shared by fit and predict.
inline std::vector<double> classifier_transform(const DpClassifier& c,
                                                std::span<const double> x) {
  std::vector<double> v;
  if (const Projector* proj = c.projector()) {
    v = proj->apply(x);
  } else {
    v.assign(x.begin(), x.end());
  }
  for (double& t : v) t = std::clamp(t, -c.clip, c.clip) + c.clip;
  return v;
}

}  // namespace detail

// Fits one full-budget noisy-moments structure per class. projection_dim == 0
// disables the (public, privacy-free) JL step. The clipping threshold is a
// hyper-parameter; tuning it on the data is not accounted for.
inline DpClassifier fit_classifier(const Matrix& points, std::span<const int> labels,
                                   const PrivacyBudget& budget, double clip,
                                   std::size_t projection_dim, std::uint64_t seed,
                                   bool noise_off = false) {
  budget.validate();
  if (points.rows != labels.size())
    throw std::invalid_argument("fit_classifier: points/labels size mismatch");
  if (points.rows == 0) throw std::invalid_argument("fit_classifier: empty dataset");
  if (!(clip > 0.0)) throw std::invalid_argument("fit_classifier: clip must be > 0");

  DpClassifier c;
  c.budget = budget;
  c.clip = clip;
  c.input_dim = points.cols;
  c.noise_off = noise_off;
  if (projection_dim > 0) {
    c.projection = ProjectionSpec{ProjectionKind::kGaussianJL, points.cols, projection_dim, seed};
  }

  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 2)
      throw std::invalid_argument("fit_classifier: class " + std::to_string(label) +
                                  " has fewer than 2 points");
    c.labels.push_back(label);
  }

  const std::size_t dim = projection_dim > 0 ? projection_dim : points.cols;
  const DomainPromise box{PromiseKind::kBox, 2.0 * clip, dim};
  c.moments.resize(c.labels.size());
  parallel_for(c.labels.size(), [&](std::size_t ci) {
    const auto& idx = by_label.at(c.labels[ci]);
    Matrix cls(idx.size(), dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto v = detail::classifier_transform(c, points.row_span(idx[r]));
      std::copy(v.begin(), v.end(), cls.row(r));
    }
    // Disjoint partition: every class spends the full epsilon.
    c.moments[ci] = build_l2sq(cls, budget.epsilon, box,
                               seed + stream_id(StreamTag::kClassifier, ci + 1), noise_off);
  });
  return c;
}

// Nearest noisy mean; ties break toward the lowest label id.
inline int predict(const DpClassifier& c, std::span<const double> y) {
  if (y.size() != c.input_dim) throw std::invalid_argument("predict: query dimension mismatch");
  const std::vector<double> q = detail::classifier_transform(c, y);
  int best_label = c.labels.front();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci < c.labels.size(); ++ci) {
    const auto& mean = c.moments[ci].noisy_mean;
    double dist = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double d = q[j] - mean[j];
      dist += d * d;
    }
    if (dist < best) {
      best = dist;
      best_label = c.labels[ci];
    }
  }
  return best_label;
}

}  // namespace dpsim
