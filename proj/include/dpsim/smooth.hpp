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
#include "dpsim/kde.hpp"
#include "dpsim/parallel.hpp"
#include "dpsim/projections.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// Sparse exponential-sum approximation of 1/x:
//   1/x = Integral exp(-x e^s + s) ds,
// discretized by the trapezoid rule on a truncated s-range, then rescaled so
// g(x) = sum_j w_j exp(-t_j x) approximates 1/x to additive alpha for all
// x >= 1 with O(log(1/alpha)) terms. The construction runs a numeric
// sup-check over a geometric grid and rejects bad parameterizations.
// ---------------------------------------------------------------------------

struct ExpSumTerm {
  double weight = 0.0;  // w_j
  double rate = 0.0;    // t_j
};

struct ExpSumApprox {
  std::vector<ExpSumTerm> terms;
  double alpha = 0.0;

  double eval(double x) const {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.weight * std::exp(-t.rate * x);
    return acc;
  }
};

inline ExpSumApprox exp_sum_approx(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("exp_sum_approx: alpha must be in (0, 1]");

  // Approximate 1/x on [eps0, 1] to relative error rho, with margins split
  // across the two truncation tails and the discretization error, then rescale
  // g(x) = eps0' * f(eps0' * x) ... here directly: terms (a*h*e^{s_j}, a*e^{s_j})
  // with a the rescale factor chosen as eps0.
  const double eps0 = alpha / 2.0;
  const double rho = alpha / 2.0;
  const double s_max = std::log(std::log(3.0 / rho) / eps0);
  const double s_min = std::log(rho / 3.0);
  const double h = 9.8696044010893586 / std::log(30.0 / rho);  // pi^2 / ln(30/rho)
  const std::size_t count = static_cast<std::size_t>(std::ceil((s_max - s_min) / h)) + 1;

  ExpSumApprox g;
  g.alpha = alpha;
  g.terms.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    const double s = s_min + h * static_cast<double>(j);
    const double node = std::exp(s);
    g.terms.push_back(ExpSumTerm{eps0 * h * node, eps0 * node});
  }

  // Construction-time certificates.
  const double log_inv = std::max(std::log(1.0 / alpha), 1.0);
  const std::size_t max_terms =
      static_cast<std::size_t>(std::ceil(kExpSumMaxTermsPerLog * log_inv));
  if (g.terms.size() > max_terms) {
    throw std::runtime_error("exp_sum_approx: term count " + std::to_string(g.terms.size()) +
                             " exceeds the frozen bound " + std::to_string(max_terms));
  }
  const double coeff_bound = kExpSumCoeffBound / (alpha * log_inv);
  for (const auto& t : g.terms) {
    if (t.weight > coeff_bound || t.rate > coeff_bound)
      throw std::runtime_error("exp_sum_approx: coefficient bound violated");
    if (t.weight * std::exp(-t.rate) > kExpSumWeightDecayBound)
      throw std::runtime_error("exp_sum_approx: w*exp(-t) bound violated");
  }

  // Numeric sup-check on a geometric grid over [1, max(10/alpha^2, 1e4)].
  const double hi = std::max(10.0 / (alpha * alpha), 1e4);
  const std::size_t grid = 4096;
  double worst = 0.0, worst_x = 1.0;
  const double step = std::log(hi) / static_cast<double>(grid - 1);
  for (std::size_t i = 0; i < grid; ++i) {
    const double x = std::exp(step * static_cast<double>(i));
    const double err = std::fabs(g.eval(x) - 1.0 / x);
    if (err > worst) {
      worst = err;
      worst_x = x;
    }
  }
  if (worst > alpha) {
    throw std::runtime_error("exp_sum_approx: sup-check failed, |g(x)-1/x| = " +
                             std::to_string(worst) + " at x = " + std::to_string(worst_x));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Smooth-kernel KDE via the reduction
//   1/(1+h(x,y)) ~ sum_j [w_j e^{-t_j}] * (1/|X_j|) sum_{x in X_j} e^{-h(x, y_j)}
// with X_j the t_j-scaled dataset (sqrt(t_j) for the squared kernel). One
// exponential-family sub-sketch per term, each at eps/J.
// ---------------------------------------------------------------------------

struct SmoothKdeSketch {
  KernelId kernel = KernelId::kInv1pL2;
  ExpSumApprox approx;
  std::optional<ProjectionSpec> projection;  // shared by every sub-sketch
  std::vector<DpKdeSketch> subs;             // one per term, in term order
  std::size_t n = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  bool noise_off = false;

  mutable std::shared_ptr<const Projector> proj;
  const Projector* projector() const {
    if (!projection) return nullptr;
    if (!proj) proj = std::make_shared<Projector>(*projection);
    return proj.get();
  }
};

inline KernelId smooth_sub_kernel(KernelId kernel) {
  switch (kernel) {
    case KernelId::kInv1pL2:
      return KernelId::kExp;
    case KernelId::kInv1pL2sq:
      return KernelId::kGauss;
    case KernelId::kInv1pL1:
      return KernelId::kLaplace;
    default:
      throw std::invalid_argument("build_smooth_kde: unsupported kernel id");
  }
}

inline double smooth_dataset_scale(KernelId kernel, double rate) {
  return kernel == KernelId::kInv1pL2sq ? std::sqrt(rate) : rate;
}

inline SmoothKdeSketch build_smooth_kde(const Matrix& dataset, KernelId kernel, double epsilon,
                                        double alpha, std::uint64_t seed, bool noise_off = false,
                                        bool use_projection = true,
                                        ProjectionKind projection_kind = ProjectionKind::kFastJL) {
  const KernelId sub_kernel = smooth_sub_kernel(kernel);
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_smooth_kde: epsilon must be > 0");
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw std::invalid_argument("build_smooth_kde: alpha must be in (0, 1)");
  if (dataset.rows == 0) throw std::invalid_argument("build_smooth_kde: empty dataset");

  // Dataset-size gate with alpha demoted by the term count's log factor.
  const double alpha_eff = alpha / std::max(std::log(1.0 / alpha), 1.0);
  const std::size_t min_n = kde_min_n(alpha_eff, epsilon);
  if (dataset.rows < min_n) {
    throw std::invalid_argument(
        "build_smooth_kde: dataset too small for the target accuracy: need n >= " +
        std::to_string(min_n) + ", got n = " + std::to_string(dataset.rows));
  }

  SmoothKdeSketch sk;
  sk.kernel = kernel;
  sk.n = dataset.rows;
  sk.epsilon = epsilon;
  sk.alpha = alpha;
  sk.noise_off = noise_off;
  // Half the error budget goes to the exponential-sum approximation, the rest
  // to the sub-sketches.
  sk.approx = exp_sum_approx(alpha / 2.0);
  const std::size_t terms = sk.approx.terms.size();
  const double sub_epsilon = epsilon / static_cast<double>(terms);

  // No dimensionality reduction exists for the l1 case; for the l2 cases the
  // smooth-kernel bound allows k = kProjDimConst/alpha^2.
  const Matrix* base = &dataset;
  Matrix projected;
  if (use_projection && kernel != KernelId::kInv1pL1) {
    const std::size_t k = choose_kde_projection_dim(kernel, alpha, true);
    if (k < dataset.cols) {
      sk.projection = ProjectionSpec{projection_kind, dataset.cols, k, seed};
      Projector proj(*sk.projection);
      projected = proj.apply_rows(dataset);
      base = &projected;
    }
  }

  sk.subs.resize(terms);
  const std::size_t D = kde_feature_count(alpha);
  parallel_for(terms, [&](std::size_t j) {
    const double scale = smooth_dataset_scale(kernel, sk.approx.terms[j].rate);
    Matrix scaled = *base;
    for (double& v : scaled.data) v *= scale;
    sk.subs[j] = detail::build_kde_impl(scaled, sub_kernel, sub_epsilon, alpha,
                                        /*projection=*/std::nullopt, D,
                                        seed + stream_id(StreamTag::kSmooth, j + 1), noise_off,
                                        /*enforce_min_n=*/false);
  }, 1);
  return sk;
}

inline double query_smooth_kde(const SmoothKdeSketch& sk, std::span<const double> y) {
  std::vector<double> projected;
  std::span<const double> q = y;
  if (const Projector* proj = sk.projector()) {
    projected = proj->apply(y);
    q = projected;
  }
  std::vector<double> scaled(q.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < sk.subs.size(); ++j) {
    const auto& term = sk.approx.terms[j];
    const double s = smooth_dataset_scale(sk.kernel, term.rate);
    for (std::size_t i = 0; i < q.size(); ++i) scaled[i] = q[i] * s;
    acc += term.weight * std::exp(-term.rate) * query_kde(sk.subs[j], scaled);
  }
  return std::clamp(acc, -0.1, 1.1);
}

}  // namespace dpsim
