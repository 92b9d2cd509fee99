#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsim/core.hpp"

namespace dpsim {

// ---------------------------------------------------------------------------
// Exact brute-force reference computations. Everything here is deterministic,
// RNG-free, and Kahan-summed so it stays more accurate than the structures it
// judges.
// ---------------------------------------------------------------------------

inline double point_distance(std::span<const double> x, std::span<const double> y,
                             DistanceFn fn, double p = 1.0) {
  if (x.size() != y.size()) throw std::invalid_argument("point_distance: dimension mismatch");
  KahanSum acc;
  switch (fn) {
    case DistanceFn::kL1:
      for (std::size_t j = 0; j < x.size(); ++j) acc.add(std::fabs(x[j] - y[j]));
      return acc.value();
    case DistanceFn::kL2:
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - y[j];
        acc.add(d * d);
      }
      return std::sqrt(acc.value());
    case DistanceFn::kL2Sq:
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - y[j];
        acc.add(d * d);
      }
      return acc.value();
    case DistanceFn::kLpP:
      if (!(p >= 1.0)) throw std::invalid_argument("point_distance: p must be >= 1");
      for (std::size_t j = 0; j < x.size(); ++j) acc.add(std::pow(std::fabs(x[j] - y[j]), p));
      return acc.value();
  }
  return 0.0;
}

// Exact sum_x f(x, y).
inline double exact_distance_sum(const Matrix& dataset, std::span<const double> y,
                                 DistanceFn fn, double p = 1.0) {
  KahanSum acc;
  for (std::size_t i = 0; i < dataset.rows; ++i) {
    acc.add(point_distance(dataset.row_span(i), y, fn, p));
  }
  return acc.value();
}

inline double kernel_value(std::span<const double> x, std::span<const double> y, KernelId k) {
  switch (k) {
    case KernelId::kGauss:
      return std::exp(-point_distance(x, y, DistanceFn::kL2Sq));
    case KernelId::kExp:
      return std::exp(-point_distance(x, y, DistanceFn::kL2));
    case KernelId::kLaplace:
      return std::exp(-point_distance(x, y, DistanceFn::kL1));
    case KernelId::kInv1pL2:
      return 1.0 / (1.0 + point_distance(x, y, DistanceFn::kL2));
    case KernelId::kInv1pL2sq:
      return 1.0 / (1.0 + point_distance(x, y, DistanceFn::kL2Sq));
    case KernelId::kInv1pL1:
      return 1.0 / (1.0 + point_distance(x, y, DistanceFn::kL1));
  }
  return 0.0;
}

// Exact (1/|X|) sum_x f(x, y).
inline double exact_kde(const Matrix& dataset, std::span<const double> y, KernelId k) {
  if (dataset.rows == 0) throw std::invalid_argument("exact_kde: empty dataset");
  KahanSum acc;
  for (std::size_t i = 0; i < dataset.rows; ++i) acc.add(kernel_value(dataset.row_span(i), y, k));
  return acc.value() / static_cast<double>(dataset.rows);
}

// ---------------------------------------------------------------------------
// Error reporting in (M, A) form: E|Z - Z'| <= (M-1) Z' + A
// ---------------------------------------------------------------------------

struct ErrorReport {
  std::vector<double> abs_errors;
  double mean_abs_error = 0.0;
  double mean_rel_error = 0.0;  // over truths > 0
  double fitted_m = 1.0;        // multiplicative factor M
  double fitted_a = 0.0;        // additive error A
};

// Fits |Z - Z'| ~ m*Z' + a with m, a >= 0 by least squares; negative
// coefficients are clamped and the remaining parameter refit.
inline ErrorReport error_report(std::span<const double> estimates,
                                std::span<const double> truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw std::invalid_argument("error_report: inputs must be equal-length and non-empty");
  ErrorReport rep;
  const std::size_t n = estimates.size();
  rep.abs_errors.resize(n);
  KahanSum abs_sum, rel_sum;
  std::size_t rel_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    rep.abs_errors[i] = std::fabs(estimates[i] - truths[i]);
    abs_sum.add(rep.abs_errors[i]);
    if (truths[i] > 0.0) {
      rel_sum.add(rep.abs_errors[i] / truths[i]);
      ++rel_count;
    }
  }
  rep.mean_abs_error = abs_sum.value() / static_cast<double>(n);
  rep.mean_rel_error = rel_count ? rel_sum.value() / static_cast<double>(rel_count) : 0.0;

  // Normal equations for e_i ~ m*t_i + a.
  double st = 0.0, stt = 0.0, se = 0.0, ste = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    st += truths[i];
    stt += truths[i] * truths[i];
    se += rep.abs_errors[i];
    ste += truths[i] * rep.abs_errors[i];
  }
  const double nn = static_cast<double>(n);
  const double det = nn * stt - st * st;
  double m = 0.0, a = 0.0;
  if (det > 1e-12 * nn * stt || (det > 0.0 && stt > 0.0)) {
    m = (nn * ste - st * se) / det;
    a = (se * stt - st * ste) / det;
  } else {
    a = se / nn;  // degenerate truths: constant fit only
  }
  if (m < 0.0) {
    m = 0.0;
    a = se / nn;
  }
  if (a < 0.0) {
    a = 0.0;
    m = (stt > 0.0) ? ste / stt : 0.0;
    if (m < 0.0) m = 0.0;
  }
  rep.fitted_m = 1.0 + m;
  rep.fitted_a = a;
  return rep;
}

}  // namespace dpsim
