#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpsim {

// ---------------------------------------------------------------------------
// Frozen mechanism constants. These are calibrated once by the Monte-Carlo
// audits in the test suite and must not be tuned per run.
// ---------------------------------------------------------------------------

// Feature count for a KDE sketch: D = ceil(kKdeFeatureConst / alpha^2).
inline constexpr double kKdeFeatureConst = 8.0;
// Minimum dataset size gate for KDE builds: n >= kKdeMinNConst / (alpha * eps^2).
inline constexpr double kKdeMinNConst = 4.0;
// Projection-dimension constant for choose_kde_projection_dim.
inline constexpr double kProjDimConst = 8.0;
// Minimum projection dimension.
inline constexpr std::size_t kProjDimFloor = 8;
// Coordinate clip for the l2->l1 embedding: C = kEmbedClipConst*R*sqrt(ln(nk))/k.
inline constexpr double kEmbedClipConst = 4.0;
// Audited replace-one sensitivity bound for the centered second moment:
// |delta s| <= kL2sqScalarSens * R^2 * d (exhaustively checked in tests).
inline constexpr double kL2sqScalarSens = 2.0;
// Exponential-sum approximation bounds (checked at construction).
inline constexpr double kExpSumMaxTermsPerLog = 25.0;
inline constexpr double kExpSumCoeffBound = 8.0;  // w_j, t_j <= bound/(a*log(1/a))
inline constexpr double kExpSumWeightDecayBound = 2.0;  // w_j * exp(-t_j) <= bound

// ---------------------------------------------------------------------------
// Privacy budget
// ---------------------------------------------------------------------------

struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 0.0;  // delta == 0 denotes pure DP

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("PrivacyBudget: epsilon must be > 0");
    if (!(delta >= 0.0) || delta >= 1.0)
      throw std::invalid_argument("PrivacyBudget: delta must be in [0, 1)");
  }
  bool pure() const { return delta == 0.0; }
};

// Splits a pure budget across k independent mechanisms: k copies of eps/k
// compose back to eps.
inline double budget_split_pure(const PrivacyBudget& total, std::size_t k) {
  total.validate();
  if (total.delta != 0.0)
    throw std::invalid_argument("budget_split_pure: delta != 0, use budget_split_advanced");
  if (k == 0) throw std::invalid_argument("budget_split_pure: k must be positive");
  return total.epsilon / static_cast<double>(k);
}

// Per-part epsilon under advanced composition. Solves
//   k*e0^2/2 + e0*sqrt(2k*ln(1/delta)) = eps
// for e0, so that k independent e0-DP mechanisms compose to (eps, delta)-DP.
inline double budget_split_advanced(const PrivacyBudget& total, std::size_t k) {
  total.validate();
  if (total.delta <= 0.0)
    throw std::invalid_argument("budget_split_advanced: delta must be in (0, 1)");
  if (k == 0) throw std::invalid_argument("budget_split_advanced: k must be positive");
  const double kk = static_cast<double>(k);
  const double s = std::sqrt(2.0 * kk * std::log(1.0 / total.delta));
  return (-s + std::sqrt(s * s + 2.0 * kk * total.epsilon)) / kk;
}

// Total epsilon spent by k independent e0-DP mechanisms under advanced
// composition (the audit direction of budget_split_advanced).
inline double advanced_composition_total(double e0, double delta, std::size_t k) {
  const double kk = static_cast<double>(k);
  return kk * e0 * e0 / 2.0 + e0 * std::sqrt(2.0 * kk * std::log(1.0 / delta));
}

// ---------------------------------------------------------------------------
// Domain promise
// ---------------------------------------------------------------------------

enum class PromiseKind { kBox, kL2Ball };

// Public domain promise. kBox: every coordinate lies in [0, R]. kL2Ball: the
// l2 norm of every point is at most R. Out-of-promise data is clipped, never
// rejected; privacy must hold regardless of the data.
struct DomainPromise {
  PromiseKind kind = PromiseKind::kBox;
  double radius = 1.0;
  std::size_t dimension = 1;

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("DomainPromise: radius must be > 0");
    if (dimension == 0) throw std::invalid_argument("DomainPromise: dimension must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Kernels and distance functions
// ---------------------------------------------------------------------------

enum class KernelId {
  kGauss,      // exp(-||x-y||_2^2)
  kExp,        // exp(-||x-y||_2)
  kLaplace,    // exp(-||x-y||_1)
  kInv1pL2,    // 1/(1+||x-y||_2)
  kInv1pL2sq,  // 1/(1+||x-y||_2^2)
  kInv1pL1,    // 1/(1+||x-y||_1)
};

enum class DistanceFn { kL1, kL2, kL2Sq, kLpP };

inline bool kernel_is_smooth(KernelId k) {
  return k == KernelId::kInv1pL2 || k == KernelId::kInv1pL2sq || k == KernelId::kInv1pL1;
}

// ---------------------------------------------------------------------------
// Seeded randomness streams
// ---------------------------------------------------------------------------

// Stream-id layout: a small module tag in the high bits plus an index, so
// sub-structures built in parallel draw from disjoint deterministic streams.
enum class StreamTag : std::uint64_t {
  kTree = 1,
  kTreeNoise = 2,
  kProjection = 3,
  kFeatureFreq = 4,
  kFeaturePhase = 5,
  kFeatureNoise = 6,
  kMoments = 7,
  kClassifier = 8,
  kSmooth = 9,
  kEval = 10,
  kTest = 15,
};

inline std::uint64_t stream_id(StreamTag tag, std::uint64_t index = 0) {
  return (static_cast<std::uint64_t>(tag) << 32) | (index & 0xffffffffULL);
}

// Counter-based generator (splitmix64): the state advances by a fixed gamma
// and each output is a bijective mix of the state. (seed, stream) fully
// determines the sequence, bit-exactly on every platform.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : state_(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0xbf58476d1ce4e5b9ULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (pair cached).
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
  }

  // Standard Cauchy.
  double cauchy() {
    return std::tan(3.14159265358979323846 * (uniform() - 0.5));
  }

  // Laplace(0, b) by inverting the CDF.
  double laplace(double b) {
    if (!(b > 0.0)) throw std::invalid_argument("laplace: scale must be > 0");
    return laplace_from_uniform(b, uniform());
  }

  std::uint64_t next_below(std::uint64_t bound) {
    // Rejection-free modulo is fine here; bound is tiny relative to 2^64.
    return next_u64() % bound;
  }

  static double laplace_from_uniform(double b, double u) {
    const double c = u - 0.5;
    const double s = (c > 0.0) ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
    return -b * s * std::log(1.0 - 2.0 * std::fabs(c));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline double sample_laplace(double b, RngStream& rng) { return rng.laplace(b); }

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles (the dataset container)
// ---------------------------------------------------------------------------

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }
  std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// ---------------------------------------------------------------------------
// Kahan (compensated) summation
// ---------------------------------------------------------------------------

struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// ---------------------------------------------------------------------------
// Domain normalization
// ---------------------------------------------------------------------------

struct NormalizedData {
  Matrix points;           // scaled into [0,1]^d (box promise)
  double scale = 1.0;      // multiply answers back by scale (or scale^p)
  std::size_t clip_count = 0;  // coordinates clipped to the promise boundary
};

// Scales a box-promise dataset into [0,1]^d. Out-of-promise coordinates are
// clipped to the boundary first; clipping is silent but counted.
inline NormalizedData normalize_domain(const Matrix& dataset, const DomainPromise& promise) {
  promise.validate();
  if (dataset.rows > 0 && dataset.cols != promise.dimension)
    throw std::invalid_argument("normalize_domain: dataset dimension does not match promise");
  NormalizedData out;
  out.points = dataset;
  out.scale = promise.radius;
  const double r = promise.radius;
  for (double& v : out.points.data) {
    if (v < 0.0) {
      v = 0.0;
      ++out.clip_count;
    } else if (v > r) {
      v = r;
      ++out.clip_count;
    }
    v /= r;
  }
  return out;
}

inline Matrix denormalize_domain(const Matrix& normalized, double scale) {
  Matrix out = normalized;
  for (double& v : out.data) v *= scale;
  return out;
}

}  // namespace dpsim
