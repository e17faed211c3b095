#pragma once

#include "core.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace genprior {

struct PowerIterationOptions
{
  double tol = 1e-8;
  int max_iterations = 1000;
};

/// Largest singular value of a linear map given only its action and the
/// action of its adjoint. Iterates on A^T A from a fixed pseudo-random start
/// and stops once the relative change of the estimate drops below `tol`.
/// The returned value is the converged estimate inflated by (1 + tol), so it
/// is an upper bound up to the stopping tolerance.
template <class Apply, class ApplyAdjoint>
double spectral_norm(Apply&& apply, ApplyAdjoint&& adjoint, Index cols,
                     PowerIterationOptions opts = {})
{
  if (cols <= 0)
    throw DimensionError("spectral_norm: operator has no columns");

  Rng rng(0x5eed5eedULL);
  Vector v = rng.gaussian_vector(cols);
  v.normalize();

  // The iterates increase monotonically and converge geometrically, so the
  // distance still to go is about step * r / (1 - r) for contraction ratio r.
  // Stopping on the step alone is too optimistic when the top two singular
  // values are close.
  double estimate = 0.0;
  double last_step = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector w = adjoint(apply(v));
    double norm_w = w.norm();
    if (!std::isfinite(norm_w))
      throw NumericalError("spectral_norm: non-finite iterate");
    if (norm_w == 0.0)
      return 0.0; // v in the null space of A^T A; A = 0 along every tried direction
    double next = std::sqrt(norm_w);
    v = w / norm_w;
    double step = std::abs(next - estimate);
    if (it > 0 && step <= opts.tol * next) {
      double ratio = last_step > 0.0 ? step / last_step : 0.0;
      double remaining = ratio < 1.0 ? step * ratio / (1.0 - ratio) : INFINITY;
      if (step == 0.0 || remaining <= opts.tol * next)
        return next * (1.0 + opts.tol);
    }
    estimate = next;
    last_step = step;
  }
  throw NumericalError("spectral_norm: power iteration did not converge in " +
                       std::to_string(opts.max_iterations) + " iterations");
}

inline double spectral_norm(const Matrix& a, PowerIterationOptions opts = {})
{
  if (a.rows() == 0 || a.cols() == 0)
    return 0.0;
  return spectral_norm([&](const Vector& x) -> Vector { return a * x; },
                       [&](const Vector& x) -> Vector { return a.transpose() * x; },
                       a.cols(), opts);
}

/// Empirical quantile with linear interpolation between order statistics
/// (position q*(n-1) in the sorted sample). q=0 gives the minimum, q=1 the maximum.
inline double quantile_sorted(std::span<const double> sorted, double q)
{
  if (sorted.empty())
    throw Error("quantile of an empty sample");
  q = std::clamp(q, 0.0, 1.0);
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q)
{
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

/// Sample covariance (n-1 denominator) of the rows of `samples`.
inline Matrix sample_covariance(const Matrix& samples)
{
  const Index n = samples.rows();
  if (n < 2)
    throw Error("sample covariance needs at least 2 rows");
  Vector mean = samples.colwise().mean();
  Matrix centered = samples.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

} // namespace genprior
