#pragma once

// Training-free demonstration targets.

#include "core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace genprior::demo {

/// Banana-shaped Rosenbrock log density -8 (x2 - x1^2)^2 - (1 - x1)^2, up to
/// a constant. Its ridge follows the parabola x2 = x1^2.
inline double rosenbrock_log_density(double x1, double x2)
{
  double ridge = x2 - x1 * x1;
  return -8.0 * ridge * ridge - (1.0 - x1) * (1.0 - x1);
}

/// Two-dimensional multimodal likelihood potential. Nearly all posterior mass
/// sits in a well at (-1.2, 0); shallower wells at (-0.5, -0.25) and (2, 0)
/// trap a cold chain; a flat plateau separates the wells.
class MultimodalPotential
{
public:
  struct Well
  {
    double cx, cy;
    double width;
    double depth; // potential at the well centre, relative to the dominant well
  };

  MultimodalPotential()
    : wells_{{{-1.2, 0.0, 0.2, 0.0}, {-0.5, -0.25, 0.08, 4.0}, {2.0, 0.0, 0.15, 7.0}}},
      plateau_(20.0)
  {
  }

  MultimodalPotential(std::vector<Well> wells, double plateau)
    : wells_(std::move(wells)), plateau_(plateau)
  {
  }

  Index latent_dim() const { return 2; }

  /// -log( sum_j exp(-depth_j - |z - c_j|^2 / (2 w_j^2)) + exp(-plateau) ), evaluated stably.
  double operator()(const Vector& z) const
  {
    require_dim(z.size(), 2, "multimodal potential");
    std::vector<double> terms;
    terms.reserve(wells_.size() + 1);
    for (const auto& w : wells_) {
      double dx = z[0] - w.cx, dy = z[1] - w.cy;
      terms.push_back(-w.depth - (dx * dx + dy * dy) / (2.0 * w.width * w.width));
    }
    terms.push_back(-plateau_);
    double top = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms)
      s += std::exp(t - top);
    return -(top + std::log(s));
  }

  const std::vector<Well>& wells() const { return wells_; }

  /// Inside radius 0.5 of the dominant well.
  bool in_dominant_basin(const Vector& z) const
  {
    double dx = z[0] - wells_[0].cx, dy = z[1] - wells_[0].cy;
    return dx * dx + dy * dy < 0.25;
  }

private:
  std::vector<Well> wells_;
  double plateau_;
};

} // namespace genprior::demo
