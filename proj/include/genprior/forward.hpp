#pragma once

#include "core.hpp"
#include "generator.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace genprior {

struct IdentityOp
{
  Index dim = 0;
};

/// Keeps the listed pixels (strictly increasing raster indices).
struct MaskOp
{
  Index dim = 0;
  std::vector<Index> kept;
};

/// Same-size 2-D convolution with zero padding. Kernel cell (u, v) is
/// anchored at ((rows-1)/2, (cols-1)/2), rounding down for even sizes.
struct ConvolutionOp
{
  Matrix kernel;
  Index height = 0;
  Index width = 0;
};

/// Linear observation map A: R^d -> R^p.
class ForwardOperator
{
public:
  using Variant = std::variant<IdentityOp, MaskOp, ConvolutionOp>;

  static ForwardOperator identity(Index dim)
  {
    if (dim <= 0)
      throw DimensionError("identity operator: dimension must be positive");
    return ForwardOperator(IdentityOp{dim});
  }

  static ForwardOperator mask(const std::vector<bool>& keep)
  {
    MaskOp m{static_cast<Index>(keep.size()), {}};
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i])
        m.kept.push_back(static_cast<Index>(i));
    return mask_indices(m.dim, std::move(m.kept));
  }

  static ForwardOperator mask_indices(Index dim, std::vector<Index> kept)
  {
    std::sort(kept.begin(), kept.end());
    if (std::adjacent_find(kept.begin(), kept.end()) != kept.end())
      throw DimensionError("mask operator: duplicate pixel index");
    if (!kept.empty() && (kept.front() < 0 || kept.back() >= dim))
      throw DimensionError("mask operator: pixel index out of range");
    if (kept.empty())
      throw DimensionError("mask operator: no pixels kept");
    return ForwardOperator(MaskOp{dim, std::move(kept)});
  }

  /// Keeps round(fraction * dim) pixels drawn uniformly without replacement.
  static ForwardOperator random_mask(Index dim, double fraction, std::uint64_t seed)
  {
    if (!(fraction > 0.0 && fraction <= 1.0))
      throw Error("mask fraction must lie in (0, 1]");
    std::vector<Index> idx(static_cast<std::size_t>(dim));
    std::iota(idx.begin(), idx.end(), Index{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng.engine);
    auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dim))));
    idx.resize(keep);
    return mask_indices(dim, std::move(idx));
  }

  static ForwardOperator convolution(Matrix kernel, Index height, Index width)
  {
    if (height <= 0 || width <= 0)
      throw DimensionError("convolution operator: image size must be positive");
    if (kernel.size() == 0 || !kernel.allFinite())
      throw NumericalError("convolution operator: kernel must be nonempty and finite");
    return ForwardOperator(ConvolutionOp{std::move(kernel), height, width});
  }

  const Variant& variant() const { return variant_; }

  Index input_dim() const
  {
    return std::visit(
      [](const auto& v) -> Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConvolutionOp>)
          return v.height * v.width;
        else
          return v.dim;
      },
      variant_);
  }

  Index output_dim() const
  {
    if (const auto* m = std::get_if<MaskOp>(&variant_))
      return static_cast<Index>(m->kept.size());
    return input_dim();
  }

  Vector apply(const Vector& x) const
  {
    require_dim(x.size(), input_dim(), "apply_operator");
    return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, IdentityOp>) {
          return x;
        } else if constexpr (std::is_same_v<T, MaskOp>) {
          Vector y(static_cast<Index>(v.kept.size()));
          for (std::size_t i = 0; i < v.kept.size(); ++i)
            y[static_cast<Index>(i)] = x[v.kept[i]];
          return y;
        } else {
          return convolve(v, x, false);
        }
      },
      variant_);
  }

  Vector adjoint(const Vector& y) const
  {
    require_dim(y.size(), output_dim(), "operator adjoint");
    return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, IdentityOp>) {
          return y;
        } else if constexpr (std::is_same_v<T, MaskOp>) {
          Vector x = Vector::Zero(v.dim);
          for (std::size_t i = 0; i < v.kept.size(); ++i)
            x[v.kept[i]] = y[static_cast<Index>(i)];
          return x;
        } else {
          return convolve(v, y, true);
        }
      },
      variant_);
  }

  Vector operator()(const Vector& x) const { return apply(x); }

  double norm(double tol = 1e-10) const
  {
    return spectral_norm([&](const Vector& x) -> Vector { return apply(x); },
                         [&](const Vector& y) -> Vector { return adjoint(y); }, input_dim(),
                         {tol, 5000});
  }

private:
  explicit ForwardOperator(Variant v) : variant_(std::move(v)) {}

  // y[r,c] = sum_{u,v} k[u,v] x[r - u + ar, c - v + ac]; the adjoint is the
  // matching correlation.
  static Vector convolve(const ConvolutionOp& op, const Vector& in, bool transpose)
  {
    const Index h = op.height, w = op.width;
    const Index kr = op.kernel.rows(), kc = op.kernel.cols();
    const Index ar = (kr - 1) / 2, ac = (kc - 1) / 2;
    Vector out = Vector::Zero(h * w);
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        double acc = 0.0;
        for (Index u = 0; u < kr; ++u) {
          Index sr = transpose ? r + u - ar : r - u + ar;
          if (sr < 0 || sr >= h)
            continue;
          for (Index v = 0; v < kc; ++v) {
            Index sc = transpose ? c + v - ac : c - v + ac;
            if (sc < 0 || sc >= w)
              continue;
            acc += op.kernel(u, v) * in[sr * w + sc];
          }
        }
        out[r * w + c] = acc;
      }
    }
    return out;
  }

  Variant variant_;
};

/// Gaussian kernel on a size x size grid with cell offsets t = i - (size-1)/2
/// (half-integers for even sizes), normalized to unit sum.
inline Matrix gaussian_blur_kernel(Index size, double bandwidth)
{
  if (size < 1)
    throw Error("blur kernel size must be at least 1");
  if (!(bandwidth > 0.0))
    throw Error("blur bandwidth must be positive");
  Matrix k(size, size);
  const double center = static_cast<double>(size - 1) / 2.0;
  for (Index u = 0; u < size; ++u) {
    for (Index v = 0; v < size; ++v) {
      double du = static_cast<double>(u) - center;
      double dv = static_cast<double>(v) - center;
      k(u, v) = std::exp(-(du * du + dv * dv) / (2.0 * bandwidth * bandwidth));
    }
  }
  return k / k.sum();
}

struct Observation
{
  Vector y;
  double sigma = 1.0;
  ForwardOperator op;

  Observation(Vector y_, double sigma_, ForwardOperator op_)
    : y(std::move(y_)), sigma(sigma_), op(std::move(op_))
  {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw Error("observation: sigma must be positive and finite");
    if (!y.allFinite())
      throw NumericalError("observation: y contains non-finite entries");
    require_dim(y.size(), op.output_dim(), "observation");
  }
};

/// Draws y = A x + sigma * w with w ~ N(0, I).
inline Observation simulate_observation(const Vector& x, const ForwardOperator& op, double sigma,
                                        Rng& rng)
{
  Vector clean = op.apply(x);
  Vector noise = rng.gaussian_vector(clean.size());
  return Observation(clean + sigma * noise, sigma, op);
}

/// Likelihood potential Phi(z) = |y - A mu(z)|^2 / (2 sigma^2) of the
/// linear-Gaussian model. Pure and re-entrant.
class PotentialFn
{
public:
  PotentialFn(std::shared_ptr<const Decoder> decoder, Observation obs)
    : decoder_(std::move(decoder)), obs_(std::move(obs))
  {
    if (!decoder_)
      throw Error("potential: null decoder");
    if (decoder_->ambient_dim() != obs_.op.input_dim())
      throw DimensionError("decoder ambient dimension " + std::to_string(decoder_->ambient_dim()) +
                           " does not match operator input dimension " +
                           std::to_string(obs_.op.input_dim()));
  }

  Index latent_dim() const { return decoder_->latent_dim(); }
  const Decoder& decoder() const { return *decoder_; }
  std::shared_ptr<const Decoder> decoder_ptr() const { return decoder_; }
  const Observation& observation() const { return obs_; }

  Vector residual(const Vector& z) const { return obs_.y - obs_.op.apply(decoder_->decode(z)); }

  double potential(const Vector& z) const
  {
    double phi = residual(z).squaredNorm() / (2.0 * obs_.sigma * obs_.sigma);
    if (!std::isfinite(phi))
      throw NumericalError("potential: non-finite value");
    return phi;
  }

  double operator()(const Vector& z) const { return potential(z); }

  /// -p/2 log(2 pi sigma^2)
  double log_likelihood_constant() const
  {
    auto p = static_cast<double>(obs_.y.size());
    return -0.5 * p * std::log(2.0 * std::numbers::pi * obs_.sigma * obs_.sigma);
  }

  double log_likelihood(const Vector& z) const { return log_likelihood_constant() - potential(z); }

private:
  std::shared_ptr<const Decoder> decoder_;
  Observation obs_;
};

/// log N(z; 0, I) without its normalizing constant.
inline double log_prior_unnormalized(const Vector& z)
{
  return -0.5 * z.squaredNorm();
}

struct ConditionCheck
{
  std::string name;
  bool satisfied = false;
  std::string detail;
};

struct WellPosednessReport
{
  std::vector<ConditionCheck> conditions; // C1..C6 in order
  double likelihood_bound = 0.0;          // sup_y p(y|z) = (2 pi sigma^2)^(-p/2)
  bool weakly_hellinger_tv_wellposed = false;
  bool wasserstein_wellposed = false;

  bool all_satisfied() const
  {
    return std::all_of(conditions.begin(), conditions.end(),
                       [](const ConditionCheck& c) { return c.satisfied; });
  }
};

/// Sufficient conditions for posterior well-posedness, evaluated for the
/// Gaussian likelihood with a standard-normal latent prior. The likelihood
/// peak (2 pi sigma^2)^(-p/2) serves as the uniform bound and dominating g.
inline WellPosednessReport check_wellposedness(const PotentialFn& pf)
{
  const double sigma = pf.observation().sigma;
  const auto p = static_cast<double>(pf.observation().op.output_dim());
  const double c = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * p);
  const std::string cs = std::to_string(c);

  WellPosednessReport r;
  r.likelihood_bound = c;
  r.conditions = {
    {"C1", std::isfinite(c) && c > 0.0, "Gaussian density in y is strictly positive for every z"},
    {"C2", true, "integrable: follows from C3 with the probability-density prior"},
    {"C3", std::isfinite(c), "g(z) = " + cs + " dominates p(y|z) and is prior-integrable"},
    {"C4", true, "p(y|z) is continuous in y"},
    {"C5", true, "standard-normal prior has finite moments of every order p in [1, inf)"},
    {"C6", std::isfinite(c) && c > 0.0, "p(y|z) <= c = " + cs + " for all y, z"},
  };
  r.weakly_hellinger_tv_wellposed =
    r.conditions[0].satisfied && r.conditions[1].satisfied && r.conditions[2].satisfied &&
    r.conditions[3].satisfied;
  r.wasserstein_wellposed =
    r.weakly_hellinger_tv_wellposed && r.conditions[4].satisfied && r.conditions[5].satisfied;
  return r;
}

/// Constants certifying the ergodicity hypotheses for Phi given a Lipschitz
/// bound L on the decoder and the operator norm |A|.
struct PotentialBounds
{
  double lipschitz = 0.0;
  double operator_norm = 0.0;
  double decode_zero_norm = 0.0;
  double growth_constant = 0.0; // Phi(z) <= K (1 + |z|^2)

  /// K(r) with |Phi(z) - Phi(z')| <= K(r) |z - z'| whenever |z|, |z'| < r.
  double local_lipschitz(double radius, double y_norm, double sigma) const
  {
    return lipschitz * operator_norm / (sigma * sigma) *
           (y_norm + operator_norm * (decode_zero_norm + lipschitz * radius));
  }
};

inline PotentialBounds potential_bounds(const PotentialFn& pf, double lipschitz)
{
  PotentialBounds b;
  b.lipschitz = lipschitz;
  b.operator_norm = pf.observation().op.norm();
  Vector zero = Vector::Zero(pf.latent_dim());
  b.decode_zero_norm = pf.decoder().decode(zero).norm();
  const double yn = pf.observation().y.norm();
  const double s2 = pf.observation().sigma * pf.observation().sigma;
  const double la = lipschitz * b.operator_norm;
  if (b.decode_zero_norm == 0.0) {
    double m = std::max(yn, la);
    b.growth_constant = m * m / s2;
  } else {
    // |A mu(z)|^2 <= 2 |A|^2 (|mu(0)|^2 + L^2 |z|^2) once mu(0) != 0.
    double an = b.operator_norm * b.decode_zero_norm;
    b.growth_constant = std::max(yn * yn + 2.0 * an * an, 2.0 * la * la) / s2;
  }
  return b;
}

/// Peak signal-to-noise ratio in dB; +inf when the images coincide.
inline double psnr(const Vector& x, const Vector& ref, double peak = 1.0)
{
  require_dim(x.size(), ref.size(), "psnr");
  if (x.size() == 0)
    throw DimensionError("psnr: empty images");
  if (!(peak > 0.0))
    throw Error("psnr: peak must be positive");
  double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

} // namespace genprior
