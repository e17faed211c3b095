#pragma once

// Independent reference computations used by the test suites. None of these
// call into the library's numerical routines.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double largest_singular_value(const Matrix& a)
{
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()[0];
}

/// Posterior of z ~ N(0, I), y = G z + b + N(0, sigma^2 I).
struct GaussianPosterior
{
  Vector mean;
  Matrix covariance;
};

inline GaussianPosterior conjugate_posterior(const Matrix& g, const Vector& b, const Vector& y,
                                             double sigma)
{
  const auto m = g.cols();
  Matrix precision = Matrix::Identity(m, m) + g.transpose() * g / (sigma * sigma);
  Matrix cov = precision.inverse();
  Vector mean = cov * g.transpose() * (y - b) / (sigma * sigma);
  return {mean, cov};
}

/// log N(y; b, sigma^2 I + G G^T), the marginal likelihood of the linear model.
inline double gaussian_log_evidence(const Matrix& g, const Vector& b, const Vector& y, double sigma)
{
  const auto p = y.size();
  Matrix s = sigma * sigma * Matrix::Identity(p, p) + g * g.transpose();
  Eigen::LLT<Matrix> llt(s);
  Vector r = y - b;
  Vector w = llt.solve(r);
  double logdet = 0.0;
  Matrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < p; ++i)
    logdet += 2.0 * std::log(l(i, i));
  return -0.5 * (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + logdet + r.dot(w));
}

/// E_T[log p(y|z)] for the linear-Gaussian model, where the power posterior at
/// temperature T is Gaussian with precision I + T G^T G / sigma^2.
inline double exact_ti_integrand(const Matrix& g, const Vector& b, const Vector& y, double sigma,
                                 double t)
{
  const auto m = g.cols();
  const auto p = y.size();
  const double s2 = sigma * sigma;
  Matrix prec = Matrix::Identity(m, m) + t * g.transpose() * g / s2;
  Matrix cov = prec.inverse();
  Vector mean = cov * (t * g.transpose() * (y - b) / s2);
  Vector r = y - b - g * mean;
  double expected_sq = r.squaredNorm() + (g * cov * g.transpose()).trace();
  return -0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi * s2) - expected_sq / (2.0 * s2);
}

/// Explicit matrix of the zero-padded "same" 2-D convolution
/// y[r,c] = sum_{u,v} k[u,v] x[r - u + ar, c - v + ac], ar = (kr - 1) / 2.
inline Matrix dense_convolution(const Matrix& kernel, int h, int w)
{
  const int kr = static_cast<int>(kernel.rows()), kc = static_cast<int>(kernel.cols());
  const int ar = (kr - 1) / 2, ac = (kc - 1) / 2;
  Matrix a = Matrix::Zero(h * w, h * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int u = 0; u < kr; ++u)
        for (int v = 0; v < kc; ++v) {
          int sr = r - u + ar, sc = c - v + ac;
          if (sr >= 0 && sr < h && sc >= 0 && sc < w)
            a(r * w + c, sr * w + sc) += kernel(u, v);
        }
  return a;
}

inline double normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// One-sample Kolmogorov-Smirnov test against N(0, 1).
struct KsResult
{
  double statistic;
  double p_value;
};

inline double kolmogorov_survival(double lambda)
{
  if (lambda < 1e-3)
    return 1.0;
  double s = 0.0;
  for (int j = 1; j <= 200; ++j) {
    double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    s += term;
    if (std::abs(term) < 1e-16)
      break;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline KsResult ks_standard_normal(std::vector<double> x)
{
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = normal_cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

/// Mean of x with the standard error of non-overlapping batch means.
struct MeanSe
{
  double mean;
  double se;
};

inline MeanSe batch_mean_se(const std::vector<double>& x, std::size_t batches)
{
  const std::size_t size = x.size() / batches;
  std::vector<double> bm(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < size; ++i)
      bm[b] += x[b * size + i];
    bm[b] /= static_cast<double>(size);
  }
  double mean = 0.0;
  for (double v : x)
    mean += v;
  mean /= static_cast<double>(x.size());
  double bmean = 0.0;
  for (double v : bm)
    bmean += v;
  bmean /= static_cast<double>(batches);
  double var = 0.0;
  for (double v : bm)
    var += (v - bmean) * (v - bmean);
  var /= static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(batches))};
}

} // namespace oracle
