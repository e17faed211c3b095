#pragma once

// Posterior summaries computed from sampler traces.

#include "core.hpp"
#include "forward.hpp"
#include "generator.hpp"
#include "linalg.hpp"
#include "sampler.hpp"
#include "weights.hpp"

#include <algorithm>
#include <exception>
#include <memory>
#include <numeric>
#include <thread>
#include <vector>

namespace genprior {

struct PosteriorSummary
{
  Vector mmse_image;
  Vector pixel_variances;
  std::size_t n_used = 0;
};

/// Pixel-space posterior mean and per-pixel variance of the decoded samples.
inline PosteriorSummary mmse_estimate(const Matrix& samples, const Decoder& decoder)
{
  const Index n = samples.rows();
  if (n == 0)
    throw Error("mmse_estimate: empty trace");
  require_dim(samples.cols(), decoder.latent_dim(), "mmse_estimate samples");

  const Index d = decoder.ambient_dim();
  Vector mean = Vector::Zero(d);
  Vector m2 = Vector::Zero(d);
  for (Index i = 0; i < n; ++i) {
    Vector x = decoder.decode(samples.row(i).transpose());
    Vector delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta.cwiseProduct(x - mean);
  }
  PosteriorSummary s;
  s.mmse_image = std::move(mean);
  s.pixel_variances = n > 1 ? Vector(m2 / static_cast<double>(n - 1)) : Vector(Vector::Zero(d));
  s.pixel_variances = s.pixel_variances.cwiseMax(0.0);
  s.n_used = static_cast<std::size_t>(n);
  return s;
}

inline PosteriorSummary mmse_estimate(const ChainTrace& trace, const Decoder& decoder)
{
  return mmse_estimate(trace.samples, decoder);
}

struct PcaMap
{
  Vector mean;
  Vector eigenvalues; // descending
  Matrix components;  // columns are orthonormal latent directions
  Matrix projected;   // n x min(2, m) coordinates in the leading components
};

/// Eigendecomposition of the latent sample covariance.
inline PcaMap posterior_pca(const Matrix& samples)
{
  const Index n = samples.rows();
  const Index m = samples.cols();
  if (n < m + 1)
    throw Error("posterior_pca: need at least m + 1 = " + std::to_string(m + 1) + " samples");

  Matrix cov = sample_covariance(samples);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success)
    throw NumericalError("posterior_pca: eigendecomposition failed");

  PcaMap out;
  out.mean = samples.colwise().mean().transpose();
  out.eigenvalues.resize(m);
  out.components.resize(m, m);
  for (Index j = 0; j < m; ++j) {
    // Eigen returns ascending order.
    out.eigenvalues[j] = std::max(0.0, eig.eigenvalues()[m - 1 - j]);
    out.components.col(j) = eig.eigenvectors().col(m - 1 - j);
  }
  const Index lead = std::min<Index>(2, m);
  Matrix centered = samples.rowwise() - out.mean.transpose();
  out.projected = centered * out.components.leftCols(lead);
  return out;
}

struct PcaGridPoint
{
  double a = 0.0; // offset along component 1, in standard deviations
  double b = 0.0; // offset along component 2
  Vector latent;
  Vector image;
};

/// Decodes an n x n grid spanning +-span standard deviations of the two
/// leading components around the posterior mean.
inline std::vector<PcaGridPoint> pca_grid(const PcaMap& pca, const Decoder& decoder,
                                          int points_per_axis = 5, double span = 2.0)
{
  if (points_per_axis < 1)
    throw Error("pca_grid: need at least one point per axis");
  const Index m = pca.mean.size();
  std::vector<PcaGridPoint> grid;
  for (int i = 0; i < points_per_axis; ++i) {
    for (int j = 0; j < points_per_axis; ++j) {
      auto offset = [&](int t) {
        return points_per_axis == 1 ? 0.0
                                    : -span + 2.0 * span * t / static_cast<double>(points_per_axis - 1);
      };
      PcaGridPoint p;
      p.a = offset(i);
      p.b = m > 1 ? offset(j) : 0.0;
      p.latent = pca.mean + p.a * std::sqrt(pca.eigenvalues[0]) * pca.components.col(0);
      if (m > 1)
        p.latent += p.b * std::sqrt(pca.eigenvalues[1]) * pca.components.col(1);
      p.image = decoder.decode(p.latent);
      grid.push_back(std::move(p));
      if (m == 1)
        break;
    }
  }
  return grid;
}

/// Unnormalized log posterior density log N(z; 0, I) - Phi(z).
inline double log_posterior_density(const Vector& z, double phi)
{
  return log_prior_unnormalized(z) - phi;
}

inline std::vector<double> log_posterior_densities(const Matrix& samples, const Vector& potentials)
{
  require_dim(potentials.size(), samples.rows(), "log_posterior_densities");
  std::vector<double> out(static_cast<std::size_t>(samples.rows()));
  for (Index i = 0; i < samples.rows(); ++i)
    out[static_cast<std::size_t>(i)] = -0.5 * samples.row(i).squaredNorm() - potentials[i];
  return out;
}

/// Empirical alpha-quantile of the sampled log posterior density. The
/// level-(1 - alpha) HPD region is {z : log density(z) >= threshold}.
inline double hpd_threshold(const Matrix& samples, const Vector& potentials, double alpha)
{
  if (samples.rows() == 0)
    throw Error("hpd_threshold: empty trace");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error("hpd_threshold: alpha must lie in [0, 1]");
  return quantile(log_posterior_densities(samples, potentials), alpha);
}

inline double hpd_threshold(const ChainTrace& trace, double alpha)
{
  return hpd_threshold(trace.samples, trace.potentials, alpha);
}

struct CoverageResult
{
  std::vector<double> nominal_levels;
  std::vector<double> empirical_coverage;
  std::vector<std::size_t> hits;
  std::size_t n_replicates = 0;
  std::size_t samples_per_replicate = 0;
};

struct CoverageSetup
{
  std::shared_ptr<const Decoder> decoder;
  ForwardOperator op = ForwardOperator::identity(1);
  double sigma = 1.0;
  TemperatureLadder ladder = TemperatureLadder::linear(3);
  PcnConfig sampler;           // master_seed seeds the whole experiment
  std::vector<double> levels;  // nominal coverage probabilities 1 - alpha
  bool stochastic_encoding = false;
  unsigned threads = 1;        // replicate-level parallelism
};

/// Frequentist coverage of HPD credible sets. For each truth x: simulate
/// y ~ p(y|x), sample the latent posterior, and check whether the encoded
/// truth clears the HPD threshold at every requested level.
inline CoverageResult coverage_experiment(const std::vector<Vector>& truths, const Encoder& encoder,
                                          const CoverageSetup& setup)
{
  if (!setup.decoder)
    throw Error("coverage_experiment: missing decoder");
  for (double l : setup.levels)
    if (!(l > 0.0 && l < 1.0))
      throw Error("coverage_experiment: levels must lie in (0, 1)");

  const std::size_t n = truths.size();
  const std::size_t nl = setup.levels.size();
  std::vector<std::vector<char>> covered(n, std::vector<char>(nl, 0));

  auto replicate = [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(setup.sampler.master_seed, r);
    Rng sim(derive_seed(seed, 0));
    Observation obs = simulate_observation(truths[r], setup.op, setup.sigma, sim);
    PotentialFn pf(setup.decoder, obs);

    PcnConfig cfg = setup.sampler;
    cfg.master_seed = derive_seed(seed, 1);
    auto init = replicate_initial(setup.ladder.size(), Vector::Zero(pf.latent_dim()));
    TraceStore store = run_sampler(pf, setup.ladder, cfg, init);

    Vector z_true = setup.stochastic_encoding ? encoder.encode_sample(truths[r], sim)
                                              : encoder.encode_mean(truths[r]);
    require_dim(z_true.size(), pf.latent_dim(), "encoded truth");
    const double score = log_posterior_density(z_true, pf.potential(z_true));

    std::vector<double> dens = log_posterior_densities(store.posterior().samples,
                                                       store.posterior().potentials);
    std::sort(dens.begin(), dens.end());
    for (std::size_t l = 0; l < nl; ++l)
      covered[r][l] = score >= quantile_sorted(dens, 1.0 - setup.levels[l]) ? 1 : 0;
  };

  auto replicate_checked = [&](std::size_t r) {
    try {
      replicate(r);
    } catch (const std::exception& e) {
      throw Error("coverage replicate " + std::to_string(r) + ": " + e.what());
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(setup.threads, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t r = 0; r < n; ++r)
      replicate_checked(r);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t r = w; r < n; r += workers)
              replicate_checked(r);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e)
        std::rethrow_exception(e);
  }

  CoverageResult result;
  result.nominal_levels = setup.levels;
  result.n_replicates = n;
  result.samples_per_replicate = setup.sampler.n_samples;
  result.hits.assign(nl, 0);
  result.empirical_coverage.assign(nl, 0.0);
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t r = 0; r < n; ++r)
      result.hits[l] += static_cast<std::size_t>(covered[r][l]);
    result.empirical_coverage[l] =
      n == 0 ? 0.0 : static_cast<double>(result.hits[l]) / static_cast<double>(n);
  }
  return result;
}

struct LatentDimDiagnostic
{
  double trace_of_covariance = 0.0;
  Vector per_dim_variances;

  /// Dimensions whose encoded-mean variance falls below `threshold`.
  std::vector<Index> redundant_dims(double threshold = 0.1) const
  {
    std::vector<Index> out;
    for (Index i = 0; i < per_dim_variances.size(); ++i)
      if (per_dim_variances[i] < threshold)
        out.push_back(i);
    return out;
  }
};

/// Trace of the sample covariance of encoder means (rows = images). A value
/// near m means every latent direction is used; well below m flags redundancy.
inline LatentDimDiagnostic latent_dim_diagnostic(const Matrix& encoded_means)
{
  if (encoded_means.rows() < 2)
    throw Error("latent_dim_diagnostic: need at least 2 encodings");
  Matrix cov = sample_covariance(encoded_means);
  LatentDimDiagnostic out;
  out.per_dim_variances = cov.diagonal();
  out.trace_of_covariance = cov.trace();
  return out;
}

} // namespace genprior
