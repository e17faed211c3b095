#pragma once

// Marginal likelihood by thermodynamic integration over the temperature
// ladder, and the lower-tail misspecification test built on it.

#include "core.hpp"
#include "forward.hpp"
#include "linalg.hpp"
#include "sampler.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace genprior {

struct MeanWithError
{
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Sample mean and batch-means standard error with ceil(sqrt(N)) batches.
/// Trailing samples that do not fill a batch are left out of the error only.
inline MeanWithError batch_means(std::span<const double> values)
{
  const std::size_t n = values.size();
  if (n == 0)
    throw Error("batch_means: empty sample");
  MeanWithError out;
  double sum = 0.0;
  for (double v : values)
    sum += v;
  out.mean = sum / static_cast<double>(n);

  auto batches = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::size_t size = n / batches;
  if (batches < 2 || size == 0)
    return out;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < size; ++i)
      means[b] += values[b * size + i];
    means[b] /= static_cast<double>(size);
  }
  double grand = 0.0;
  for (double m : means)
    grand += m;
  grand /= static_cast<double>(batches);
  double ss = 0.0;
  for (double m : means)
    ss += (m - grand) * (m - grand);
  double var_batch = ss / static_cast<double>(batches - 1);
  out.standard_error = std::sqrt(var_batch / static_cast<double>(batches));
  return out;
}

struct TemperatureMeans
{
  std::vector<double> temperatures;
  std::vector<double> means; // E_T[log p(y|z)]
  std::vector<double> standard_errors;
};

/// Monte Carlo estimate of E_T[log p(y|z)] at every rung, using the stored
/// potentials: log p(y|z) = log_likelihood_constant - Phi(z).
inline TemperatureMeans per_temperature_loglik_means(const TraceStore& store,
                                                     double log_likelihood_constant)
{
  TemperatureMeans out;
  for (const auto& chain : store.chains) {
    if (chain.potentials.size() == 0)
      throw Error("per_temperature_loglik_means: empty trace at T=" +
                  std::to_string(chain.temperature));
    std::vector<double> ll(static_cast<std::size_t>(chain.potentials.size()));
    for (Index i = 0; i < chain.potentials.size(); ++i)
      ll[static_cast<std::size_t>(i)] = log_likelihood_constant - chain.potentials[i];
    MeanWithError mw = batch_means(ll);
    out.temperatures.push_back(chain.temperature);
    out.means.push_back(mw.mean);
    out.standard_errors.push_back(mw.standard_error);
  }
  return out;
}

inline TemperatureMeans per_temperature_loglik_means(const TraceStore& store, const PotentialFn& pf)
{
  return per_temperature_loglik_means(store, pf.log_likelihood_constant());
}

struct EvidenceEstimate
{
  double log_evidence = 0.0;
  double standard_error = 0.0;
  std::vector<double> temperatures;
  std::vector<double> per_temperature_means;
  std::vector<double> mc_standard_errors;
  std::vector<std::string> warnings;
};

/// Trapezoidal rule for log p(y) = int_0^1 E_T[log p(y|z)] dT. Temperatures
/// must be nondecreasing; repeated rungs contribute zero-width panels.
inline EvidenceEstimate thermodynamic_integration(std::span<const double> temps,
                                                  std::span<const double> means,
                                                  std::span<const double> ses = {})
{
  if (temps.size() != means.size())
    throw Error("thermodynamic_integration: ladder and means differ in length");
  if (!ses.empty() && ses.size() != means.size())
    throw Error("thermodynamic_integration: standard errors differ in length");
  if (temps.empty())
    throw Error("thermodynamic_integration: empty ladder");
  for (std::size_t i = 1; i < temps.size(); ++i)
    if (temps[i] < temps[i - 1])
      throw Error("thermodynamic_integration: temperatures must be nondecreasing");

  EvidenceEstimate est;
  est.temperatures.assign(temps.begin(), temps.end());
  est.per_temperature_means.assign(means.begin(), means.end());
  if (!ses.empty())
    est.mc_standard_errors.assign(ses.begin(), ses.end());
  if (temps.front() > 0.0)
    est.warnings.push_back("ladder starts at T=" + std::to_string(temps.front()) +
                           " > 0; the integral over [0, T0] is missing");
  if (temps.back() < 1.0)
    est.warnings.push_back("ladder ends at T=" + std::to_string(temps.back()) + " < 1");

  const std::size_t k = temps.size();
  double total = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i)
    total += (temps[i + 1] - temps[i]) * (means[i + 1] + means[i]) / 2.0;
  if (!ses.empty()) {
    for (std::size_t i = 0; i < k; ++i) {
      double left = i > 0 ? temps[i] - temps[i - 1] : 0.0;
      double right = i + 1 < k ? temps[i + 1] - temps[i] : 0.0;
      double w = (left + right) / 2.0;
      var += w * w * ses[i] * ses[i];
    }
  }
  est.log_evidence = total;
  est.standard_error = std::sqrt(var);
  return est;
}

inline EvidenceEstimate thermodynamic_integration(const TemperatureMeans& tm)
{
  return thermodynamic_integration(tm.temperatures, tm.means, tm.standard_errors);
}

/// Rungs where the estimated integrand decreases by more than `n_se` combined
/// standard errors. E_T[log p(y|z)] is nondecreasing in T, so any entry here
/// points at under-sampling.
inline std::vector<std::size_t> integrand_monotonicity_violations(const EvidenceEstimate& est,
                                                                  double n_se = 2.0)
{
  std::vector<std::size_t> out;
  const auto& m = est.per_temperature_means;
  for (std::size_t i = 0; i + 1 < m.size(); ++i) {
    double se = 0.0;
    if (!est.mc_standard_errors.empty())
      se = std::hypot(est.mc_standard_errors[i], est.mc_standard_errors[i + 1]);
    if (m[i + 1] < m[i] - n_se * se)
      out.push_back(i);
  }
  return out;
}

/// Log-evidence values of in-dataset observations, kept sorted.
class ReferenceDistribution
{
public:
  explicit ReferenceDistribution(std::vector<double> values) : values_(std::move(values))
  {
    if (values_.empty())
      throw Error("reference distribution: no values");
    std::sort(values_.begin(), values_.end());
  }

  /// Empirical q-quantile, linear interpolation between order statistics.
  double centile(double q) const { return quantile_sorted(values_, q); }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

private:
  std::vector<double> values_;
};

enum class MisspecificationDecision { in_dataset, rejected };

inline const char* to_string(MisspecificationDecision d)
{
  return d == MisspecificationDecision::rejected ? "rejected" : "in-dataset";
}

/// One-sided lower-tail test: reject when the new log evidence falls below
/// the reference's `significance` centile.
inline MisspecificationDecision misspecification_test(const ReferenceDistribution& ref,
                                                      double new_log_evidence, double significance)
{
  if (!(significance > 0.0 && significance < 1.0))
    throw Error("misspecification_test: significance must lie in (0, 1)");
  return new_log_evidence < ref.centile(significance) ? MisspecificationDecision::rejected
                                                      : MisspecificationDecision::in_dataset;
}

} // namespace genprior
