#pragma once

// Parallel-tempered preconditioned Crank-Nicolson sampling of latent
// posteriors exp(-Phi(z)) N(z; 0, I).
//
// Chain i targets exp(-T_i Phi(z)) N(z; 0, I). Chains advance independently
// between swap points; every `swap_every` iterations the adjacent pair
// (j, j+1) proposes to exchange states and j cycles through the k-1 pairs.
// Step sizes, RNG streams and trace slots belong to temperatures, not states.

#include "core.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace genprior {

template <class P>
concept LatentPotential = requires(const P& p, const Vector& z) {
  { p(z) } -> std::convertible_to<double>;
  { p.latent_dim() } -> std::convertible_to<Index>;
};

class TemperatureLadder
{
public:
  explicit TemperatureLadder(std::vector<double> temps) : temps_(std::move(temps))
  {
    if (temps_.empty())
      throw Error("temperature ladder: empty");
    if (temps_.front() < 0.0)
      throw Error("temperature ladder: temperatures must be nonnegative");
    for (std::size_t i = 1; i < temps_.size(); ++i)
      if (!(temps_[i] > temps_[i - 1]))
        throw Error("temperature ladder: temperatures must be strictly increasing");
    if (temps_.back() != 1.0)
      throw Error("temperature ladder: last temperature must be exactly 1");
  }

  /// T_i = i / (k-1); a single chain sits at T = 1.
  static TemperatureLadder linear(std::size_t k) { return power(k, 1.0); }

  /// T_i = (i / (k-1))^exponent, concentrating rungs near T = 0.
  static TemperatureLadder power(std::size_t k, double exponent = 5.0)
  {
    if (k == 0)
      throw Error("temperature ladder: need at least one chain");
    if (k == 1)
      return TemperatureLadder({1.0});
    std::vector<double> t(k);
    for (std::size_t i = 0; i < k; ++i)
      t[i] = std::pow(static_cast<double>(i) / static_cast<double>(k - 1), exponent);
    t.back() = 1.0;
    return TemperatureLadder(std::move(t));
  }

  /// Linear up to three chains, fifth-power beyond.
  static TemperatureLadder default_for(std::size_t k)
  {
    return k <= 3 ? linear(k) : power(k, 5.0);
  }

  std::size_t size() const { return temps_.size(); }
  double operator[](std::size_t i) const { return temps_[i]; }
  const std::vector<double>& temps() const { return temps_; }

private:
  std::vector<double> temps_;
};

struct PcnConfig
{
  double beta0 = 0.1;
  double target_accept = 0.25;
  double rm_c = 3.0;
  std::size_t swap_every = 10;
  std::size_t burn_in = 20000;
  std::size_t n_samples = 10000;
  std::uint64_t master_seed = 0;
  bool adapt = true;
  bool iid_prior_at_zero = false; // T = 0 chains draw fresh prior samples
  bool keep_burn_in = false;      // also store burn-in iterations (trace plots)

  void validate() const
  {
    if (!(beta0 > 0.0 && beta0 <= 1.0))
      throw Error("pcn config: beta0 must lie in (0, 1]");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw Error("pcn config: target acceptance must lie in (0, 1)");
    if (!(rm_c > 0.0))
      throw Error("pcn config: Robbins-Monro constant must be positive");
    if (swap_every == 0)
      throw Error("pcn config: swap frequency must be positive");
  }
};

struct PcnStep
{
  Vector state;
  double potential = 0.0;
  double alpha = 0.0; // acceptance probability of the proposal
  bool accepted = false;
  bool nonfinite = false;
};

namespace detail {

template <LatentPotential P>
double evaluate_or_inf(const P& pot, const Vector& z)
{
  try {
    double v = pot(z);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

} // namespace detail

/// One pCN transition at temperature T. Accepts the proposal
/// sqrt(1-beta^2) z + beta xi with probability min(1, exp(T (Phi(z) - Phi(P)))).
/// Always consumes m normals and one uniform, in that order. A non-finite
/// potential at the proposal counts as a rejection.
template <LatentPotential P>
PcnStep pcn_step(const Vector& z, double phi_z, double beta, const P& pot, double temperature,
                 Rng& rng, bool iid_prior = false)
{
  Vector xi = rng.gaussian_vector(z.size());
  const double u = rng.unit();
  Vector proposal = iid_prior ? xi : Vector(std::sqrt(1.0 - beta * beta) * z + beta * xi);
  const double phi_p = detail::evaluate_or_inf(pot, proposal);

  PcnStep out;
  if (!std::isfinite(phi_p)) {
    out.state = z;
    out.potential = phi_z;
    out.nonfinite = true;
    return out;
  }
  if (temperature == 0.0 || iid_prior)
    out.alpha = 1.0;
  else
    out.alpha = std::min(1.0, std::exp(temperature * (phi_z - phi_p)));
  out.accepted = u < out.alpha;
  if (out.accepted) {
    out.state = std::move(proposal);
    out.potential = phi_p;
  } else {
    out.state = z;
    out.potential = phi_z;
  }
  return out;
}

/// Acceptance probability for exchanging the states of chains at t_lo and t_hi.
/// Detailed balance for the product of exp(-T Phi) targets.
inline double swap_acceptance(double t_lo, double t_hi, double phi_lo, double phi_hi)
{
  double e = (t_hi - t_lo) * (phi_hi - phi_lo);
  if (std::isnan(e))
    return 0.0;
  return std::min(1.0, std::exp(e));
}

/// logit(beta') = logit(beta) + (c / n) (alpha - a), with the logit clamped so
/// beta' stays strictly inside (0, 1) in floating point.
inline double robbins_monro_update(double beta, double alpha, std::size_t n,
                                   double target_accept, double c)
{
  if (n == 0)
    throw Error("robbins_monro_update: iteration index starts at 1");
  double delta = logit(std::clamp(beta, 1e-300, 1.0 - 1e-16));
  delta += (c / static_cast<double>(n)) * (alpha - target_accept);
  delta = std::clamp(delta, -30.0, 30.0);
  return sigmoid(delta);
}

struct ChainTrace
{
  double temperature = 1.0;
  Matrix samples;    // n_samples x m
  Vector potentials; // Phi at each stored sample
  double final_beta = 0.0;
  std::size_t accepted = 0; // post burn-in
  std::size_t proposed = 0;
  std::size_t burnin_accepted = 0;
  std::size_t nonfinite_rejections = 0;

  double acceptance_rate() const
  {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
};

struct SwapStats
{
  std::size_t attempted = 0;
  std::size_t accepted = 0;

  double rate() const
  {
    return attempted == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempted);
  }
};

struct TraceStore
{
  std::vector<ChainTrace> chains; // ordered by temperature
  std::vector<SwapStats> swaps;   // pair (i, i+1)
  std::size_t first_iteration = 1;
  std::size_t burn_in_rows = 0; // leading rows recorded during burn-in

  std::size_t n_samples() const
  {
    return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().samples.rows());
  }
  const ChainTrace& posterior() const { return chains.back(); }
  std::vector<double> temperatures() const
  {
    std::vector<double> t;
    for (const auto& c : chains)
      t.push_back(c.temperature);
    return t;
  }
};

/// Live sampler state: one slot per temperature.
struct ChainEnsemble
{
  std::vector<Vector> states;
  std::vector<double> potentials;
  std::vector<double> betas;
  std::vector<Rng> rngs;
  Rng swap_rng;
  std::size_t swap_pointer = 0;

  template <LatentPotential P>
  static ChainEnsemble create(const P& pot, std::span<const Vector> init, double beta0,
                              std::uint64_t master_seed)
  {
    ChainEnsemble e{{}, {}, {}, {}, Rng::stream(master_seed, init.size()), 0};
    for (std::size_t i = 0; i < init.size(); ++i) {
      require_dim(init[i].size(), pot.latent_dim(), "initial state");
      e.states.push_back(init[i]);
      double phi = detail::evaluate_or_inf(pot, init[i]);
      if (!std::isfinite(phi))
        throw NumericalError("initial state of chain " + std::to_string(i) +
                             " has a non-finite potential");
      e.potentials.push_back(phi);
      e.betas.push_back(beta0);
      e.rngs.push_back(Rng::stream(master_seed, i));
    }
    return e;
  }
};

/// Proposes exchanging chains `lo` and `lo+1`. Only states and their cached
/// potentials move; betas and RNG streams stay with their temperatures.
inline bool swap_step(ChainEnsemble& ens, std::size_t lo, const TemperatureLadder& ladder)
{
  if (lo + 1 >= ens.states.size())
    throw Error("swap_step: pair out of range");
  const double u = ens.swap_rng.unit();
  double a = swap_acceptance(ladder[lo], ladder[lo + 1], ens.potentials[lo], ens.potentials[lo + 1]);
  if (u < a) {
    std::swap(ens.states[lo], ens.states[lo + 1]);
    std::swap(ens.potentials[lo], ens.potentials[lo + 1]);
    return true;
  }
  return false;
}

struct RunOptions
{
  unsigned threads = 1;
};

/// Runs the tempered ensemble for burn_in + n_samples iterations and keeps the
/// post-burn-in states of every chain. Step sizes adapt during burn-in only.
/// The result depends on (config, potential, initial states), never on `threads`.
template <LatentPotential P>
TraceStore run_sampler(const P& pot, const TemperatureLadder& ladder, const PcnConfig& cfg,
                       std::span<const Vector> init, RunOptions opts = {})
{
  cfg.validate();
  const std::size_t k = ladder.size();
  if (init.size() != k)
    throw Error("run_sampler: need one initial state per temperature");
  const Index m = pot.latent_dim();

  ChainEnsemble ens = ChainEnsemble::create(pot, init, cfg.beta0, cfg.master_seed);

  const std::size_t total = cfg.burn_in + cfg.n_samples;
  const std::size_t skipped = cfg.keep_burn_in ? 0 : cfg.burn_in;
  const auto rows = static_cast<Index>(total - skipped);

  TraceStore store;
  store.first_iteration = skipped + 1;
  store.burn_in_rows = cfg.burn_in - skipped;
  store.chains.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    store.chains[i].temperature = ladder[i];
    store.chains[i].samples.resize(rows, m);
    store.chains[i].potentials.resize(rows);
  }
  store.swaps.resize(k > 1 ? k - 1 : 0);

  auto record = [&](std::size_t i, std::size_t n) {
    if (n <= skipped)
      return;
    auto row = static_cast<Index>(n - skipped - 1);
    store.chains[i].samples.row(row) = ens.states[i].transpose();
    store.chains[i].potentials[row] = ens.potentials[i];
  };

  // Advance chain i over iterations [from, to].
  auto advance = [&](std::size_t i, std::size_t from, std::size_t to) {
    auto& tr = store.chains[i];
    const double t = ladder[i];
    const bool iid = cfg.iid_prior_at_zero && t == 0.0;
    for (std::size_t n = from; n <= to; ++n) {
      PcnStep s = pcn_step(ens.states[i], ens.potentials[i], ens.betas[i], pot, t, ens.rngs[i], iid);
      ens.states[i] = std::move(s.state);
      ens.potentials[i] = s.potential;
      tr.nonfinite_rejections += s.nonfinite ? 1 : 0;
      if (n <= cfg.burn_in) {
        tr.burnin_accepted += s.accepted ? 1 : 0;
        if (cfg.adapt && !iid)
          ens.betas[i] = robbins_monro_update(ens.betas[i], s.alpha, n, cfg.target_accept, cfg.rm_c);
      } else {
        tr.accepted += s.accepted ? 1 : 0;
        ++tr.proposed;
      }
      record(i, n);
    }
  };

  auto advance_checked = [&](std::size_t i, std::size_t from, std::size_t to) {
    try {
      advance(i, from, to);
    } catch (const std::exception& e) {
      throw Error("chain " + std::to_string(i) + " (T=" + std::to_string(ladder[i]) +
                  "), iterations " + std::to_string(from) + "-" + std::to_string(to) + ": " +
                  e.what());
    }
  };

  auto swap_point = [&](std::size_t n) {
    if (k < 2)
      return;
    std::size_t lo = ens.swap_pointer;
    auto& st = store.swaps[lo];
    ++st.attempted;
    if (swap_step(ens, lo, ladder)) {
      ++st.accepted;
      record(lo, n);
      record(lo + 1, n);
    }
    ens.swap_pointer = (lo + 1) % (k - 1);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(k)));

  if (workers == 1) {
    for (std::size_t from = 1; from <= total;) {
      std::size_t to = std::min(total, (from + cfg.swap_every - 1) / cfg.swap_every * cfg.swap_every);
      for (std::size_t i = 0; i < k; ++i)
        advance_checked(i, from, to);
      if (to % cfg.swap_every == 0)
        swap_point(to);
      from = to + 1;
    }
  } else {
    std::size_t block_from = 1, block_to = 0;
    std::atomic<bool> done{false};
    std::vector<std::exception_ptr> errors(workers);
    std::barrier sync(static_cast<std::ptrdiff_t>(workers + 1));

    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (;;) {
          sync.arrive_and_wait(); // block published
          if (done.load())
            return;
          if (!errors[w]) {
            try {
              for (std::size_t i = w; i < k; i += workers)
                advance_checked(i, block_from, block_to);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          }
          sync.arrive_and_wait(); // block finished
        }
      });
    }

    std::exception_ptr failure;
    for (std::size_t from = 1; from <= total && !failure;) {
      block_from = from;
      block_to = std::min(total, (from + cfg.swap_every - 1) / cfg.swap_every * cfg.swap_every);
      sync.arrive_and_wait();
      sync.arrive_and_wait();
      for (auto& e : errors)
        if (e && !failure)
          failure = e;
      if (!failure && block_to % cfg.swap_every == 0)
        swap_point(block_to);
      from = block_to + 1;
    }
    done.store(true);
    sync.arrive_and_wait();
    pool.clear();
    if (failure)
      std::rethrow_exception(failure);
  }

  for (std::size_t i = 0; i < k; ++i)
    store.chains[i].final_beta = ens.betas[i];
  return store;
}

/// Every chain starts from the same latent point (zero by default).
inline std::vector<Vector> replicate_initial(std::size_t k, const Vector& z0)
{
  return std::vector<Vector>(k, z0);
}

} // namespace genprior
