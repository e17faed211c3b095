#include <catch_amalgamated.hpp>

#include <genprior/evidence.hpp>

#include "oracles.hpp"

#include <numbers>

using namespace genprior;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TraceStore constant_store(const std::vector<double>& temps, double phi, Index rows)
{
  TraceStore s;
  for (double t : temps) {
    ChainTrace c;
    c.temperature = t;
    c.samples = Matrix::Zero(rows, 1);
    c.potentials = Vector::Constant(rows, phi);
    s.chains.push_back(c);
  }
  return s;
}

} // namespace

TEST_CASE("batch means")
{
  std::vector<double> v(100, 2.5);
  auto c = batch_means(v);
  CHECK(c.mean == 2.5);
  CHECK(c.standard_error == 0.0);

  std::vector<double> one{4.0};
  CHECK(batch_means(one).mean == 4.0);
  CHECK(batch_means(one).standard_error == 0.0);
  CHECK_THROWS_AS(batch_means(std::vector<double>{}), Error);

  Rng rng(1);
  std::vector<double> x(10000);
  for (auto& e : x)
    e = rng.gaussian();
  auto b = batch_means(x);
  auto o = oracle::batch_mean_se(x, 100);
  CHECK_THAT(b.mean, WithinAbs(o.mean, 1e-15));
  CHECK_THAT(b.standard_error, WithinRel(o.se, 1e-12));
  CHECK_THAT(b.standard_error, WithinAbs(0.01, 0.002));
}

TEST_CASE("constant integrand is integrated exactly")
{
  auto l = TemperatureLadder::power(10);
  std::vector<double> means(10, -1.2655);
  auto e = thermodynamic_integration(l.temps(), means);
  CHECK_THAT(e.log_evidence, WithinAbs(-1.2655, 1e-14));
  CHECK(e.warnings.empty());
}

TEST_CASE("duplicate temperatures contribute nothing")
{
  std::vector<double> t{0.0, 0.2, 0.5, 1.0};
  std::vector<double> m{-9.0, -4.0, -2.0, -1.5};
  std::vector<double> td{0.0, 0.2, 0.2, 0.5, 1.0};
  std::vector<double> md{-9.0, -4.0, -4.0, -2.0, -1.5};
  CHECK_THAT(thermodynamic_integration(td, md).log_evidence,
             WithinAbs(thermodynamic_integration(t, m).log_evidence, 1e-15));
  double manual = 0.2 * (-13.0) / 2 + 0.3 * (-6.0) / 2 + 0.5 * (-3.5) / 2;
  CHECK_THAT(thermodynamic_integration(t, m).log_evidence, WithinAbs(manual, 1e-15));
}

TEST_CASE("standard errors propagate through trapezoid weights")
{
  std::vector<double> t{0.0, 0.5, 1.0};
  std::vector<double> m{-3.0, -2.0, -1.0};
  std::vector<double> se{0.2, 0.1, 0.4};
  auto e = thermodynamic_integration(t, m, se);
  double expect = std::sqrt(std::pow(0.25 * 0.2, 2) + std::pow(0.5 * 0.1, 2) + std::pow(0.25 * 0.4, 2));
  CHECK_THAT(e.standard_error, WithinRel(expect, 1e-14));
}

TEST_CASE("ladder problems")
{
  std::vector<double> m{-1.0, -1.0};
  CHECK(thermodynamic_integration(std::vector<double>{0.1, 1.0}, m).warnings.size() == 1);
  CHECK(thermodynamic_integration(std::vector<double>{0.0, 0.9}, m).warnings.size() == 1);
  CHECK_THROWS_AS(thermodynamic_integration(std::vector<double>{0.0, 0.5, 1.0}, m), Error);
  CHECK_THROWS_AS(thermodynamic_integration(std::vector<double>{0.5, 0.0}, m), Error);
  CHECK_THROWS_AS(thermodynamic_integration(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("per-temperature means of constant chains")
{
  auto s = constant_store({0.0, 0.5, 1.0}, 0.7, 50);
  const double c = -0.5 * std::log(2.0 * std::numbers::pi);
  auto tm = per_temperature_loglik_means(s, c);
  for (double v : tm.means)
    CHECK_THAT(v, WithinAbs(c - 0.7, 1e-14));
  CHECK(tm.means[0] == tm.means[2]);
  CHECK(tm.temperatures == std::vector<double>{0.0, 0.5, 1.0});

  s.chains[1].potentials.resize(0);
  s.chains[1].samples.resize(0, 1);
  CHECK_THROWS_AS(per_temperature_loglik_means(s, c), Error);
}

TEST_CASE("prior chain mean agrees with direct prior sampling")
{
  Matrix g(2, 1);
  g << 1.0, -0.5;
  Vector y(2);
  y << 0.3, 0.8;
  auto dec = std::make_shared<const Decoder>(Decoder::affine(g, Vector::Zero(2)));
  PotentialFn pf(dec, Observation(y, 0.7, ForwardOperator::identity(2)));
  PcnConfig cfg;
  cfg.burn_in = 0;
  cfg.n_samples = 40000;
  cfg.master_seed = 4;
  auto store = run_sampler(pf, TemperatureLadder({0.0, 1.0}), cfg, replicate_initial(2, Vector::Zero(1)));
  auto tm = per_temperature_loglik_means(store, pf);

  Rng rng(123);
  std::vector<double> direct(40000);
  for (auto& v : direct)
    v = pf.log_likelihood(rng.gaussian_vector(1));
  auto ref = oracle::batch_mean_se(direct, 200);
  double se = std::hypot(ref.se, tm.standard_errors[0]);
  INFO("chain " << tm.means[0] << " direct " << ref.mean << " se " << se);
  CHECK(std::abs(tm.means[0] - ref.mean) < 3.0 * se);
  CHECK_THAT(tm.means[0], WithinAbs(oracle::exact_ti_integrand(g, Vector::Zero(2), y, 0.7, 0.0), 4.0 * se));
}

TEST_CASE("trapezoid of the exact integrand approaches the closed-form evidence")
{
  Matrix g(1, 1);
  g << 1.0;
  Vector b = Vector::Zero(1), y = Vector::Zero(1);
  CHECK_THAT(oracle::gaussian_log_evidence(g, b, y, 1.0), WithinAbs(-0.5 * std::log(4.0 * std::numbers::pi), 1e-14));
  CHECK_THAT(oracle::gaussian_log_evidence(g, b, y, 1.0), WithinAbs(-1.26551, 1e-5));

  auto l = TemperatureLadder::power(200, 3.0);
  std::vector<double> m;
  for (double t : l.temps())
    m.push_back(oracle::exact_ti_integrand(g, b, y, 1.0, t));
  CHECK_THAT(thermodynamic_integration(l.temps(), m).log_evidence, WithinAbs(-1.26551, 1e-4));

  auto mono = thermodynamic_integration(l.temps(), m);
  CHECK(integrand_monotonicity_violations(mono).empty());
}

TEST_CASE("monotonicity violations flag under-sampled rungs")
{
  std::vector<double> t{0.0, 0.5, 1.0};
  std::vector<double> m{-5.0, -3.0, -3.4};
  auto tight = thermodynamic_integration(t, m, std::vector<double>{0.05, 0.05, 0.05});
  CHECK(integrand_monotonicity_violations(tight) == std::vector<std::size_t>{1});
  auto loose = thermodynamic_integration(t, m, std::vector<double>{0.5, 0.5, 0.5});
  CHECK(integrand_monotonicity_violations(loose).empty());
}

TEST_CASE("misspecification test")
{
  ReferenceDistribution ref({-10.0, -3.0, -5.0, -4.0, -6.0});
  CHECK(ref.values().front() == -10.0);
  CHECK(misspecification_test(ref, -11.0, 0.05) == MisspecificationDecision::rejected);
  CHECK(misspecification_test(ref, ref.centile(0.5), 0.05) == MisspecificationDecision::in_dataset);
  CHECK(ref.centile(0.5) == -5.0);
  // Linear interpolation between order statistics: h = 0.25 * 4 = 1.
  CHECK(ref.centile(0.25) == -6.0);
  CHECK_THAT(ref.centile(0.05), WithinAbs(-10.0 + 0.2 * 4.0, 1e-14));
  CHECK(misspecification_test(ref, ref.centile(0.05), 0.05) == MisspecificationDecision::in_dataset);
  CHECK(std::string(to_string(MisspecificationDecision::rejected)) == "rejected");
  CHECK_THROWS_AS(misspecification_test(ref, 0.0, 0.0), Error);
  CHECK_THROWS_AS(ReferenceDistribution({}), Error);
}
