#include <catch_amalgamated.hpp>

#include <genprior/forward.hpp>

#include "oracles.hpp"

#include <numbers>

using namespace genprior;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector vec(std::initializer_list<double> v)
{
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v)
    out[i++] = x;
  return out;
}

std::shared_ptr<const Decoder> shared(Decoder d)
{
  return std::make_shared<const Decoder>(std::move(d));
}

Matrix random_matrix(Index r, Index c, Rng& rng)
{
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j)
      a(i, j) = rng.gaussian();
  return a;
}

} // namespace

TEST_CASE("identity and mask operators")
{
  Vector x = vec({1, 2, 3});
  CHECK(ForwardOperator::identity(3).apply(x) == x);

  auto m = ForwardOperator::mask({true, false, true});
  CHECK(m.output_dim() == 2);
  CHECK(m.apply(x) == vec({1, 3}));
  CHECK(m.adjoint(vec({1, 3})) == vec({1, 0, 3}));
  CHECK_THROWS_AS(m.apply(vec({1, 2})), DimensionError);
}

TEST_CASE("mask index validation")
{
  CHECK(ForwardOperator::mask_indices(4, {3, 0}).apply(vec({5, 6, 7, 8})) == vec({5, 8}));
  CHECK_THROWS_AS(ForwardOperator::mask_indices(4, {1, 1}), Error);
  CHECK_THROWS_AS(ForwardOperator::mask_indices(4, {4}), Error);
  CHECK_THROWS_AS(ForwardOperator::mask_indices(4, {}), Error);
}

TEST_CASE("random mask keeps a seeded quarter of the pixels")
{
  auto a = ForwardOperator::random_mask(784, 0.25, 9);
  auto b = ForwardOperator::random_mask(784, 0.25, 9);
  auto c = ForwardOperator::random_mask(784, 0.25, 10);
  CHECK(a.output_dim() == 196);
  const auto& ka = std::get<MaskOp>(a.variant()).kept;
  CHECK(ka == std::get<MaskOp>(b.variant()).kept);
  CHECK(ka != std::get<MaskOp>(c.variant()).kept);
  CHECK(std::is_sorted(ka.begin(), ka.end()));
}

TEST_CASE("convolution of a centred delta reproduces the kernel")
{
  Matrix k = gaussian_blur_kernel(3, 0.8);
  auto op = ForwardOperator::convolution(k, 7, 7);
  Vector delta = Vector::Zero(49);
  delta[3 * 7 + 3] = 1.0;
  Vector y = op.apply(delta);
  for (Index u = 0; u < 3; ++u)
    for (Index v = 0; v < 3; ++v)
      CHECK(y[(2 + u) * 7 + (2 + v)] == k(u, v));
  CHECK_THAT(y.sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("blur kernel values")
{
  CHECK(gaussian_blur_kernel(1, 2.0)(0, 0) == 1.0);

  Matrix flat = gaussian_blur_kernel(3, 1e6);
  for (Index i = 0; i < 9; ++i)
    CHECK_THAT(flat.data()[i], WithinAbs(1.0 / 9.0, 1e-9));

  Matrix k = gaussian_blur_kernel(6, 2.0);
  CHECK_THAT(k.sum(), WithinAbs(1.0, 1e-12));
  CHECK((k - k.reverse()).cwiseAbs().maxCoeff() < 1e-17);
  CHECK_THAT(k(0, 0), WithinRel(0.011007348802298533, 1e-12));
  CHECK_THAT(k(2, 2), WithinRel(0.04933151482066013, 1e-12));
  CHECK_THAT(k(0, 2), WithinRel(0.0233025575973275, 1e-12));
  CHECK_THAT(k(1, 4), WithinRel(0.02992107622879854, 1e-12));

  CHECK_THROWS_AS(gaussian_blur_kernel(0, 1.0), Error);
  CHECK_THROWS_AS(gaussian_blur_kernel(3, 0.0), Error);
}

TEST_CASE("convolution matches a dense matrix and its adjoint")
{
  Matrix k = gaussian_blur_kernel(6, 2.0);
  auto op = ForwardOperator::convolution(k, 9, 8);
  Matrix a = oracle::dense_convolution(k, 9, 8);
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    Vector x = rng.gaussian_vector(72);
    Vector y = rng.gaussian_vector(72);
    CHECK((op.apply(x) - a * x).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((op.adjoint(y) - a.transpose() * y).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK_THAT(op.norm(), WithinAbs(oracle::largest_singular_value(a), 1e-8));
}

TEST_CASE("operators are linear")
{
  Rng rng(4);
  std::vector<ForwardOperator> ops{ForwardOperator::identity(36), ForwardOperator::random_mask(36, 0.25, 1),
                                   ForwardOperator::convolution(gaussian_blur_kernel(6, 2.0), 6, 6)};
  for (const auto& op : ops) {
    Vector x1 = rng.gaussian_vector(36), x2 = rng.gaussian_vector(36);
    double a = rng.gaussian(), b = rng.gaussian();
    Vector lhs = op.apply(a * x1 + b * x2);
    Vector rhs = a * op.apply(x1) + b * op.apply(x2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("potential examples")
{
  auto id = shared(Decoder::identity(2));
  Vector z = vec({0.3, -1.1});
  PotentialFn exact(id, Observation(z, 0.7, ForwardOperator::identity(2)));
  CHECK(exact.potential(z) == 0.0);

  PotentialFn zero(id, Observation(Vector::Zero(2), 1.0, ForwardOperator::identity(2)));
  CHECK(zero.potential(vec({1, 1})) == 1.0);
  CHECK(zero(vec({1, 1})) == 1.0);
  CHECK(zero.potential(vec({1, 1})) >= 0.0);

  CHECK_THROWS_AS(zero.potential(vec({1, 1, 1})), DimensionError);
  CHECK_THROWS_AS(PotentialFn(id, Observation(Vector::Zero(3), 1.0, ForwardOperator::identity(3))),
                  DimensionError);
}

TEST_CASE("blurred potential matches a dense evaluation")
{
  Rng rng(6);
  Matrix w = random_matrix(64, 5, rng) * 0.2;
  Vector b = Vector::Constant(64, 0.3);
  Matrix k = gaussian_blur_kernel(6, 2.0);
  Vector y = rng.gaussian_vector(64);
  PotentialFn pf(shared(Decoder::affine(w, b)), Observation(y, 0.25, ForwardOperator::convolution(k, 8, 8)));
  Matrix a = oracle::dense_convolution(k, 8, 8);
  for (int t = 0; t < 5; ++t) {
    Vector z = rng.gaussian_vector(5);
    double expect = (y - a * (w * z + b)).squaredNorm() / (2.0 * 0.25 * 0.25);
    CHECK_THAT(pf.potential(z), WithinRel(expect, 1e-10));
  }
}

TEST_CASE("log likelihood examples")
{
  PotentialFn one(shared(Decoder::identity(1)), Observation(vec({0.4}), 1.0, ForwardOperator::identity(1)));
  CHECK_THAT(one.log_likelihood(vec({0.4})), WithinAbs(-0.5 * std::log(2.0 * std::numbers::pi), 1e-15));
  CHECK_THAT(one.log_likelihood(vec({0.4})), WithinAbs(-0.9189385332, 1e-9));

  // residual norm^2 = 0.5, sigma = 0.5, p = 2
  PotentialFn two(shared(Decoder::identity(2)), Observation(vec({0.5, 0.5}), 0.5, ForwardOperator::identity(2)));
  double expect = -2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * 0.5) - 1.0;
  CHECK_THAT(two.log_likelihood(vec({0.0, 0.0})), WithinAbs(expect, 1e-14));
}

TEST_CASE("likelihood integrates to one over y")
{
  const double sigma = 0.3;
  const Vector z = vec({0.7});
  // Simpson's rule on [-6, 8], far beyond 20 sigma from the mean 0.7.
  const int n = 20000;
  const double lo = -6.0, hi = 8.0, h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    double y = lo + i * h;
    PotentialFn pf(shared(Decoder::identity(1)), Observation(vec({y}), sigma, ForwardOperator::identity(1)));
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(pf.log_likelihood(z));
  }
  CHECK_THAT(s * h / 3.0, WithinAbs(1.0, 1e-6));
}

TEST_CASE("potential rejects non-finite values")
{
  PotentialFn pf(shared(Decoder::identity(1)), Observation(vec({0.0}), 1e-300, ForwardOperator::identity(1)));
  CHECK_THROWS_AS(pf.potential(vec({1e10})), NumericalError);
}

TEST_CASE("observation validation")
{
  CHECK_THROWS_AS(Observation(vec({1}), 0.0, ForwardOperator::identity(1)), Error);
  CHECK_THROWS_AS(Observation(vec({1}), -1.0, ForwardOperator::identity(1)), Error);
  CHECK_THROWS_AS(Observation(vec({NAN}), 1.0, ForwardOperator::identity(1)), NumericalError);

  Rng rng(1);
  Observation o = simulate_observation(vec({1, 2, 3, 4}), ForwardOperator::mask({true, false, false, true}), 0.01, rng);
  CHECK(o.y.size() == 2);
  CHECK(std::abs(o.y[1] - 4.0) < 0.1);
}

TEST_CASE("well-posedness report")
{
  auto check = [](double sigma, Index p) {
    PotentialFn pf(shared(Decoder::identity(p)), Observation(Vector::Zero(p), sigma, ForwardOperator::identity(p)));
    return check_wellposedness(pf);
  };
  auto r1 = check(1.0, 1);
  CHECK(r1.likelihood_bound == std::pow(2.0 * std::numbers::pi, -0.5));
  CHECK_THAT(r1.likelihood_bound, WithinAbs(0.3989, 1e-4));
  auto r2 = check(0.1, 2);
  CHECK_THAT(r2.likelihood_bound, WithinRel(1.0 / (2.0 * std::numbers::pi * 0.01), 1e-15));
  CHECK_THAT(r2.likelihood_bound, WithinAbs(15.915, 1e-3));
  for (const auto& r : {r1, r2}) {
    REQUIRE(r.conditions.size() == 6);
    CHECK(r.all_satisfied());
    CHECK(r.weakly_hellinger_tv_wellposed);
    CHECK(r.wasserstein_wellposed);
    CHECK(r.conditions.front().name == "C1");
    CHECK(r.conditions.back().name == "C6");
  }
}

TEST_CASE("potential growth and local Lipschitz bounds")
{
  Rng rng(8);
  const Index m = 3, d = 16;
  for (bool centred : {true, false}) {
    MlpNetwork net({DenseLayer(random_matrix(10, m, rng), centred ? Vector::Zero(10) : rng.gaussian_vector(10),
                               Activation::relu),
                    DenseLayer(random_matrix(d, 10, rng) * 0.3, centred ? Vector::Zero(d) : rng.gaussian_vector(d),
                               Activation::identity)});
    auto dec = shared(Decoder::mlp(net));
    Vector y = rng.gaussian_vector(d);
    PotentialFn pf(dec, Observation(y, 0.5, ForwardOperator::convolution(gaussian_blur_kernel(3, 1.0), 4, 4)));
    double l = lipschitz_upper_bound(*dec).bound;
    PotentialBounds b = potential_bounds(pf, l);
    CHECK((b.decode_zero_norm == 0.0) == centred);

    int violations = 0;
    for (int i = 0; i < 2000; ++i) {
      Vector z = rng.gaussian_vector(m) * std::exp(1.5 * rng.gaussian());
      if (pf.potential(z) > b.growth_constant * (1.0 + z.squaredNorm()))
        ++violations;
    }
    CHECK(violations == 0);

    for (double r : {0.5, 2.0, 10.0}) {
      double kr = b.local_lipschitz(r, y.norm(), 0.5);
      int bad = 0;
      for (int i = 0; i < 1000; ++i) {
        Vector z = rng.gaussian_vector(m).normalized() * r * rng.unit();
        Vector zp = rng.gaussian_vector(m).normalized() * r * rng.unit();
        if (std::abs(pf.potential(z) - pf.potential(zp)) > kr * (z - zp).norm() * (1.0 + 1e-12))
          ++bad;
      }
      CHECK(bad == 0);
    }
  }
}

TEST_CASE("psnr examples")
{
  Vector ref = Vector::Constant(10, 0.5);
  CHECK(psnr(ref, ref) == std::numeric_limits<double>::infinity());
  CHECK_THAT(psnr(ref.array() + 0.1, ref), WithinAbs(20.0, 1e-10));
  CHECK_THAT(psnr(ref.array() + 0.25, ref), WithinAbs(12.0412, 1e-4));
  CHECK_THAT(psnr(ref.array() + 0.25, ref), WithinAbs(20.0 * std::log10(4.0), 1e-12));
  CHECK_THROWS_AS(psnr(ref, Vector::Zero(3)), DimensionError);
}
