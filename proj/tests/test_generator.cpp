#include <catch_amalgamated.hpp>

#include <genprior/generator.hpp>

#include "oracles.hpp"

#include <cstring>

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

Matrix random_matrix(Index r, Index c, Rng& rng)
{
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j)
      a(i, j) = rng.gaussian();
  return a;
}

MlpNetwork random_mlp(Index m, Index hidden, Index d, Rng& rng)
{
  return MlpNetwork({DenseLayer(random_matrix(hidden, m, rng), rng.gaussian_vector(hidden), Activation::relu),
                     DenseLayer(random_matrix(hidden, hidden, rng), rng.gaussian_vector(hidden), Activation::relu),
                     DenseLayer(random_matrix(d, hidden, rng), rng.gaussian_vector(d), Activation::identity)});
}

} // namespace

TEST_CASE("parabola decoder maps z to (z, z^2)")
{
  Decoder p = Decoder::parabola();
  CHECK(p.latent_dim() == 1);
  CHECK(p.ambient_dim() == 2);
  CHECK(p.decode(vec({0.0})) == vec({0.0, 0.0}));
  CHECK(p.decode(vec({2.0})) == vec({2.0, 4.0}));
  CHECK(p.decode(vec({-1.5})) == vec({-1.5, 2.25}));
}

TEST_CASE("affine decoder arithmetic")
{
  Matrix w(2, 1);
  w << 2.0, 0.0;
  Decoder a = Decoder::affine(w, vec({1.0, 1.0}));
  CHECK(a.decode(vec({3.0})) == vec({7.0, 1.0}));
  CHECK(a(vec({3.0})) == a.decode(vec({3.0})));
}

TEST_CASE("decode rejects bad inputs")
{
  Decoder p = Decoder::parabola();
  CHECK_THROWS_AS(p.decode(vec({1.0, 2.0})), DimensionError);
  CHECK_THROWS_AS(p.decode(vec({std::nan("")})), NumericalError);
  CHECK_THROWS_AS(p.decode(vec({INFINITY})), NumericalError);
}

TEST_CASE("decoder construction validates parameters")
{
  CHECK_THROWS_AS(Decoder::affine(Matrix::Ones(2, 1), Vector::Zero(3)), DimensionError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(Decoder::affine(bad, Vector::Zero(2)), NumericalError);
  CHECK_THROWS_AS(DenseLayer(Matrix::Ones(2, 2), Vector::Zero(1), Activation::identity), DimensionError);
  CHECK_THROWS_AS(MlpNetwork(std::vector<DenseLayer>{}), DimensionError);
  CHECK_THROWS_AS(MlpNetwork({DenseLayer(Matrix::Ones(3, 2), Vector::Zero(3), Activation::relu),
                              DenseLayer(Matrix::Ones(1, 2), Vector::Zero(1), Activation::identity)}),
                  DimensionError);
  CHECK_THROWS_AS(MlpNetwork({DenseLayer(Matrix::Ones(3, 2), Vector::Zero(3), Activation::relu)}),
                  FormatError);
}

TEST_CASE("activation names round trip")
{
  CHECK(activation_from_string(to_string(Activation::relu)) == Activation::relu);
  CHECK(activation_from_string(to_string(Activation::identity)) == Activation::identity);
  CHECK_THROWS_AS(activation_from_string("tanh"), FormatError);
}

TEST_CASE("single-layer networks")
{
  MlpNetwork id({DenseLayer(Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity)});
  CHECK(id.forward(vec({0.5, 0.5, 0.5})) == vec({0.5, 0.5, 0.5}));

  DenseLayer neg(-Matrix::Identity(2, 2), Vector::Zero(2), Activation::relu);
  CHECK(neg.forward(vec({1.0, 1.0})) == vec({0.0, 0.0}));
}

TEST_CASE("decode is bitwise deterministic")
{
  Rng rng(5);
  Decoder d = Decoder::mlp(random_mlp(4, 16, 9, rng));
  Vector z = rng.gaussian_vector(4);
  Vector a = d.decode(z), b = d.decode(z);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

TEST_CASE("Lipschitz bound of simple decoders")
{
  Matrix w = Matrix::Zero(2, 2);
  w.diagonal() << 2.0, 3.0;
  auto lb = lipschitz_upper_bound(Decoder::affine(w, Vector::Zero(2)));
  CHECK_THAT(lb.bound, WithinAbs(3.0, 3.0 * 1e-7));
  CHECK(lb.bound >= 3.0);

  MlpNetwork two({DenseLayer(2.0 * Matrix::Identity(3, 3), Vector::Zero(3), Activation::relu),
                  DenseLayer(5.0 * Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity)});
  auto l2 = lipschitz_upper_bound(Decoder::mlp(two));
  CHECK_THAT(l2.bound, WithinAbs(10.0, 10.0 * 1e-7));
  REQUIRE(l2.layer_norms.size() == 2);
  CHECK_THAT(l2.layer_norms[0], WithinRel(2.0, 1e-7));
}

TEST_CASE("parabola has no global Lipschitz bound")
{
  CHECK_THROWS_WITH(lipschitz_upper_bound(Decoder::parabola()),
                    Catch::Matchers::ContainsSubstring("not globally Lipschitz"));
}

TEST_CASE("spectral norm of a random 50x20 matrix matches dense SVD")
{
  Rng rng(11);
  Matrix a = random_matrix(50, 20, rng);
  double expect = oracle::largest_singular_value(a);
  auto lb = lipschitz_upper_bound(Decoder::affine(a, Vector::Zero(50)));
  CHECK_THAT(lb.bound, WithinAbs(expect, 1e-6));
}

TEST_CASE("spectral norm with nearly equal top singular values")
{
  // Slow contraction: the per-step change is far below the remaining error.
  Rng rng(12);
  Eigen::HouseholderQR<Matrix> qr_u(random_matrix(30, 30, rng)), qr_v(random_matrix(30, 30, rng));
  Matrix u = qr_u.householderQ(), v = qr_v.householderQ();
  Vector s = Vector::LinSpaced(30, 0.1, 5.0);
  s[0] = 10.0;
  s[1] = 9.8;
  Matrix a = u * s.asDiagonal() * v.transpose();
  CHECK_THAT(spectral_norm(a), WithinAbs(oracle::largest_singular_value(a), 1e-6));
  CHECK_THAT(spectral_norm(a), WithinAbs(10.0, 1e-6));
}

TEST_CASE("spectral norm edge cases")
{
  CHECK(spectral_norm(Matrix::Zero(3, 4)) == 0.0);
  Matrix one(1, 1);
  one << -4.0;
  CHECK_THAT(spectral_norm(one), WithinRel(4.0, 1e-7));
  Matrix rank1 = Vector::Ones(5) * Vector::Ones(3).transpose();
  CHECK_THAT(spectral_norm(rank1), WithinRel(std::sqrt(15.0), 1e-7));
}

TEST_CASE("mlp Lipschitz bound and linear growth hold on random pairs")
{
  Rng rng(21);
  Decoder d = Decoder::mlp(random_mlp(3, 12, 7, rng));
  double l = lipschitz_upper_bound(d).bound;
  double mu0 = d.decode(Vector::Zero(3)).norm();
  int violations = 0;
  for (int i = 0; i < 2000; ++i) {
    Vector z = 3.0 * rng.gaussian_vector(3);
    Vector zp = z + rng.gaussian_vector(3) * std::exp(rng.gaussian());
    if ((d.decode(z) - d.decode(zp)).norm() > l * (z - zp).norm() * (1.0 + 1e-12))
      ++violations;
    if (d.decode(z).norm() > (mu0 + l * z.norm()) * (1.0 + 1e-12))
      ++violations;
  }
  CHECK(violations == 0);
}
