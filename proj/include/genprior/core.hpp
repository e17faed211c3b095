#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace genprior {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Every failure raised by the library derives from this.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
  using Error::Error;
};

class FormatError : public Error
{
public:
  using Error::Error;
};

class NumericalError : public Error
{
public:
  using Error::Error;
};

inline bool all_finite(const Eigen::Ref<const Vector>& v)
{
  return v.allFinite();
}

inline void require_dim(Index got, Index want, const char* what)
{
  if (got != want)
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
}

/// SplitMix64 finalizer. Used to derive independent seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream)
{
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Engine plus the distributions that draw from it. Distributions carry
/// state (the normal caches a second variate), so they live with the engine.
struct Rng
{
  std::mt19937_64 engine;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> uniform{0.0, 1.0};

  explicit Rng(std::uint64_t seed = 0) : engine(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t index)
  {
    return Rng(derive_seed(master, index));
  }

  double gaussian() { return normal(engine); }
  double unit() { return uniform(engine); }

  Vector gaussian_vector(Index n)
  {
    Vector v(n);
    for (Index i = 0; i < n; ++i)
      v[i] = normal(engine);
    return v;
  }
};

inline double logit(double p)
{
  return std::log(p / (1.0 - p));
}

inline double sigmoid(double x)
{
  return 1.0 / (1.0 + std::exp(-x));
}

} // namespace genprior
