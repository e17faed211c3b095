#pragma once

#include "core.hpp"
#include "linalg.hpp"

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace genprior {

enum class Activation { identity, relu };

inline std::string_view to_string(Activation a)
{
  return a == Activation::relu ? "relu" : "identity";
}

inline Activation activation_from_string(std::string_view s)
{
  if (s == "relu")
    return Activation::relu;
  if (s == "identity")
    return Activation::identity;
  throw FormatError("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer
{
  Matrix weight; // rows = output width, cols = input width
  Vector bias;
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(Matrix w, Vector b, Activation act)
    : weight(std::move(w)), bias(std::move(b)), activation(act)
  {
    if (bias.size() != weight.rows())
      throw DimensionError("dense layer: bias length " + std::to_string(bias.size()) +
                           " does not match weight rows " + std::to_string(weight.rows()));
    if (!weight.allFinite() || !bias.allFinite())
      throw NumericalError("dense layer: non-finite parameters");
  }

  Index input_dim() const { return weight.cols(); }
  Index output_dim() const { return weight.rows(); }

  Vector forward(const Vector& x) const
  {
    Vector out = weight * x + bias;
    if (activation == Activation::relu)
      out = out.cwiseMax(0.0);
    return out;
  }
};

/// Feed-forward network. The last layer is linear so outputs are unconstrained.
class MlpNetwork
{
public:
  MlpNetwork() = default;

  explicit MlpNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers))
  {
    if (layers_.empty())
      throw DimensionError("mlp: no layers");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      if (layers_[i].input_dim() != layers_[i - 1].output_dim())
        throw DimensionError("mlp: layer " + std::to_string(i) + " expects input " +
                             std::to_string(layers_[i].input_dim()) + " but previous layer emits " +
                             std::to_string(layers_[i - 1].output_dim()));
    }
    if (layers_.back().activation != Activation::identity)
      throw FormatError("mlp: final layer must use the identity activation");
  }

  Index input_dim() const { return layers_.front().input_dim(); }
  Index output_dim() const { return layers_.back().output_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Vector forward(const Vector& x) const
  {
    require_dim(x.size(), input_dim(), "mlp input");
    Vector h = x;
    for (const auto& layer : layers_)
      h = layer.forward(h);
    return h;
  }

private:
  std::vector<DenseLayer> layers_;
};

struct AffineMap
{
  Matrix weight; // d x m
  Vector bias;   // d
};

/// mu(z) = (z, z^2): the curve learnt by a one-dimensional latent model of
/// the banana-shaped Rosenbrock density.
struct ParabolaMap
{
};

/// Deterministic decoder mu: R^m -> R^d. Immutable once built.
class Decoder
{
public:
  using Variant = std::variant<AffineMap, MlpNetwork, ParabolaMap>;

  static Decoder affine(Matrix weight, Vector bias)
  {
    if (bias.size() != weight.rows())
      throw DimensionError("affine decoder: bias length does not match weight rows");
    if (weight.cols() == 0 || weight.rows() == 0)
      throw DimensionError("affine decoder: empty weight matrix");
    if (!weight.allFinite() || !bias.allFinite())
      throw NumericalError("affine decoder: non-finite parameters");
    Index m = weight.cols();
    Index d = weight.rows();
    return Decoder(AffineMap{std::move(weight), std::move(bias)}, m, d);
  }

  static Decoder identity(Index dim)
  {
    return affine(Matrix::Identity(dim, dim), Vector::Zero(dim));
  }

  static Decoder mlp(MlpNetwork net)
  {
    Index m = net.input_dim();
    Index d = net.output_dim();
    return Decoder(std::move(net), m, d);
  }

  static Decoder parabola() { return Decoder(ParabolaMap{}, 1, 2); }

  Index latent_dim() const { return latent_dim_; }
  Index ambient_dim() const { return ambient_dim_; }
  const Variant& variant() const { return variant_; }

  bool is_parabola() const { return std::holds_alternative<ParabolaMap>(variant_); }

  Vector decode(const Vector& z) const
  {
    require_dim(z.size(), latent_dim_, "decode");
    if (!z.allFinite())
      throw NumericalError("decode: non-finite latent input");
    return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AffineMap>) {
          return v.weight * z + v.bias;
        } else if constexpr (std::is_same_v<T, MlpNetwork>) {
          return v.forward(z);
        } else {
          Vector x(2);
          x << z[0], z[0] * z[0];
          return x;
        }
      },
      variant_);
  }

  Vector operator()(const Vector& z) const { return decode(z); }

private:
  Decoder(Variant v, Index m, Index d) : variant_(std::move(v)), latent_dim_(m), ambient_dim_(d)
  {
    if (!decode(Vector::Zero(m)).allFinite())
      throw NumericalError("decoder: decode(0) is not finite");
  }

  Variant variant_;
  Index latent_dim_ = 0;
  Index ambient_dim_ = 0;
};

struct LipschitzBound
{
  double bound = 0.0;
  std::vector<double> layer_norms; // spectral norm of each linear block
};

/// Upper bound on the global Lipschitz constant of the decoder. For a network
/// this is the product of per-layer spectral norms (relu is 1-Lipschitz).
inline LipschitzBound lipschitz_upper_bound(const Decoder& decoder, double tol = 1e-8,
                                            int max_iterations = 1000)
{
  PowerIterationOptions opts{tol, max_iterations};
  return std::visit(
    [&](const auto& v) -> LipschitzBound {
      using T = std::decay_t<decltype(v)>;
      if constexpr (std::is_same_v<T, AffineMap>) {
        double n = spectral_norm(v.weight, opts);
        return {n, {n}};
      } else if constexpr (std::is_same_v<T, MlpNetwork>) {
        LipschitzBound out{1.0, {}};
        for (const auto& layer : v.layers()) {
          double n = spectral_norm(layer.weight, opts);
          out.layer_norms.push_back(n);
          out.bound *= n;
        }
        return out;
      } else {
        throw Error("parabola decoder is not globally Lipschitz");
      }
    },
    decoder.variant());
}

} // namespace genprior
