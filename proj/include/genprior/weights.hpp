#pragma once

// Serialized network weights: a JSON manifest describing layer shapes and
// element offsets into a little-endian f32 blob.
//
//   <name>.manifest.json
//   {
//     "dtype": "f32", "latent_dim": m, "ambient_dim": d,
//     "networks": {
//       "decoder_mean":   [ {"rows", "cols", "activation", "weight_offset", "bias_offset"}, ... ],
//       "encoder_mean":   [ ... ],   (optional)
//       "encoder_logvar": [ ... ]    (optional)
//     }
//   }
//   <name>.bin   row-major weights and biases, offsets counted in elements

#include "core.hpp"
#include "generator.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace genprior {

inline constexpr const char* kDecoderMean = "decoder_mean";
inline constexpr const char* kEncoderMean = "encoder_mean";
inline constexpr const char* kEncoderLogvar = "encoder_logvar";

struct LayerDescriptor
{
  Index rows = 0;
  Index cols = 0;
  Activation activation = Activation::identity;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct WeightsManifest
{
  std::string dtype = "f32";
  Index latent_dim = 0;
  Index ambient_dim = 0;
  std::map<std::string, std::vector<LayerDescriptor>> networks;
};

/// Gaussian encoder q(z|x) = N(mean(x), diag(exp(logvar(x)))).
struct Encoder
{
  MlpNetwork mean;
  std::optional<MlpNetwork> logvar;

  Vector encode_mean(const Vector& x) const { return mean.forward(x); }

  Vector encode_sample(const Vector& x, Rng& rng) const
  {
    if (!logvar)
      throw Error("stochastic encoding requires an encoder_logvar network");
    Vector mu = mean.forward(x);
    Vector lv = logvar->forward(x);
    Vector z(mu.size());
    for (Index i = 0; i < mu.size(); ++i)
      z[i] = mu[i] + std::exp(0.5 * lv[i]) * rng.gaussian();
    return z;
  }
};

struct LoadedModel
{
  Decoder decoder;
  std::optional<Encoder> encoder;
};

inline Vector encode_mean(const LoadedModel& model, const Vector& x)
{
  if (!model.encoder)
    throw Error("weights manifest has no encoder_mean network");
  return model.encoder->encode_mean(x);
}

namespace detail {

inline nlohmann::json manifest_to_json(const WeightsManifest& m)
{
  nlohmann::json j;
  j["dtype"] = m.dtype;
  j["latent_dim"] = m.latent_dim;
  j["ambient_dim"] = m.ambient_dim;
  nlohmann::json nets = nlohmann::json::object();
  for (const auto& [role, layers] : m.networks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : layers) {
      arr.push_back({{"rows", l.rows},
                     {"cols", l.cols},
                     {"activation", std::string(to_string(l.activation))},
                     {"weight_offset", l.weight_offset},
                     {"bias_offset", l.bias_offset}});
    }
    nets[role] = arr;
  }
  j["networks"] = nets;
  return j;
}

inline WeightsManifest manifest_from_json(const nlohmann::json& j)
{
  try {
    WeightsManifest m;
    m.dtype = j.at("dtype").get<std::string>();
    if (m.dtype != "f32")
      throw FormatError("unsupported dtype '" + m.dtype + "'");
    m.latent_dim = j.at("latent_dim").get<Index>();
    m.ambient_dim = j.at("ambient_dim").get<Index>();
    if (m.latent_dim <= 0 || m.ambient_dim <= 0)
      throw FormatError("manifest: latent_dim and ambient_dim must be positive");
    for (const auto& [role, arr] : j.at("networks").items()) {
      if (role != kDecoderMean && role != kEncoderMean && role != kEncoderLogvar)
        throw FormatError("manifest: unknown network role '" + role + "'");
      std::vector<LayerDescriptor> layers;
      for (const auto& l : arr) {
        LayerDescriptor d;
        d.rows = l.at("rows").get<Index>();
        d.cols = l.at("cols").get<Index>();
        d.activation = activation_from_string(l.at("activation").get<std::string>());
        d.weight_offset = l.at("weight_offset").get<std::size_t>();
        d.bias_offset = l.at("bias_offset").get<std::size_t>();
        if (d.rows <= 0 || d.cols <= 0)
          throw FormatError("manifest: layer dimensions must be positive");
        layers.push_back(d);
      }
      m.networks[role] = std::move(layers);
    }
    if (!m.networks.contains(kDecoderMean))
      throw FormatError("manifest: decoder_mean network missing");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

inline std::vector<float> read_blob(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in)
    throw FormatError("cannot open weights blob " + path.string());
  auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0)
    throw FormatError("blob length is not a multiple of 4 bytes");
  std::vector<float> data(bytes / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : data) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = __builtin_bswap32(u);
      f = std::bit_cast<float>(u);
    }
  }
  return data;
}

inline void write_blob(const std::filesystem::path& path, std::vector<float> data)
{
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : data)
      f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot write weights blob " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

inline void check_extents(const WeightsManifest& m, std::size_t blob_len)
{
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& [role, layers] : m.networks) {
    for (const auto& l : layers) {
      auto wsize = static_cast<std::size_t>(l.rows * l.cols);
      auto bsize = static_cast<std::size_t>(l.rows);
      spans.emplace_back(l.weight_offset, l.weight_offset + wsize);
      spans.emplace_back(l.bias_offset, l.bias_offset + bsize);
    }
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].second > blob_len)
      throw FormatError("blob too short: need " + std::to_string(spans[i].second) +
                        " elements, have " + std::to_string(blob_len));
    if (i > 0 && spans[i].first < spans[i - 1].second)
      throw FormatError("manifest: overlapping offsets");
  }
}

inline MlpNetwork build_network(const std::vector<LayerDescriptor>& layers,
                                const std::vector<float>& blob, const std::string& role)
{
  std::vector<DenseLayer> out;
  for (const auto& l : layers) {
    Matrix w(l.rows, l.cols);
    for (Index r = 0; r < l.rows; ++r)
      for (Index c = 0; c < l.cols; ++c)
        w(r, c) = static_cast<double>(blob[l.weight_offset + static_cast<std::size_t>(r * l.cols + c)]);
    Vector b(l.rows);
    for (Index r = 0; r < l.rows; ++r)
      b[r] = static_cast<double>(blob[l.bias_offset + static_cast<std::size_t>(r)]);
    if (!w.allFinite() || !b.allFinite())
      throw NumericalError("weights for '" + role + "' contain NaN/Inf entries");
    out.emplace_back(std::move(w), std::move(b), l.activation);
  }
  return MlpNetwork(std::move(out));
}

inline void append_network(const MlpNetwork& net, std::vector<float>& blob,
                           std::vector<LayerDescriptor>& layers)
{
  for (const auto& layer : net.layers()) {
    LayerDescriptor d;
    d.rows = layer.output_dim();
    d.cols = layer.input_dim();
    d.activation = layer.activation;
    d.weight_offset = blob.size();
    for (Index r = 0; r < d.rows; ++r)
      for (Index c = 0; c < d.cols; ++c)
        blob.push_back(static_cast<float>(layer.weight(r, c)));
    d.bias_offset = blob.size();
    for (Index r = 0; r < d.rows; ++r)
      blob.push_back(static_cast<float>(layer.bias[r]));
    layers.push_back(d);
  }
}

inline MlpNetwork as_network(const Decoder& decoder)
{
  if (const auto* net = std::get_if<MlpNetwork>(&decoder.variant()))
    return *net;
  if (const auto* aff = std::get_if<AffineMap>(&decoder.variant()))
    return MlpNetwork({DenseLayer(aff->weight, aff->bias, Activation::identity)});
  throw Error("parabola decoder has no weights representation");
}

} // namespace detail

inline std::filesystem::path manifest_path(const std::filesystem::path& prefix)
{
  return prefix.string() + ".manifest.json";
}

inline std::filesystem::path blob_path(const std::filesystem::path& prefix)
{
  return prefix.string() + ".bin";
}

inline WeightsManifest read_manifest(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return detail::manifest_from_json(j);
}

inline LoadedModel load_weights(const std::filesystem::path& manifest_file,
                                const std::filesystem::path& blob_file)
{
  WeightsManifest m = read_manifest(manifest_file);
  std::vector<float> blob = detail::read_blob(blob_file);
  detail::check_extents(m, blob.size());

  MlpNetwork dec = detail::build_network(m.networks.at(kDecoderMean), blob, kDecoderMean);
  if (dec.input_dim() != m.latent_dim || dec.output_dim() != m.ambient_dim)
    throw DimensionError("decoder_mean shape does not match latent_dim/ambient_dim");

  std::optional<Encoder> enc;
  if (auto it = m.networks.find(kEncoderMean); it != m.networks.end()) {
    Encoder e{detail::build_network(it->second, blob, kEncoderMean), std::nullopt};
    if (e.mean.input_dim() != m.ambient_dim || e.mean.output_dim() != m.latent_dim)
      throw DimensionError("encoder_mean shape does not match ambient_dim/latent_dim");
    if (auto lv = m.networks.find(kEncoderLogvar); lv != m.networks.end()) {
      e.logvar = detail::build_network(lv->second, blob, kEncoderLogvar);
      if (e.logvar->input_dim() != m.ambient_dim || e.logvar->output_dim() != m.latent_dim)
        throw DimensionError("encoder_logvar shape does not match ambient_dim/latent_dim");
    }
    enc = std::move(e);
  }
  return LoadedModel{Decoder::mlp(std::move(dec)), std::move(enc)};
}

inline LoadedModel load_weights(const std::filesystem::path& prefix)
{
  return load_weights(manifest_path(prefix), blob_path(prefix));
}

/// Writes `<prefix>.manifest.json` and `<prefix>.bin`. Parameters are narrowed to f32.
inline void save_weights(const std::filesystem::path& prefix, const Decoder& decoder,
                         const Encoder* encoder = nullptr)
{
  WeightsManifest m;
  m.latent_dim = decoder.latent_dim();
  m.ambient_dim = decoder.ambient_dim();
  std::vector<float> blob;
  detail::append_network(detail::as_network(decoder), blob, m.networks[kDecoderMean]);
  if (encoder) {
    detail::append_network(encoder->mean, blob, m.networks[kEncoderMean]);
    if (encoder->logvar)
      detail::append_network(*encoder->logvar, blob, m.networks[kEncoderLogvar]);
  }
  {
    std::ofstream out(manifest_path(prefix));
    if (!out)
      throw FormatError("cannot write manifest " + manifest_path(prefix).string());
    out << detail::manifest_to_json(m).dump(2) << '\n';
  }
  detail::write_blob(blob_path(prefix), std::move(blob));
}

inline void save_weights(const std::filesystem::path& prefix, const LoadedModel& model)
{
  save_weights(prefix, model.decoder, model.encoder ? &*model.encoder : nullptr);
}

} // namespace genprior
