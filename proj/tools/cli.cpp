#include "cli.hpp"

#include <genprior/genprior.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef GENPRIOR_VERSION
#define GENPRIOR_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace genprior::cli {

const char* version()
{
  return GENPRIOR_VERSION;
}

namespace {

constexpr const char* kAcceptanceConvention =
  "pcn: accept with min(1, exp(T * (Phi(current) - Phi(proposal)))), Phi = |y - A mu(z)|^2 / "
  "(2 sigma^2) >= 0; swap: min(1, exp((T_hi - T_lo) * (Phi(z_hi) - Phi(z_lo))))";

class UsageError : public Error
{
public:
  using Error::Error;
};

json to_json_number(double v)
{
  if (!std::isfinite(v))
    return nullptr;
  return v;
}

void write_json(const fs::path& path, const json& j)
{
  auto out = io::open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw UsageError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Outputs are staged next to the target directory and moved into place on
/// success, so a failed run never leaves a half-written --out.
class OutputDir
{
public:
  OutputDir(fs::path target, bool force) : target_(std::move(target))
  {
    if (fs::exists(target_) && !fs::is_empty(target_) && !force)
      throw UsageError("output directory " + target_.string() +
                       " exists and is not empty (use --force to replace it)");
    staging_ = target_;
    staging_ += ".staging";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  ~OutputDir()
  {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  fs::path operator/(const fs::path& rel) const { return staging_ / rel; }

  void commit()
  {
    if (fs::exists(target_))
      fs::remove_all(target_);
    if (target_.has_parent_path())
      fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

std::string default_out_root()
{
  if (const char* env = std::getenv("GENPRIOR_OUT"); env && *env)
    return env;
  return "out";
}

// --- decoder sources -----------------------------------------------------

struct DecoderSource
{
  std::string spec;
  std::shared_ptr<const Decoder> decoder;
  std::optional<Encoder> encoder;
};

Encoder identity_encoder(Index d)
{
  return Encoder{MlpNetwork({DenseLayer(Matrix::Identity(d, d), Vector::Zero(d), Activation::identity)}),
                 std::nullopt};
}

DecoderSource load_decoder(const std::string& spec)
{
  DecoderSource src;
  src.spec = spec;
  if (spec == "parabola") {
    src.decoder = std::make_shared<const Decoder>(Decoder::parabola());
    return src;
  }
  if (spec.rfind("identity:", 0) == 0) {
    Index d = 0;
    try {
      d = std::stol(spec.substr(9));
    } catch (const std::exception&) {
      throw UsageError("bad decoder spec '" + spec + "'");
    }
    if (d <= 0)
      throw UsageError("identity decoder dimension must be positive");
    src.decoder = std::make_shared<const Decoder>(Decoder::identity(d));
    src.encoder = identity_encoder(d);
    return src;
  }
  std::string prefix = spec;
  const std::string suffix = ".manifest.json";
  if (prefix.size() > suffix.size() &&
      prefix.compare(prefix.size() - suffix.size(), suffix.size(), suffix) == 0)
    prefix.resize(prefix.size() - suffix.size());
  if (!fs::exists(manifest_path(prefix)))
    throw UsageError("decoder '" + spec + "': no " + manifest_path(prefix).string());
  if (!fs::exists(blob_path(prefix)))
    throw UsageError("decoder '" + spec + "': no " + blob_path(prefix).string());
  LoadedModel model = load_weights(prefix);
  src.decoder = std::make_shared<const Decoder>(std::move(model.decoder));
  src.encoder = std::move(model.encoder);
  return src;
}

// --- forward operators ---------------------------------------------------

struct OperatorOptions
{
  std::string op = "identity";
  double keep_fraction = 0.25;
  std::optional<std::uint64_t> mask_seed;
  Index kernel_size = 6;
  double bandwidth = 2.0;
  Index height = 0;
  Index width = 0;

  void add_to(CLI::App* app)
  {
    app->add_option("--op", op, "identity|denoise|inpaint|mask|deblur|blur")
      ->check(CLI::IsMember({"identity", "denoise", "inpaint", "mask", "deblur", "blur"}));
    app->add_option("--keep-fraction", keep_fraction, "fraction of observed pixels for inpainting")
      ->check(CLI::Range(0.0, 1.0));
    app->add_option("--mask-seed", mask_seed, "seed for the inpainting mask (defaults to --seed)");
    app->add_option("--kernel-size", kernel_size, "blur kernel size")->check(CLI::PositiveNumber);
    app->add_option("--bandwidth", bandwidth, "blur kernel standard deviation in pixels")
      ->check(CLI::PositiveNumber);
    app->add_option("--height", height, "image height (default: square)");
    app->add_option("--width", width, "image width (default: square)");
  }

  std::pair<Index, Index> shape(Index d) const
  {
    if (height > 0 && width > 0) {
      if (height * width != d)
        throw UsageError("--height x --width does not match image length " + std::to_string(d));
      return {height, width};
    }
    return io::infer_shape(d);
  }
};

struct BuiltOperator
{
  ForwardOperator op;
  json description;
};

BuiltOperator build_operator(const OperatorOptions& o, Index d, std::uint64_t seed)
{
  auto [h, w] = o.shape(d);
  json j;
  j["input_dim"] = d;
  j["height"] = h;
  j["width"] = w;
  if (o.op == "identity" || o.op == "denoise") {
    j["type"] = "identity";
    j["output_dim"] = d;
    return {ForwardOperator::identity(d), j};
  }
  if (o.op == "inpaint" || o.op == "mask") {
    std::uint64_t ms = o.mask_seed.value_or(seed);
    ForwardOperator op = ForwardOperator::random_mask(d, o.keep_fraction, ms);
    j["type"] = "mask";
    j["keep_fraction"] = o.keep_fraction;
    j["mask_seed"] = ms;
    j["mask_indices"] = std::get<MaskOp>(op.variant()).kept;
    j["output_dim"] = op.output_dim();
    return {std::move(op), j};
  }
  j["type"] = "convolution";
  j["kernel_size"] = o.kernel_size;
  j["bandwidth"] = o.bandwidth;
  j["output_dim"] = d;
  return {ForwardOperator::convolution(gaussian_blur_kernel(o.kernel_size, o.bandwidth), h, w), j};
}

ForwardOperator operator_from_json(const json& j)
{
  try {
    const std::string type = j.at("type");
    const Index d = j.at("input_dim");
    if (type == "identity")
      return ForwardOperator::identity(d);
    if (type == "mask")
      return ForwardOperator::mask_indices(d, j.at("mask_indices").get<std::vector<Index>>());
    if (type == "convolution")
      return ForwardOperator::convolution(
        gaussian_blur_kernel(j.at("kernel_size").get<Index>(), j.at("bandwidth").get<double>()),
        j.at("height").get<Index>(), j.at("width").get<Index>());
    throw FormatError("unknown operator type '" + type + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad operator description: ") + e.what());
  }
}

struct LoadedObservation
{
  Observation obs;
  json sidecar;
  fs::path dir;
};

LoadedObservation load_observation(const fs::path& sidecar_path)
{
  json j = read_json(sidecar_path);
  fs::path dir = sidecar_path.parent_path();
  try {
    ForwardOperator op = operator_from_json(j.at("operator"));
    Vector y = io::read_vector_csv(dir / j.at("y_file").get<std::string>());
    return {Observation(std::move(y), j.at("sigma").get<double>(), std::move(op)), j, dir};
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path.string() + ": " + e.what());
  }
}

// --- sampler options -----------------------------------------------------

struct SamplerOptions
{
  std::size_t chains = 3;
  std::string ladder = "auto";
  double beta0 = 0.1;
  double target_accept = 0.25;
  double rm_c = 3.0;
  std::size_t swap_every = 10;
  std::size_t burn_in = 20000;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool iid_prior = false;

  void add_to(CLI::App* app)
  {
    app->add_option("--chains", chains, "number of tempered chains")->check(CLI::PositiveNumber);
    app->add_option("--ladder", ladder, "auto|linear|power5|explicit:T0,T1,...,1");
    app->add_option("--beta0", beta0, "initial pCN step size")->check(CLI::Range(0.0, 1.0));
    app->add_option("--target-accept", target_accept, "Robbins-Monro target acceptance rate")
      ->check(CLI::Range(0.0, 1.0));
    app->add_option("--rm-c", rm_c, "Robbins-Monro gain constant c (c_n = c / n)")
      ->check(CLI::PositiveNumber);
    app->add_option("--swap-every", swap_every, "iterations between swap proposals")
      ->check(CLI::PositiveNumber);
    app->add_option("--burn-in", burn_in, "adaptive burn-in iterations");
    app->add_option("--samples", samples, "stored post-burn-in samples per chain");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--threads", threads, "worker threads (results do not depend on this)")
      ->check(CLI::PositiveNumber);
    app->add_flag("--iid-prior", iid_prior, "T = 0 chains draw independent prior samples");
  }

  TemperatureLadder make_ladder() const
  {
    if (ladder == "auto")
      return TemperatureLadder::default_for(chains);
    if (ladder == "linear")
      return TemperatureLadder::linear(chains);
    if (ladder == "power5")
      return TemperatureLadder::power(chains, 5.0);
    if (ladder.rfind("explicit:", 0) == 0) {
      std::vector<double> t;
      for (const auto& cell : io::split(ladder.substr(9))) {
        double v = 0.0;
        if (!io::parse_double(cell, v))
          throw UsageError("bad ladder entry '" + cell + "'");
        t.push_back(v);
      }
      try {
        return TemperatureLadder(std::move(t));
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    }
    throw UsageError("unknown ladder '" + ladder + "'");
  }

  PcnConfig make_config(std::uint64_t master_seed) const
  {
    PcnConfig c;
    c.beta0 = beta0;
    c.target_accept = target_accept;
    c.rm_c = rm_c;
    c.swap_every = swap_every;
    c.burn_in = burn_in;
    c.n_samples = samples;
    c.master_seed = master_seed;
    c.iid_prior_at_zero = iid_prior;
    try {
      c.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return c;
  }

  json to_json(const TemperatureLadder& l) const
  {
    return {{"chains", l.size()},
            {"ladder_spec", ladder},
            {"ladder", l.temps()},
            {"beta0", beta0},
            {"target_accept", target_accept},
            {"rm_c", rm_c},
            {"swap_every", swap_every},
            {"burn_in", burn_in},
            {"samples", samples},
            {"seed", seed},
            {"iid_prior", iid_prior},
            {"initial_state", "zero"}};
  }
};

json base_manifest(const std::string& command)
{
  return {{"command", command}, {"version", version()}, {"acceptance_convention", kAcceptanceConvention}};
}

json trace_summary(const TraceStore& store)
{
  json chains = json::array();
  for (std::size_t i = 0; i < store.chains.size(); ++i) {
    const auto& c = store.chains[i];
    chains.push_back({{"index", i},
                      {"temperature", c.temperature},
                      {"acceptance_rate", c.acceptance_rate()},
                      {"final_beta", c.final_beta},
                      {"nonfinite_rejections", c.nonfinite_rejections}});
  }
  json swaps = json::array();
  for (std::size_t i = 0; i < store.swaps.size(); ++i)
    swaps.push_back({{"pair", {i, i + 1}},
                     {"attempted", store.swaps[i].attempted},
                     {"accepted", store.swaps[i].accepted},
                     {"rate", store.swaps[i].rate()}});
  return {{"chains", chains}, {"swaps", swaps}, {"first_iteration", store.first_iteration}};
}

std::string chain_file(std::size_t i)
{
  std::ostringstream s;
  s << "trace_T" << (i < 10 ? "0" : "") << i << ".csv";
  return s.str();
}

TraceStore read_trace_dir(const fs::path& dir, json* manifest_out = nullptr)
{
  json j = read_json(dir / "run_manifest.json");
  TraceStore store;
  try {
    for (const auto& c : j.at("traces").at("chains")) {
      store.chains.push_back(io::read_trace_csv(dir / c.at("file").get<std::string>(),
                                                c.at("temperature").get<double>()));
      store.chains.back().final_beta = c.at("final_beta").get<double>();
    }
    store.first_iteration = j.at("traces").at("first_iteration").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError((dir / "run_manifest.json").string() + ": " + e.what());
  }
  if (store.chains.empty())
    throw FormatError(dir.string() + ": manifest lists no chains");
  if (manifest_out)
    *manifest_out = std::move(j);
  return store;
}

void write_image_pair(const OutputDir& out, const std::string& stem, const Vector& x,
                      std::pair<Index, Index> shape, const std::string& header = "value")
{
  io::write_vector_csv(out / (stem + ".csv"), x, header);
  io::write_pgm(out / (stem + ".pgm"), x, shape.first, shape.second);
}

class Timer
{
public:
  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_timings(const OutputDir& out, const Timer& t, unsigned threads)
{
  write_json(out / "timings.json", {{"wall_time_seconds", t.seconds()}, {"threads", threads}});
}

// --- per-image pipeline shared by batch commands ---------------------------

struct ImageRunResult
{
  Observation obs;
  TraceStore store;
  PotentialFn pf;
};

ImageRunResult simulate_and_sample(const Vector& truth, const DecoderSource& dec,
                                   const OperatorOptions& oo, double sigma,
                                   const SamplerOptions& so, std::uint64_t image_seed)
{
  BuiltOperator bop = build_operator(oo, truth.size(), oo.mask_seed.value_or(so.seed));
  Rng sim(derive_seed(image_seed, 0));
  Observation obs = simulate_observation(truth, bop.op, sigma, sim);
  PotentialFn pf(dec.decoder, obs);
  TemperatureLadder ladder = so.make_ladder();
  PcnConfig cfg = so.make_config(derive_seed(image_seed, 1));
  auto init = replicate_initial(ladder.size(), Vector::Zero(pf.latent_dim()));
  TraceStore store = run_sampler(pf, ladder, cfg, init, {so.threads});
  return {obs, std::move(store), pf};
}

void require_images(const std::vector<fs::path>& files, const fs::path& dir)
{
  if (files.empty())
    throw UsageError("dataset directory " + dir.string() + " contains no .csv or .pgm images");
}

// --- commands ------------------------------------------------------------

struct Common
{
  std::string out = default_out_root();
  bool force = false;

  void add_to(CLI::App* app)
  {
    app->add_option("--out", out, "output directory (default $GENPRIOR_OUT or ./out)");
    app->add_flag("--force", force, "replace an existing non-empty output directory");
  }
};

int cmd_simulate(const Common& common, const std::string& image_path, const OperatorOptions& oo,
                 double sigma, std::uint64_t seed)
{
  Timer timer;
  Vector x = io::read_image(image_path);
  BuiltOperator bop = build_operator(oo, x.size(), oo.mask_seed.value_or(seed));
  Rng rng(derive_seed(seed, 0));
  Observation obs = simulate_observation(x, bop.op, sigma, rng);

  OutputDir out(common.out, common.force);
  io::write_vector_csv(out / "y.csv", obs.y);
  if (obs.op.output_dim() == x.size())
    io::write_pgm(out / "y.pgm", obs.y, bop.description["height"], bop.description["width"]);
  json sidecar = {{"operator", bop.description}, {"sigma", sigma}, {"seed", seed}, {"y_file", "y.csv"}};
  write_json(out / "observation.json", sidecar);
  json m = base_manifest("simulate");
  m["parameters"] = {{"image", image_path}, {"op", oo.op}, {"sigma", sigma}, {"seed", seed}};
  m["outputs"] = {"y.csv", "observation.json"};
  write_json(out / "run_manifest.json", m);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

int cmd_sample(const Common& common, const std::string& decoder_spec,
               const std::string& observation_path, const SamplerOptions& so)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  LoadedObservation lo = load_observation(observation_path);
  std::optional<PotentialFn> pf;
  try {
    pf.emplace(dec.decoder, lo.obs);
  } catch (const DimensionError& e) {
    throw UsageError(e.what());
  }
  TemperatureLadder ladder = so.make_ladder();
  PcnConfig cfg = so.make_config(so.seed);
  auto init = replicate_initial(ladder.size(), Vector::Zero(pf->latent_dim()));
  TraceStore store = run_sampler(*pf, ladder, cfg, init, {so.threads});

  OutputDir out(common.out, common.force);
  json summary = trace_summary(store);
  for (std::size_t i = 0; i < store.chains.size(); ++i) {
    io::write_trace_csv(out / chain_file(i), store.chains[i], store.first_iteration);
    summary["chains"][i]["file"] = chain_file(i);
  }
  json m = base_manifest("sample");
  m["parameters"] = {{"decoder", decoder_spec},
                     {"observation", observation_path},
                     {"sampler", so.to_json(ladder)}};
  m["traces"] = summary;
  write_json(out / "run_manifest.json", m);
  write_timings(out, timer, so.threads);
  out.commit();
  return kExitOk;
}

int cmd_estimate(const Common& common, const std::string& decoder_spec, const std::string& traces,
                 const std::string& truth_path, const std::string& observation_path, int grid,
                 double grid_span)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  TraceStore store = read_trace_dir(traces);
  const ChainTrace& post = store.posterior();
  if (post.samples.cols() != dec.decoder->latent_dim())
    throw UsageError("trace latent dimension does not match the decoder");

  PosteriorSummary s = mmse_estimate(post, *dec.decoder);
  auto shape = io::infer_shape(dec.decoder->ambient_dim());

  OutputDir out(common.out, common.force);
  write_image_pair(out, "mmse", s.mmse_image, shape);
  io::write_vector_csv(out / "variance.csv", s.pixel_variances);
  Vector var_img = s.pixel_variances;
  if (var_img.maxCoeff() > 0.0)
    var_img /= var_img.maxCoeff();
  io::write_pgm(out / "variance.pgm", var_img, shape.first, shape.second);

  json summary = {{"n_used", s.n_used}, {"temperature", post.temperature}};
  const Index m = post.samples.cols();
  if (post.samples.rows() >= m + 1) {
    PcaMap pca = posterior_pca(post.samples);
    io::write_vector_csv(out / "pca_eigenvalues.csv", pca.eigenvalues, "eigenvalue");
    std::vector<std::string> comp_header;
    for (Index j = 0; j < m; ++j)
      comp_header.push_back("pc_" + std::to_string(j + 1));
    io::write_matrix_csv(out / "pca_components.csv", pca.components, comp_header);
    std::vector<std::string> proj_header{"pc_1"};
    if (pca.projected.cols() > 1)
      proj_header.push_back("pc_2");
    io::write_matrix_csv(out / "pca_projections.csv", pca.projected, proj_header);
    auto points = pca_grid(pca, *dec.decoder, grid, grid_span);
    Matrix grid_table(static_cast<Index>(points.size()), 2 + m);
    for (std::size_t g = 0; g < points.size(); ++g) {
      const auto& p = points[g];
      grid_table(static_cast<Index>(g), 0) = p.a;
      grid_table(static_cast<Index>(g), 1) = p.b;
      grid_table.row(static_cast<Index>(g)).tail(m) = p.latent.transpose();
      io::write_pgm(out / "pca_grid" / ("point_" + std::to_string(g) + ".pgm"), p.image, shape.first,
                    shape.second);
    }
    std::vector<std::string> gh{"sd_pc_1", "sd_pc_2"};
    for (Index j = 0; j < m; ++j)
      gh.push_back("z_" + std::to_string(j + 1));
    io::write_matrix_csv(out / "pca_grid.csv", grid_table, gh);
    summary["pca_total_variance"] = pca.eigenvalues.sum();
  }
  if (!truth_path.empty()) {
    Vector truth = io::read_image(truth_path);
    if (truth.size() != s.mmse_image.size())
      throw UsageError("truth image length does not match the decoder output");
    summary["psnr_mmse"] = to_json_number(psnr(s.mmse_image, truth));
    if (!observation_path.empty()) {
      LoadedObservation lo = load_observation(observation_path);
      if (std::holds_alternative<IdentityOp>(lo.obs.op.variant()))
        summary["psnr_observation"] = to_json_number(psnr(lo.obs.y, truth));
    }
  }
  write_json(out / "summary.json", summary);
  json man = base_manifest("estimate");
  man["parameters"] = {{"decoder", decoder_spec},
                       {"traces", traces},
                       {"truth", truth_path},
                       {"observation", observation_path},
                       {"grid", grid},
                       {"grid_span", grid_span}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

json evidence_json(const EvidenceEstimate& est, std::size_t n_per_temp)
{
  return {{"log_evidence", to_json_number(est.log_evidence)},
          {"se", to_json_number(est.standard_error)},
          {"ladder", est.temperatures},
          {"n_per_temp", n_per_temp},
          {"warnings", est.warnings},
          {"monotonicity_violations", integrand_monotonicity_violations(est)}};
}

void write_evidence_csv(const fs::path& path, const EvidenceEstimate& est)
{
  Matrix t(static_cast<Index>(est.temperatures.size()), 3);
  for (std::size_t i = 0; i < est.temperatures.size(); ++i) {
    t(static_cast<Index>(i), 0) = est.temperatures[i];
    t(static_cast<Index>(i), 1) = est.per_temperature_means[i];
    t(static_cast<Index>(i), 2) = est.mc_standard_errors.empty() ? 0.0 : est.mc_standard_errors[i];
  }
  io::write_matrix_csv(path, t, {"T", "mean_loglik", "se"});
}

std::vector<double> read_reference_csv(const fs::path& path)
{
  io::CsvTable t = io::read_csv(path);
  std::vector<double> v;
  for (const auto& r : t.rows)
    v.push_back(r.at(0));
  return v;
}

int cmd_evidence(const Common& common, const std::string& decoder_spec,
                 const std::string& observation_path, const std::string& traces,
                 const std::string& reference_path, double significance, const std::string& dataset,
                 const OperatorOptions& oo, double sigma, const SamplerOptions& so)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  json man = base_manifest("evidence");

  if (!dataset.empty()) {
    auto files = io::list_images(dataset);
    require_images(files, dataset);
    std::vector<double> values;
    Matrix per_image(static_cast<Index>(files.size()), 3);
    for (std::size_t i = 0; i < files.size(); ++i) {
      Vector x = io::read_image(files[i]);
      if (x.size() != dec.decoder->ambient_dim())
        throw UsageError(files[i].string() + ": image length does not match the decoder");
      auto res = simulate_and_sample(x, dec, oo, sigma, so, derive_seed(so.seed, i));
      EvidenceEstimate est = thermodynamic_integration(per_temperature_loglik_means(res.store, res.pf));
      values.push_back(est.log_evidence);
      per_image(static_cast<Index>(i), 0) = static_cast<double>(i);
      per_image(static_cast<Index>(i), 1) = est.log_evidence;
      per_image(static_cast<Index>(i), 2) = est.standard_error;
    }
    ReferenceDistribution ref(values);
    OutputDir out(common.out, common.force);
    {
      auto f = io::open_out(out / "reference.csv");
      f << "# dataset=" << fs::path(dataset).filename().string() << " operator=" << oo.op
        << " sigma=" << io::format_double(sigma) << " seed=" << so.seed << '\n';
      f << "log_evidence\n";
      for (double v : ref.values())
        f << io::format_double(v) << '\n';
    }
    io::write_matrix_csv(out / "per_image_evidence.csv", per_image, {"index", "log_evidence", "se"});
    man["parameters"] = {{"decoder", decoder_spec},
                         {"dataset", dataset},
                         {"op", oo.op},
                         {"sigma", sigma},
                         {"sampler", so.to_json(so.make_ladder())}};
    man["images"] = files.size();
    write_json(out / "run_manifest.json", man);
    write_timings(out, timer, so.threads);
    out.commit();
    return kExitOk;
  }

  if (observation_path.empty() || traces.empty())
    throw UsageError("evidence needs --observation and --traces (or --dataset)");
  LoadedObservation lo = load_observation(observation_path);
  PotentialFn pf(dec.decoder, lo.obs);
  TraceStore store = read_trace_dir(traces);
  EvidenceEstimate est = thermodynamic_integration(per_temperature_loglik_means(store, pf));

  OutputDir out(common.out, common.force);
  write_evidence_csv(out / "evidence.csv", est);
  json summary = evidence_json(est, store.n_samples());
  if (!reference_path.empty()) {
    ReferenceDistribution ref(read_reference_csv(reference_path));
    auto decision = misspecification_test(ref, est.log_evidence, significance);
    summary["misspecification"] = {{"reference", reference_path},
                                   {"reference_size", ref.size()},
                                   {"significance", significance},
                                   {"critical_value", ref.centile(significance)},
                                   {"decision", to_string(decision)}};
  }
  write_json(out / "evidence.json", summary);
  man["parameters"] = {{"decoder", decoder_spec},
                       {"observation", observation_path},
                       {"traces", traces},
                       {"reference", reference_path},
                       {"significance", significance}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

int cmd_coverage(const Common& common, const std::string& decoder_spec, const std::string& dataset,
                 std::size_t synthetic, const std::vector<double>& levels, bool stochastic,
                 const OperatorOptions& oo, double sigma, const SamplerOptions& so)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  if (!dec.encoder)
    throw UsageError("coverage needs an encoder (weights with encoder_mean, or identity:<d>)");

  std::vector<Vector> truths;
  if (!dataset.empty()) {
    auto files = io::list_images(dataset);
    require_images(files, dataset);
    for (const auto& f : files)
      truths.push_back(io::read_image(f));
  } else if (synthetic > 0) {
    Rng rng(derive_seed(so.seed, 0xC0FFEEULL));
    for (std::size_t i = 0; i < synthetic; ++i)
      truths.push_back(dec.decoder->decode(rng.gaussian_vector(dec.decoder->latent_dim())));
  } else {
    throw UsageError("coverage needs --dataset or --synthetic N");
  }
  for (const auto& t : truths)
    if (t.size() != dec.decoder->ambient_dim())
      throw UsageError("test image length does not match the decoder");

  CoverageSetup setup;
  setup.decoder = dec.decoder;
  setup.op = build_operator(oo, dec.decoder->ambient_dim(), oo.mask_seed.value_or(so.seed)).op;
  setup.sigma = sigma;
  setup.ladder = so.make_ladder();
  setup.sampler = so.make_config(so.seed);
  setup.levels = levels;
  setup.stochastic_encoding = stochastic;
  setup.threads = so.threads;
  CoverageResult res = coverage_experiment(truths, *dec.encoder, setup);

  OutputDir out(common.out, common.force);
  Matrix t(static_cast<Index>(levels.size()), 3);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    t(static_cast<Index>(l), 0) = res.nominal_levels[l];
    t(static_cast<Index>(l), 1) = res.empirical_coverage[l];
    t(static_cast<Index>(l), 2) = static_cast<double>(res.n_replicates);
  }
  io::write_matrix_csv(out / "coverage.csv", t, {"level", "empirical", "n"});
  json man = base_manifest("coverage");
  man["parameters"] = {{"decoder", decoder_spec},
                       {"dataset", dataset},
                       {"synthetic", synthetic},
                       {"levels", levels},
                       {"stochastic_encoding", stochastic},
                       {"op", oo.op},
                       {"sigma", sigma},
                       {"sampler", so.to_json(setup.ladder)}};
  man["samples_per_replicate"] = res.samples_per_replicate;
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, so.threads);
  out.commit();
  return kExitOk;
}

int cmd_dim_check(const Common& common, const std::string& encodings, const std::string& decoder_spec,
                  const std::string& dataset, double threshold)
{
  Timer timer;
  Matrix means;
  if (!encodings.empty()) {
    means = io::read_encodings_csv(encodings).means;
  } else if (!decoder_spec.empty() && !dataset.empty()) {
    DecoderSource dec = load_decoder(decoder_spec);
    if (!dec.encoder)
      throw UsageError("dim-check needs encodings or a model with an encoder_mean network");
    auto files = io::list_images(dataset);
    require_images(files, dataset);
    means.resize(static_cast<Index>(files.size()), dec.decoder->latent_dim());
    for (std::size_t i = 0; i < files.size(); ++i)
      means.row(static_cast<Index>(i)) = dec.encoder->encode_mean(io::read_image(files[i])).transpose();
  } else {
    throw UsageError("dim-check needs --encodings, or --decoder with --dataset");
  }
  LatentDimDiagnostic diag = latent_dim_diagnostic(means);

  OutputDir out(common.out, common.force);
  Matrix t(diag.per_dim_variances.size(), 2);
  for (Index i = 0; i < t.rows(); ++i) {
    t(i, 0) = static_cast<double>(i + 1);
    t(i, 1) = diag.per_dim_variances[i];
  }
  io::write_matrix_csv(out / "dim_check.csv", t, {"dim", "variance"});
  auto redundant = diag.redundant_dims(threshold);
  for (auto& r : redundant)
    r += 1;
  write_json(out / "dim_check.json",
             {{"latent_dim", means.cols()},
              {"n", means.rows()},
              {"trace", diag.trace_of_covariance},
              {"redundancy_threshold", threshold},
              {"redundant_dims", redundant},
              {"redundant", diag.trace_of_covariance < static_cast<double>(means.cols()) &&
                              !redundant.empty()}});
  json man = base_manifest("dim-check");
  man["parameters"] = {{"encodings", encodings},
                       {"decoder", decoder_spec},
                       {"dataset", dataset},
                       {"threshold", threshold}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

int cmd_lipschitz(const Common& common, const std::string& decoder_spec, double tol)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  LipschitzBound lb = lipschitz_upper_bound(*dec.decoder, tol);
  OutputDir out(common.out, common.force);
  write_json(out / "lipschitz.json",
             {{"decoder", decoder_spec}, {"lipschitz_upper_bound", lb.bound}, {"layer_norms", lb.layer_norms}, {"tol", tol}});
  json man = base_manifest("lipschitz");
  man["parameters"] = {{"decoder", decoder_spec}, {"tol", tol}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

int cmd_check_model(const Common& common, const std::string& decoder_spec,
                    const std::string& observation_path, std::vector<double> radii)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  LoadedObservation lo = load_observation(observation_path);
  PotentialFn pf(dec.decoder, lo.obs);
  WellPosednessReport r = check_wellposedness(pf);

  json conds = json::array();
  for (const auto& c : r.conditions)
    conds.push_back({{"name", c.name}, {"satisfied", c.satisfied}, {"detail", c.detail}});
  json report = {{"conditions", conds},
                 {"likelihood_bound_c", r.likelihood_bound},
                 {"all_satisfied", r.all_satisfied()},
                 {"weakly_hellinger_tv_wellposed", r.weakly_hellinger_tv_wellposed},
                 {"wasserstein_wellposed", r.wasserstein_wellposed}};
  if (!dec.decoder->is_parabola()) {
    LipschitzBound lb = lipschitz_upper_bound(*dec.decoder);
    PotentialBounds b = potential_bounds(pf, lb.bound);
    json local = json::array();
    for (double rad : radii)
      local.push_back({{"r", rad},
                       {"K", b.local_lipschitz(rad, lo.obs.y.norm(), lo.obs.sigma)}});
    report["ergodicity"] = {{"lipschitz_upper_bound", b.lipschitz},
                            {"operator_norm", b.operator_norm},
                            {"decode_zero_norm", b.decode_zero_norm},
                            {"growth_constant_K", b.growth_constant},
                            {"growth_exponent_p", 2},
                            {"local_lipschitz", local}};
  } else {
    report["ergodicity"] = {{"note", "parabola decoder is not globally Lipschitz; bounds not certified"}};
  }
  OutputDir out(common.out, common.force);
  write_json(out / "check_model.json", report);
  json man = base_manifest("check-model");
  man["parameters"] = {{"decoder", decoder_spec}, {"observation", observation_path}, {"radii", radii}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, 1);
  out.commit();
  return kExitOk;
}

int cmd_rosenbrock_demo(const Common& common, std::uint64_t seed, unsigned threads)
{
  Timer timer;
  OutputDir out(common.out, common.force);

  // Rosenbrock density on a grid, and pushforward draws through the parabola decoder.
  {
    const int n = 81;
    Matrix grid(n * n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double x1 = -2.0 + 4.0 * i / (n - 1);
        double x2 = -1.0 + 5.0 * j / (n - 1);
        grid(i * n + j, 0) = x1;
        grid(i * n + j, 1) = x2;
        grid(i * n + j, 2) = demo::rosenbrock_log_density(x1, x2);
      }
    io::write_matrix_csv(out / "rosenbrock_density.csv", grid, {"x1", "x2", "log_density"});
    Decoder parabola = Decoder::parabola();
    Rng rng(derive_seed(seed, 0));
    Matrix push(100, 3);
    for (Index i = 0; i < 100; ++i) {
      Vector z = rng.gaussian_vector(1);
      Vector x = parabola.decode(z);
      push.row(i) << z[0], x[0], x[1];
    }
    io::write_matrix_csv(out / "pushforward_samples.csv", push, {"z", "x1", "x2"});
  }

  // Tempering on the multimodal geometry from the start point (2, 0).
  demo::MultimodalPotential pot;
  PcnConfig cfg;
  cfg.burn_in = 500;
  cfg.n_samples = 500;
  cfg.keep_burn_in = true;
  cfg.master_seed = seed;
  Vector z0(2);
  z0 << 2.0, 0.0;

  auto fraction_in_basin = [&](const ChainTrace& tr, Index from) {
    Index in = 0;
    for (Index r = from; r < tr.samples.rows(); ++r)
      in += pot.in_dominant_basin(tr.samples.row(r).transpose()) ? 1 : 0;
    return static_cast<double>(in) / static_cast<double>(tr.samples.rows() - from);
  };

  TemperatureLadder single({1.0});
  TraceStore one = run_sampler(pot, single, cfg, replicate_initial(1, z0));
  TemperatureLadder ladder = TemperatureLadder::linear(3);
  TraceStore pt = run_sampler(pot, ladder, cfg, replicate_initial(3, z0), {threads});

  io::write_trace_csv(out / "single_chain.csv", one.chains[0], one.first_iteration);
  json tempered = json::array();
  for (std::size_t i = 0; i < pt.chains.size(); ++i) {
    io::write_trace_csv(out / ("tempered_" + chain_file(i).substr(6)), pt.chains[i], pt.first_iteration);
    tempered.push_back({{"temperature", pt.chains[i].temperature},
                        {"file", "tempered_" + chain_file(i).substr(6)}});
  }
  const auto half = static_cast<Index>(cfg.burn_in);
  json wells = json::array();
  for (const auto& w : pot.wells())
    wells.push_back({{"centre", {w.cx, w.cy}}, {"width", w.width}, {"depth", w.depth}});
  json summary = {
    {"start", {2.0, 0.0}},
    {"iterations", cfg.burn_in + cfg.n_samples},
    {"wells", wells},
    {"dominant_basin_radius", 0.5},
    {"single_chain_fraction_in_dominant_basin", fraction_in_basin(one.chains[0], 0)},
    {"tempered_T1_final_half_fraction_in_dominant_basin", fraction_in_basin(pt.chains.back(), half)},
    {"ladder", ladder.temps()},
    {"tempered", tempered},
    {"tempered_traces", trace_summary(pt)}};
  write_json(out / "summary.json", summary);
  json man = base_manifest("rosenbrock-demo");
  man["parameters"] = {{"seed", seed}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, threads);
  out.commit();
  return kExitOk;
}

int cmd_batch_psnr(const Common& common, const std::string& decoder_spec, const std::string& dataset,
                   const OperatorOptions& oo, double sigma, const SamplerOptions& so)
{
  Timer timer;
  DecoderSource dec = load_decoder(decoder_spec);
  auto files = io::list_images(dataset);
  require_images(files, dataset);

  std::vector<std::vector<double>> rows;
  std::vector<std::string> skipped;
  std::vector<double> values;
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      Vector x = io::read_image(files[i]);
      if (x.size() != dec.decoder->ambient_dim())
        throw FormatError("image length " + std::to_string(x.size()) + " does not match the decoder");
      auto res = simulate_and_sample(x, dec, oo, sigma, so, derive_seed(so.seed, i));
      PosteriorSummary s = mmse_estimate(res.store.posterior(), *dec.decoder);
      double p = psnr(s.mmse_image, x);
      double po = std::holds_alternative<IdentityOp>(res.obs.op.variant())
                    ? psnr(res.obs.y, x)
                    : std::numeric_limits<double>::quiet_NaN();
      rows.push_back({static_cast<double>(i), p, po});
      values.push_back(p);
    } catch (const FormatError& e) {
      std::cerr << "batch-psnr: skipping " << files[i].string() << ": " << e.what() << '\n';
      skipped.push_back(files[i].filename().string());
    }
  }

  OutputDir out(common.out, common.force);
  {
    auto f = io::open_out(out / "psnr.csv");
    f << "index,file,psnr_mmse,psnr_observation\n";
    for (const auto& r : rows) {
      auto idx = static_cast<std::size_t>(r[0]);
      f << idx << ',' << files[idx].filename().string() << ',' << io::format_double(r[1]) << ','
        << io::format_double(r[2]) << '\n';
    }
  }
  double mean = 0.0, sd = 0.0;
  if (!values.empty()) {
    for (double v : values)
      mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values)
      sd += (v - mean) * (v - mean);
    sd = values.size() > 1 ? std::sqrt(sd / static_cast<double>(values.size() - 1)) : 0.0;
  }
  std::ostringstream table;
  table.precision(4);
  table << std::fixed << mean << " +- " << sd;
  write_json(out / "summary.json", {{"n", values.size()},
                                    {"mean_psnr", to_json_number(mean)},
                                    {"sd_psnr", to_json_number(sd)},
                                    {"table", table.str()},
                                    {"skipped", skipped}});
  json man = base_manifest("batch-psnr");
  man["parameters"] = {{"decoder", decoder_spec},
                       {"dataset", dataset},
                       {"op", oo.op},
                       {"sigma", sigma},
                       {"sampler", so.to_json(so.make_ladder())}};
  write_json(out / "run_manifest.json", man);
  write_timings(out, timer, so.threads);
  out.commit();

  if (static_cast<double>(skipped.size()) > 0.01 * static_cast<double>(files.size())) {
    std::cerr << "batch-psnr: " << skipped.size() << " of " << files.size() << " images skipped\n";
    return kExitRuntime;
  }
  return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args)
{
  CLI::App app{"Bayesian inference with generative latent priors: tempered pCN sampling, "
               "estimates, evidence and coverage"};
  app.name("genprior");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  std::function<int()> action;

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate an observation y = A x + noise");
  Common sim_common;
  std::string sim_image;
  OperatorOptions sim_op;
  double sim_sigma = 0.1;
  std::uint64_t sim_seed = 0;
  sim_common.add_to(sim);
  sim->add_option("--image", sim_image, "ground-truth image (.csv or .pgm)")->required()->check(CLI::ExistingFile);
  sim_op.add_to(sim);
  sim->add_option("--sigma", sim_sigma, "noise standard deviation")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "noise seed");
  sim->callback([&] { action = [&] { return cmd_simulate(sim_common, sim_image, sim_op, sim_sigma, sim_seed); }; });

  // sample
  auto* smp = app.add_subcommand("sample", "run tempered pCN on a latent posterior");
  Common smp_common;
  std::string smp_decoder, smp_obs;
  SamplerOptions smp_so;
  smp_common.add_to(smp);
  smp->add_option("--decoder", smp_decoder, "parabola | identity:<d> | weights prefix")->required();
  smp->add_option("--observation", smp_obs, "observation sidecar JSON")->required()->check(CLI::ExistingFile);
  smp_so.add_to(smp);
  smp->callback([&] { action = [&] { return cmd_sample(smp_common, smp_decoder, smp_obs, smp_so); }; });

  // estimate
  auto* est = app.add_subcommand("estimate", "MMSE estimate, pixel variances and posterior PCA");
  Common est_common;
  std::string est_decoder, est_traces, est_truth, est_obs;
  int est_grid = 5;
  double est_span = 2.0;
  est_common.add_to(est);
  est->add_option("--decoder", est_decoder, "decoder used for sampling")->required();
  est->add_option("--traces", est_traces, "output directory of `sample`")->required()->check(CLI::ExistingDirectory);
  est->add_option("--truth", est_truth, "ground-truth image for PSNR")->check(CLI::ExistingFile);
  est->add_option("--observation", est_obs, "observation sidecar for the observation PSNR")->check(CLI::ExistingFile);
  est->add_option("--grid", est_grid, "PCA grid points per axis")->check(CLI::PositiveNumber);
  est->add_option("--grid-span", est_span, "PCA grid half-width in standard deviations")->check(CLI::PositiveNumber);
  est->callback([&] {
    action = [&] { return cmd_estimate(est_common, est_decoder, est_traces, est_truth, est_obs, est_grid, est_span); };
  });

  // evidence
  auto* evd = app.add_subcommand("evidence", "log evidence by thermodynamic integration");
  Common evd_common;
  std::string evd_decoder, evd_obs, evd_traces, evd_ref, evd_dataset;
  double evd_sig = 0.05, evd_sigma = 0.1;
  OperatorOptions evd_op;
  SamplerOptions evd_so;
  evd_common.add_to(evd);
  evd->add_option("--decoder", evd_decoder, "decoder used for sampling")->required();
  evd->add_option("--observation", evd_obs, "observation sidecar JSON")->check(CLI::ExistingFile);
  evd->add_option("--traces", evd_traces, "output directory of `sample`")->check(CLI::ExistingDirectory);
  evd->add_option("--reference", evd_ref, "reference log-evidence CSV for the misspecification test")->check(CLI::ExistingFile);
  evd->add_option("--significance", evd_sig, "test level")->check(CLI::Range(0.0, 1.0));
  evd->add_option("--dataset", evd_dataset, "build a reference distribution from a directory of images")->check(CLI::ExistingDirectory);
  evd->add_option("--sigma", evd_sigma, "noise level (dataset mode)")->check(CLI::PositiveNumber);
  evd_op.add_to(evd);
  evd_so.add_to(evd);
  evd->callback([&] {
    action = [&] {
      return cmd_evidence(evd_common, evd_decoder, evd_obs, evd_traces, evd_ref, evd_sig, evd_dataset, evd_op,
                          evd_sigma, evd_so);
    };
  });

  // coverage
  auto* cov = app.add_subcommand("coverage", "frequentist coverage of HPD credible sets");
  Common cov_common;
  std::string cov_decoder, cov_dataset;
  std::size_t cov_synth = 0;
  std::vector<double> cov_levels{0.5, 0.8, 0.9, 0.95, 0.99};
  bool cov_stochastic = false;
  double cov_sigma = 0.1;
  OperatorOptions cov_op;
  SamplerOptions cov_so;
  cov_so.samples = 20000;
  cov_common.add_to(cov);
  cov->add_option("--decoder", cov_decoder, "identity:<d> or weights prefix with an encoder")->required();
  cov->add_option("--dataset", cov_dataset, "directory of test images")->check(CLI::ExistingDirectory);
  cov->add_option("--synthetic", cov_synth, "draw N truths from the prior pushforward");
  cov->add_option("--levels", cov_levels, "nominal coverage levels")->delimiter(',');
  cov->add_flag("--stochastic-encoding", cov_stochastic, "encode truths by sampling q(z|x)");
  cov->add_option("--sigma", cov_sigma, "noise level")->check(CLI::PositiveNumber);
  cov_op.add_to(cov);
  cov_so.add_to(cov);
  cov->callback([&] {
    action = [&] {
      return cmd_coverage(cov_common, cov_decoder, cov_dataset, cov_synth, cov_levels, cov_stochastic, cov_op,
                          cov_sigma, cov_so);
    };
  });

  // dim-check
  auto* dim = app.add_subcommand("dim-check", "latent-dimension diagnostic from encoder means");
  Common dim_common;
  std::string dim_enc, dim_decoder, dim_dataset;
  double dim_threshold = 0.1;
  dim_common.add_to(dim);
  dim->add_option("--encodings", dim_enc, "encodings CSV (mu_1..mu_m, logvar_1..logvar_m)")->check(CLI::ExistingFile);
  dim->add_option("--decoder", dim_decoder, "weights prefix with an encoder");
  dim->add_option("--dataset", dim_dataset, "directory of images to encode")->check(CLI::ExistingDirectory);
  dim->add_option("--threshold", dim_threshold, "per-dimension variance below which a dimension is redundant");
  dim->callback([&] { action = [&] { return cmd_dim_check(dim_common, dim_enc, dim_decoder, dim_dataset, dim_threshold); }; });

  // rosenbrock-demo
  auto* demo_cmd = app.add_subcommand("rosenbrock-demo", "parabola pushforward and tempering demo");
  Common demo_common;
  std::uint64_t demo_seed = 0;
  unsigned demo_threads = 1;
  demo_common.add_to(demo_cmd);
  demo_cmd->add_option("--seed", demo_seed, "master seed");
  demo_cmd->add_option("--threads", demo_threads, "worker threads")->check(CLI::PositiveNumber);
  demo_cmd->callback([&] { action = [&] { return cmd_rosenbrock_demo(demo_common, demo_seed, demo_threads); }; });

  // lipschitz
  auto* lip = app.add_subcommand("lipschitz", "upper bound on the decoder Lipschitz constant");
  Common lip_common;
  std::string lip_decoder;
  double lip_tol = 1e-8;
  lip_common.add_to(lip);
  lip->add_option("--decoder", lip_decoder, "identity:<d> or weights prefix")->required();
  lip->add_option("--tol", lip_tol, "power-iteration relative tolerance")->check(CLI::PositiveNumber);
  lip->callback([&] { action = [&] { return cmd_lipschitz(lip_common, lip_decoder, lip_tol); }; });

  // check-model
  auto* chk = app.add_subcommand("check-model", "well-posedness and ergodicity conditions");
  Common chk_common;
  std::string chk_decoder, chk_obs;
  std::vector<double> chk_radii{1.0, 3.0, 10.0};
  chk_common.add_to(chk);
  chk->add_option("--decoder", chk_decoder, "decoder")->required();
  chk->add_option("--observation", chk_obs, "observation sidecar JSON")->required()->check(CLI::ExistingFile);
  chk->add_option("--radii", chk_radii, "radii r for the local Lipschitz constants K(r)")->delimiter(',');
  chk->callback([&] { action = [&] { return cmd_check_model(chk_common, chk_decoder, chk_obs, chk_radii); }; });

  // batch-psnr
  auto* bp = app.add_subcommand("batch-psnr", "simulate, sample and score every image of a dataset");
  Common bp_common;
  std::string bp_decoder, bp_dataset;
  double bp_sigma = 0.1;
  OperatorOptions bp_op;
  SamplerOptions bp_so;
  bp_common.add_to(bp);
  bp->add_option("--decoder", bp_decoder, "decoder")->required();
  bp->add_option("--dataset", bp_dataset, "directory of test images")->required()->check(CLI::ExistingDirectory);
  bp->add_option("--sigma", bp_sigma, "noise level")->check(CLI::PositiveNumber);
  bp_op.add_to(bp);
  bp_so.add_to(bp);
  bp->callback([&] { action = [&] { return cmd_batch_psnr(bp_common, bp_decoder, bp_dataset, bp_op, bp_sigma, bp_so); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, const char* const* argv)
{
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i)
    args.emplace_back(argv[i]);
  return run(args);
}

} // namespace genprior::cli
