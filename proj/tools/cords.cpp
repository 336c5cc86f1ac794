#include <CLI11.hpp>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cords/cords.hpp"

namespace {

using nlohmann::json;
namespace io = cords::io;

// Flag-level misuse (missing --seed, --samples 0). Distinct from cords::Error
// so main can map it to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

cords::ObjectSet load_object_set(const std::string& path) {
  const std::string text = io::read_file(path);
  if (ends_with(path, ".csv")) return io::read_csv_object_set(text, path);
  return io::read_object_set(text, path + ":");
}

cords::FieldSamples load_samples(const std::string& path) {
  const std::string text = io::read_file(path);
  if (ends_with(path, ".csv")) return io::read_csv_samples(text, path);
  return io::read_samples(text, path + ":");
}

// Replay takes every parameter from the manifest, so fresh-path flag
// requirements must not be enforced by the parser.
bool will_replay(const std::string& manifest_path) {
  return !manifest_path.empty() && std::filesystem::exists(manifest_path);
}

void require_flag(bool ok, const char* message) {
  if (!ok) throw UsageError(message);
}

// ----------------------------------------------------------------------------
// Manifest plumbing. Params are rebuilt from json on every run so the fresh
// and replay paths share one parser.
// ----------------------------------------------------------------------------

struct RunContext {
  json params;
  std::uint64_t seed = 0;
  cords::RunManifest manifest;
  std::string hash;
  std::string manifest_path;
  bool replayed = false;
};

RunContext prepare_run(const std::string& command, const std::string& manifest_path,
                       json fresh_params, std::uint64_t fresh_seed, bool seed_given,
                       bool needs_seed, const std::vector<const char*>& input_keys) {
  RunContext ctx;
  ctx.manifest_path = manifest_path;
  if (!manifest_path.empty() && std::filesystem::exists(manifest_path)) {
    const cords::RunManifest stored = io::read_manifest(io::read_file(manifest_path), manifest_path + ":");
    if (stored.command != command)
      throw cords::InvalidArgument("manifest replays command '" + stored.command +
                                   "', not '" + command + "'");
    if (stored.tool_version != cords::kToolVersion)
      throw cords::InvalidArgument("manifest was written by tool version " + stored.tool_version +
                                   ", this is " + std::string(cords::kToolVersion));
    ctx.params = stored.params;
    ctx.seed = stored.seed;
    ctx.replayed = true;
    std::cerr << "replaying manifest " << manifest_path
              << "; command-line parameters are ignored\n";
    ctx.manifest = stored;
  } else {
    if (needs_seed && !seed_given) throw UsageError("--seed is required (no wall-clock seeding)");
    ctx.params = std::move(fresh_params);
    ctx.seed = fresh_seed;
  }
  cords::RunManifest manifest;
  manifest.tool_version = cords::kToolVersion;
  manifest.command = command;
  manifest.params = ctx.params;
  manifest.seed = ctx.seed;
  for (const char* key : input_keys) {
    const std::string path = io::detail::get_string(ctx.params, key, "params");
    manifest.input_hashes[path] = io::hash_file(path);
  }
  if (ctx.replayed && manifest.input_hashes != ctx.manifest.input_hashes)
    throw cords::InvalidArgument("input file contents changed since the manifest was written");
  ctx.manifest = manifest;
  ctx.hash = io::manifest_hash(manifest);
  return ctx;
}

// Written after the computation so a failed run leaves no manifest behind.
void finish_run(const RunContext& ctx) {
  if (!ctx.replayed && !ctx.manifest_path.empty()) {
    io::write_file(ctx.manifest_path, io::write_manifest(ctx.manifest));
    std::cout << "wrote manifest: " << ctx.manifest_path << "\n";
  }
}

void warn_low_separation(const cords::ObjectSet& set, double sigma) {
  const double sep = cords::min_separation(set);
  if (set.size() >= 2 && sep < 1e-9 * sigma)
    std::cerr << "warning: minimum object separation " << io::format_double(sep)
              << " is below 1e-9*sigma; near-coincident objects may not decode\n";
}

std::string yes_no(bool v) { return v ? "yes" : "no"; }

// ----------------------------------------------------------------------------
// encode
// ----------------------------------------------------------------------------

struct EncodeFlags {
  std::string in;
  std::string family = "gaussian";
  double sigma = 0.0;
  int samples = 4096;
  std::string scheme = "importance";
  double temperature = 1.0;
  double importance_fraction = 1.0;
  double proposal_sigma = 0.0;
  bool proposal_sigma_given = false;
  bool legacy_unit_weights = false;
};

json encode_params(const EncodeFlags& f) {
  json p{{"in", f.in},
         {"family", f.family},
         {"sigma", f.sigma},
         {"samples", f.samples},
         {"scheme", f.scheme},
         {"temperature", f.temperature},
         {"importance_fraction", f.importance_fraction},
         {"legacy_unit_weights", f.legacy_unit_weights}};
  p["proposal_sigma"] = f.proposal_sigma_given ? json(f.proposal_sigma) : json(nullptr);
  return p;
}

struct EncodeRun {
  cords::ObjectSet set;
  cords::KernelSpec spec;
  cords::FieldSamples samples;
};

EncodeRun run_encode_params(const json& p, std::uint64_t seed) {
  io::detail::check_keys(p,
                         {"in", "family", "sigma", "samples", "scheme", "temperature",
                          "importance_fraction", "legacy_unit_weights", "proposal_sigma"},
                         "params");
  EncodeRun run;
  run.set = load_object_set(io::detail::get_string(p, "in", "params"));
  run.spec.family = cords::family_from_name(io::detail::get_string(p, "family", "params"));
  run.spec.sigma = io::detail::get_finite(p, "sigma", "params");
  run.spec.dim = static_cast<int>(run.set.dim());
  cords::SamplerConfig cfg;
  cfg.scheme = io::scheme_from_name(io::detail::get_string(p, "scheme", "params"), "params/scheme");
  cfg.count = static_cast<int>(io::detail::get_int(p, "samples", "params"));
  cfg.temperature = io::detail::get_finite(p, "temperature", "params");
  cfg.importance_fraction = io::detail::get_finite(p, "importance_fraction", "params");
  if (!p.at("proposal_sigma").is_null())
    cfg.proposal_sigma = io::detail::get_finite(p, "proposal_sigma", "params");
  cfg.legacy_unit_weights = io::detail::get_bool(p, "legacy_unit_weights", "params");
  cfg.seed = seed;
  warn_low_separation(run.set, run.spec.sigma);
  run.samples = cords::encode_field(run.set, run.spec, cfg);
  return run;
}

int cmd_encode(const EncodeFlags& f, std::uint64_t seed, bool seed_given,
               const std::string& out, const std::string& csv, const std::string& manifest_path) {
  if (!will_replay(manifest_path)) {
    require_flag(!f.in.empty(), "--in is required");
    require_flag(f.sigma > 0.0, "--sigma is required and must be > 0");
    require_flag(f.samples >= 1, "--samples must be >= 1");
  }
  RunContext ctx = prepare_run("encode", manifest_path, encode_params(f), seed, seed_given,
                               true, {"in"});
  const EncodeRun run = run_encode_params(ctx.params, ctx.seed);
  std::cout << "objects: " << run.set.size() << " (dim " << run.set.dim() << ", features "
            << run.set.feature_dim() << ")\n";
  std::cout << "samples: " << run.samples.size() << " " << io::scheme_name(run.samples.scheme)
            << "\n";
  if (run.samples.size() > 0)
    std::cout << "density mean: " << io::format_double(run.samples.density.mean())
              << "  max: " << io::format_double(run.samples.density.maxCoeff()) << "\n";
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::write_samples(run.samples, ctx.hash));
    std::cout << "wrote samples: " << out << "\n";
  }
  if (!csv.empty()) {
    io::write_file(csv, io::write_csv_samples(run.samples, ctx.hash));
    std::cout << "wrote csv: " << csv << "\n";
  }
  finish_run(ctx);
  return 0;
}

// ----------------------------------------------------------------------------
// decode
// ----------------------------------------------------------------------------

struct DecodeFlags {
  std::string in;
  std::string family = "gaussian";
  double sigma = 0.0;
  int bic_delta = 0;
  bool bic_delta_given = false;
  double bic_margin = 10.0;
  int gmm_max_points = 2048;
  bool log_space = false;
  bool free_amplitude = false;
  int categorical_offset = 0;
  int categorical_size = 0;
};

json decode_params(const DecodeFlags& f) {
  json p{{"in", f.in},
         {"family", f.family},
         {"sigma", f.sigma},
         {"bic_margin", f.bic_margin},
         {"gmm_max_points", f.gmm_max_points},
         {"log_space", f.log_space},
         {"free_amplitude", f.free_amplitude},
         {"categorical_offset", f.categorical_offset},
         {"categorical_size", f.categorical_size}};
  p["bic_delta"] = f.bic_delta_given ? json(f.bic_delta) : json(nullptr);
  return p;
}

cords::DecodeOptions decode_options_from_params(const json& p, std::uint64_t seed) {
  cords::DecodeOptions opts;
  if (!p.at("bic_delta").is_null())
    opts.bic_delta = static_cast<int>(io::detail::get_int(p, "bic_delta", "params"));
  opts.bic_margin = io::detail::get_finite(p, "bic_margin", "params");
  opts.gmm_max_points = static_cast<int>(io::detail::get_int(p, "gmm_max_points", "params"));
  opts.objective.log_space = io::detail::get_bool(p, "log_space", "params");
  opts.objective.free_amplitude = io::detail::get_bool(p, "free_amplitude", "params");
  opts.categorical_offset = static_cast<int>(io::detail::get_int(p, "categorical_offset", "params"));
  opts.categorical_size = static_cast<int>(io::detail::get_int(p, "categorical_size", "params"));
  opts.seed = seed;
  return opts;
}

void print_decode_summary(const cords::DecodeResult& result) {
  std::cout << "count: " << result.count << " (raw mass " << io::format_double(result.raw_mass)
            << ")\n";
  std::cout << "residual: " << io::format_double(result.residual) << "\n";
  if (std::isinf(result.gram_condition))
    std::cout << "gram condition: inf\n";
  else
    std::cout << "gram condition: " << io::format_double(result.gram_condition) << "\n";
  if (result.fallback_used) std::cout << "fallback solver used\n";
  if (result.low_separation)
    std::cerr << "warning: decoded centers closer than 2*sigma; features may mix\n";
}

int cmd_decode(const DecodeFlags& f, std::uint64_t seed, bool seed_given, const std::string& out,
               const std::string& trace, const std::string& manifest_path) {
  if (!will_replay(manifest_path)) {
    require_flag(!f.in.empty(), "--in is required");
    require_flag(f.sigma > 0.0, "--sigma is required and must be > 0");
  }
  RunContext ctx = prepare_run("decode", manifest_path, decode_params(f), seed, seed_given,
                               true, {"in"});
  const json& p = ctx.params;
  io::detail::check_keys(p,
                         {"in", "family", "sigma", "bic_delta", "bic_margin", "gmm_max_points",
                          "log_space", "free_amplitude", "categorical_offset", "categorical_size"},
                         "params");
  const cords::FieldSamples samples = load_samples(io::detail::get_string(p, "in", "params"));
  cords::KernelSpec spec;
  spec.family = cords::family_from_name(io::detail::get_string(p, "family", "params"));
  spec.sigma = io::detail::get_finite(p, "sigma", "params");
  spec.dim = static_cast<int>(samples.dim());
  const cords::DecodeOptions opts = decode_options_from_params(p, ctx.seed);
  const cords::DecodeResult result = cords::decode_set(samples, spec, opts);
  print_decode_summary(result);
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::write_decode_result(result, ctx.hash));
    std::cout << "wrote result: " << out << "\n";
  }
  if (!trace.empty()) {
    io::write_file(trace, io::write_csv_trace(result.trace, ctx.hash));
    std::cout << "wrote trace: " << trace << "\n";
  }
  finish_run(ctx);
  return 0;
}

// ----------------------------------------------------------------------------
// roundtrip
// ----------------------------------------------------------------------------

struct RoundtripFlags {
  EncodeFlags enc;
  DecodeFlags dec;
  int subsample = 0;  // 0 = keep all samples
};

json roundtrip_params(const RoundtripFlags& f) {
  json p = encode_params(f.enc);
  const json d = decode_params(f.dec);
  for (const auto& item : d.items())
    if (item.key() != "in" && item.key() != "family" && item.key() != "sigma")
      p[item.key()] = item.value();
  p["subsample"] = f.subsample;
  return p;
}

int cmd_roundtrip(const RoundtripFlags& f, std::uint64_t seed, bool seed_given,
                  const std::string& out, const std::string& manifest_path) {
  if (!will_replay(manifest_path)) {
    require_flag(!f.enc.in.empty(), "--in is required");
    require_flag(f.enc.sigma > 0.0, "--sigma is required and must be > 0");
    require_flag(f.enc.samples >= 1, "--samples must be >= 1");
    require_flag(f.subsample >= 0, "--subsample must be >= 0");
  }
  RunContext ctx = prepare_run("roundtrip", manifest_path, roundtrip_params(f), seed,
                               seed_given, true, {"in"});
  const json& p = ctx.params;
  io::detail::check_keys(p,
                         {"in", "family", "sigma", "samples", "scheme", "temperature",
                          "importance_fraction", "legacy_unit_weights", "proposal_sigma",
                          "bic_delta", "bic_margin", "gmm_max_points", "log_space",
                          "free_amplitude", "categorical_offset", "categorical_size", "subsample"},
                         "params");

  const cords::ObjectSet set = load_object_set(io::detail::get_string(p, "in", "params"));
  const int n_true = static_cast<int>(set.size());

  json body{{"n_true", n_true}};
  int count = 0;
  bool exact = true;
  double rmse = 0.0, feat_err = 0.0;

  if (n_true == 0) {
    // Nothing to sample from; the codec of the empty set is the empty set.
    body["count"] = 0;
    body["count_exact"] = true;
    body["raw_mass"] = 0.0;
    body["position_rmse"] = 0.0;
    body["feature_max_rel_error"] = 0.0;
    body["matched_pairs"] = 0;
    body["residual"] = 0.0;
    body["gram_condition"] = nullptr;
    body["fallback_used"] = false;
    body["low_separation"] = false;
    body["centers"] = json::array();
    body["features"] = json::array();
    body["dim"] = set.dim();
    body["feature_dim"] = set.feature_dim();
  } else {
    // Encode params subset drives the sampler; decode subset drives decode_set.
    json enc = p;
    enc.erase("bic_delta");
    enc.erase("bic_margin");
    enc.erase("gmm_max_points");
    enc.erase("log_space");
    enc.erase("free_amplitude");
    enc.erase("categorical_offset");
    enc.erase("categorical_size");
    enc.erase("subsample");
    const EncodeRun run = run_encode_params(enc, ctx.seed);
    cords::FieldSamples samples = run.samples;

    const int keep = static_cast<int>(io::detail::get_int(p, "subsample", "params"));
    if (keep > 0 && keep < samples.size()) {
      cords::Rng sub_rng = cords::Rng(ctx.seed).stream(3);
      const std::vector<int> idx =
          cords::subsample_indices(static_cast<int>(samples.size()), keep, sub_rng);
      const double scale = static_cast<double>(samples.size()) / keep;
      cords::FieldSamples kept;
      kept.points.resize(keep, samples.points.cols());
      kept.density.resize(keep);
      kept.features.resize(keep, samples.features.cols());
      kept.weights.resize(keep);
      for (int i = 0; i < keep; ++i) {
        kept.points.row(i) = samples.points.row(idx[static_cast<std::size_t>(i)]);
        kept.density[i] = samples.density[idx[static_cast<std::size_t>(i)]];
        kept.features.row(i) = samples.features.row(idx[static_cast<std::size_t>(i)]);
        kept.weights[i] = samples.weights[idx[static_cast<std::size_t>(i)]] * scale;
      }
      kept.scheme = samples.scheme;
      kept.proposal_meta = samples.proposal_meta;
      samples = std::move(kept);
    }

    const cords::DecodeOptions opts = decode_options_from_params(p, ctx.seed);
    const cords::DecodeResult result = cords::decode_set(samples, run.spec, opts);

    count = result.count;
    exact = (count == n_true);
    const auto pairs = cords::match_points(set.positions, result.centers);
    double sq = 0.0;
    for (const auto& [a, b] : pairs) {
      sq += (set.positions.row(a) - result.centers.row(b)).squaredNorm();
      for (Eigen::Index c = 0; c < set.features.cols(); ++c) {
        const double denom = std::max(std::abs(set.features(a, c)), 1e-12);
        feat_err = std::max(feat_err, std::abs(result.features(b, c) - set.features(a, c)) / denom);
      }
    }
    rmse = pairs.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(pairs.size()));

    body["count"] = count;
    body["count_exact"] = exact;
    body["raw_mass"] = result.raw_mass;
    body["position_rmse"] = rmse;
    body["feature_max_rel_error"] = feat_err;
    body["matched_pairs"] = pairs.size();
    body["residual"] = result.residual;
    body["gram_condition"] = io::detail::number_or_null(result.gram_condition);
    body["fallback_used"] = result.fallback_used;
    body["low_separation"] = result.low_separation;
    body["centers"] = io::detail::mat_to_json(result.centers);
    body["features"] = io::detail::mat_to_json(result.features);
    body["dim"] = result.centers.cols();
    body["feature_dim"] = result.features.cols();
  }

  std::cout << "true objects: " << n_true << "  decoded: " << count
            << "  count_exact: " << yes_no(exact) << "\n";
  std::cout << "position rmse: " << io::format_double(rmse) << "\n";
  std::cout << "feature max rel error: " << io::format_double(feat_err) << "\n";
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::dump_document(io::make_document("RoundtripReport", std::move(body),
                                                            ctx.hash)));
    std::cout << "wrote report: " << out << "\n";
  }
  finish_run(ctx);
  return exact ? 0 : 1;
}

// ----------------------------------------------------------------------------
// sim-frb
// ----------------------------------------------------------------------------

struct SimFrbFlags {
  int grid_size = 1000;
  double background = 5.0;
  int n_min = 1;
  int n_max = 6;
  double min_onset_sep = 0.0;
  double sigma_rho = 0.01;
  double sigma_feat = 0.015;
};

json sim_frb_params(const SimFrbFlags& f) {
  return {{"grid_size", f.grid_size},     {"background", f.background},
          {"n_min", f.n_min},             {"n_max", f.n_max},
          {"min_onset_sep", f.min_onset_sep}, {"sigma_rho", f.sigma_rho},
          {"sigma_feat", f.sigma_feat}};
}

int cmd_sim_frb(const SimFrbFlags& f, std::uint64_t seed, bool seed_given, const std::string& out,
                const std::string& field_out, const std::string& manifest_path) {
  if (!will_replay(manifest_path)) require_flag(f.grid_size >= 2, "--grid-size must be >= 2");
  RunContext ctx = prepare_run("sim-frb", manifest_path, sim_frb_params(f), seed, seed_given,
                               true, {});
  const json& p = ctx.params;
  io::detail::check_keys(p,
                         {"grid_size", "background", "n_min", "n_max", "min_onset_sep",
                          "sigma_rho", "sigma_feat"},
                         "params");
  cords::FrbConfig cfg;
  cfg.grid_size = static_cast<int>(io::detail::get_int(p, "grid_size", "params"));
  cfg.background = io::detail::get_finite(p, "background", "params");
  cfg.n_min = static_cast<int>(io::detail::get_int(p, "n_min", "params"));
  cfg.n_max = static_cast<int>(io::detail::get_int(p, "n_max", "params"));
  cfg.min_onset_sep = io::detail::get_finite(p, "min_onset_sep", "params");
  const double sigma_rho = io::detail::get_finite(p, "sigma_rho", "params");
  const double sigma_feat = io::detail::get_finite(p, "sigma_feat", "params");

  const cords::FrbDraw draw = cords::simulate_frb(cfg, ctx.seed);
  std::cout << "components: " << draw.components.size() << "\n";
  for (const auto& c : draw.components)
    std::cout << "  t0=" << io::format_double(c.t0) << "  log_amp=" << io::format_double(c.log_amp)
              << "  log_rise=" << io::format_double(c.log_rise)
              << "  skew=" << io::format_double(c.skew) << "\n";
  std::cout << "counts total: " << io::format_double(draw.counts.sum()) << " (background "
            << io::format_double(cfg.background) << ", grid " << cfg.grid_size << ")\n";
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::write_frb_draw(draw, ctx.hash));
    std::cout << "wrote draw: " << out << "\n";
  }
  if (!field_out.empty()) {
    const cords::GridField1D field =
        cords::encode_frb(draw.components, cfg.grid_size, sigma_rho, sigma_feat);
    io::write_file(field_out, io::write_grid_field(field, ctx.hash));
    std::cout << "wrote field: " << field_out << "\n";
  }
  finish_run(ctx);
  return 0;
}

// ----------------------------------------------------------------------------
// decode-1d
// ----------------------------------------------------------------------------

struct Decode1DFlags {
  std::string in;
  int downsample = 1;
  bool log_space = false;
  double exponent_clamp = 12.0;
};

json decode1d_params(const Decode1DFlags& f) {
  return {{"in", f.in},
          {"downsample", f.downsample},
          {"log_space", f.log_space},
          {"exponent_clamp", f.exponent_clamp}};
}

int cmd_decode_1d(const Decode1DFlags& f, const std::string& out,
                  const std::string& manifest_path, std::uint64_t seed, bool seed_given) {
  if (!will_replay(manifest_path)) {
    require_flag(!f.in.empty(), "--in is required");
    require_flag(f.downsample >= 1, "--downsample must be >= 1");
  }
  RunContext ctx = prepare_run("decode-1d", manifest_path, decode1d_params(f), seed, seed_given,
                               false, {"in"});
  const json& p = ctx.params;
  io::detail::check_keys(p, {"in", "downsample", "log_space", "exponent_clamp"}, "params");
  cords::GridField1D field =
      io::read_grid_field(io::read_file(io::detail::get_string(p, "in", "params")),
                          io::detail::get_string(p, "in", "params") + ":");
  const int factor = static_cast<int>(io::detail::get_int(p, "downsample", "params"));
  if (factor > 1) field = cords::downsample(field, factor);
  cords::Decode1DOptions opts;
  opts.log_space = io::detail::get_bool(p, "log_space", "params");
  opts.exponent_clamp = io::detail::get_finite(p, "exponent_clamp", "params");
  const cords::Decode1DResult result = cords::decode_lightcurve(field, opts);
  std::cout << "count: " << result.count << " (raw mass " << io::format_double(result.raw_mass)
            << ")\n";
  std::cout << "onsets:";
  for (Eigen::Index i = 0; i < result.onsets.size(); ++i)
    std::cout << " " << io::format_double(result.onsets[i]);
  std::cout << "\n";
  std::cout << "shortfall: " << yes_no(result.shortfall)
            << "  edge_proximal: " << yes_no(result.edge_proximal) << "\n";
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::write_decode1d_result(result, ctx.hash));
    std::cout << "wrote result: " << out << "\n";
  }
  finish_run(ctx);
  return 0;
}

// ----------------------------------------------------------------------------
// bench-maxima
// ----------------------------------------------------------------------------

struct BenchFlags {
  int instances = 200;
  double lengthscale = 0.9;
  double amplitude = 1.5;
  int num_features = 150;
  double envelope_margin = 0.8;
  std::string envelope_mode = "interior_one";
  int grid_n = 181;
  double threshold_rel = 0.05;
  int min_distance = 3;
  int max_peaks = 50;
  double epsilon = 0.24;
  double encode_sigma = 0.06;
  int sample_count = 4096;
  int subsample = 2048;
  bool oracle = false;
};

json bench_params(const BenchFlags& f) {
  return {{"instances", f.instances},
          {"lengthscale", f.lengthscale},
          {"amplitude", f.amplitude},
          {"num_features", f.num_features},
          {"envelope_margin", f.envelope_margin},
          {"envelope_mode", f.envelope_mode},
          {"grid_n", f.grid_n},
          {"threshold_rel", f.threshold_rel},
          {"min_distance", f.min_distance},
          {"max_peaks", f.max_peaks},
          {"epsilon", f.epsilon},
          {"encode_sigma", f.encode_sigma},
          {"sample_count", f.sample_count},
          {"subsample", f.subsample},
          {"oracle", f.oracle}};
}

int cmd_bench_maxima(const BenchFlags& f, std::uint64_t seed, bool seed_given,
                     const std::string& out, const std::string& csv,
                     const std::string& manifest_path) {
  if (!will_replay(manifest_path)) require_flag(f.instances >= 1, "--instances must be >= 1");
  RunContext ctx = prepare_run("bench-maxima", manifest_path, bench_params(f), seed, seed_given,
                               true, {});
  const json& p = ctx.params;
  io::detail::check_keys(p,
                         {"instances", "lengthscale", "amplitude", "num_features",
                          "envelope_margin", "envelope_mode", "grid_n", "threshold_rel",
                          "min_distance", "max_peaks", "epsilon", "encode_sigma", "sample_count",
                          "subsample", "oracle"},
                         "params");
  cords::BenchConfig cfg;
  cfg.instances = static_cast<int>(io::detail::get_int(p, "instances", "params"));
  cfg.lengthscale = io::detail::get_finite(p, "lengthscale", "params");
  cfg.amplitude = io::detail::get_finite(p, "amplitude", "params");
  cfg.num_features = static_cast<int>(io::detail::get_int(p, "num_features", "params"));
  cfg.envelope_margin = io::detail::get_finite(p, "envelope_margin", "params");
  cfg.envelope_mode = io::envelope_mode_from_name(
      io::detail::get_string(p, "envelope_mode", "params"), "params/envelope_mode");
  cfg.grid_n = static_cast<int>(io::detail::get_int(p, "grid_n", "params"));
  cfg.threshold_rel = io::detail::get_finite(p, "threshold_rel", "params");
  cfg.min_distance = static_cast<int>(io::detail::get_int(p, "min_distance", "params"));
  cfg.max_peaks = static_cast<int>(io::detail::get_int(p, "max_peaks", "params"));
  cfg.epsilon = io::detail::get_finite(p, "epsilon", "params");
  cfg.encode_sigma = io::detail::get_finite(p, "encode_sigma", "params");
  cfg.sample_count = static_cast<int>(io::detail::get_int(p, "sample_count", "params"));
  cfg.subsample = static_cast<int>(io::detail::get_int(p, "subsample", "params"));
  cfg.oracle = io::detail::get_bool(p, "oracle", "params");
  cfg.seed = ctx.seed;

  cords::BenchReport report = cords::run_benchmark(cfg);
  const double mean_ms = report.mean_decode_ms;
  // Artifacts must replay byte-identically; wall-clock fields are reserved
  // (always 0) at the tool boundary. Real timings go to the summary below.
  report.mean_decode_ms = 0.0;
  for (auto& row : report.rows) row.decode_ms = 0.0;

  std::cout << "instances: " << cfg.instances
            << "  lengthscale: " << io::format_double(cfg.lengthscale)
            << (cfg.oracle ? "  (oracle)" : "") << "\n";
  std::cout << "accuracy: " << io::format_double(report.accuracy) << "\n";
  std::cout << "mean decode: " << io::format_double(mean_ms) << " ms (not written to artifacts)\n";
  std::cout << "manifest: " << ctx.hash << "\n";
  if (!out.empty()) {
    io::write_file(out, io::write_bench_report(report, ctx.hash));
    std::cout << "wrote report: " << out << "\n";
  }
  if (!csv.empty()) {
    io::write_file(csv, io::write_csv_bench(report, ctx.hash));
    std::cout << "wrote csv: " << csv << "\n";
  }
  finish_run(ctx);
  return 0;
}

// ----------------------------------------------------------------------------
// gram-check
// ----------------------------------------------------------------------------

struct GramCheckFlags {
  std::string centers;
  std::string family = "gaussian";
  double sigma = 0.0;
  int mc_samples = 4096;
};

json gram_check_params(const GramCheckFlags& f) {
  return {{"centers", f.centers},
          {"family", f.family},
          {"sigma", f.sigma},
          {"mc_samples", f.mc_samples}};
}

int cmd_gram_check(const GramCheckFlags& f, std::uint64_t seed, bool seed_given,
                   const std::string& out, const std::string& manifest_path) {
  if (!will_replay(manifest_path)) {
    require_flag(!f.centers.empty(), "--centers is required");
    require_flag(f.sigma > 0.0, "--sigma is required and must be > 0");
    require_flag(f.mc_samples >= 1, "--mc-samples must be >= 1");
  }
  RunContext ctx = prepare_run("gram-check", manifest_path, gram_check_params(f), seed,
                               seed_given, true, {"centers"});
  const json& p = ctx.params;
  io::detail::check_keys(p, {"centers", "family", "sigma", "mc_samples"}, "params");
  const cords::ObjectSet set = load_object_set(io::detail::get_string(p, "centers", "params"));
  if (set.size() < 1) throw cords::InvalidArgument("gram-check: need at least one center");
  cords::KernelSpec spec;
  spec.family = cords::family_from_name(io::detail::get_string(p, "family", "params"));
  spec.sigma = io::detail::get_finite(p, "sigma", "params");
  spec.dim = static_cast<int>(set.dim());
  const int mc_samples = static_cast<int>(io::detail::get_int(p, "mc_samples", "params"));

  const Eigen::MatrixXd analytic = cords::analytic_gram(spec, set.positions);

  const cords::Box box = cords::padded_box(set, 5.0 * spec.sigma);
  const cords::DrawResult draw = cords::sample_uniform(box, mc_samples, ctx.seed);
  const cords::EncodedValues values = cords::encode_at(set, spec, draw.points);
  cords::FieldSamples samples;
  samples.points = draw.points;
  samples.density = values.density;
  samples.features = values.features;
  samples.weights = draw.weights;
  samples.scheme = cords::SampleScheme::Uniform;
  const cords::GramSystem system = cords::gram_system(samples, spec, set.positions);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(analytic);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(system.gram);
  const double min_a = es_a.eigenvalues().minCoeff();
  const double max_a = es_a.eigenvalues().maxCoeff();
  const double min_m = es_m.eigenvalues().minCoeff();
  const double max_m = es_m.eigenvalues().maxCoeff();
  const double err_fro = (system.gram - analytic).norm();
  const double err_rel = err_fro / std::max(analytic.norm(), 1e-300);
  // Coincident (or numerically coincident) centers make G rank deficient.
  const bool duplicate = min_a <= 1e-10 * max_a;

  const auto condition = [](double lo, double hi) {
    return lo > 0.0 ? json(hi / lo) : json(nullptr);
  };

  std::cout << "centers: " << set.size() << "  sigma: " << io::format_double(spec.sigma)
            << "  mc samples: " << mc_samples << "\n";
  if (set.size() <= 6) {
    std::cout << "gram entries (analytic, mc):\n";
    for (Eigen::Index i = 0; i < analytic.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        std::cout << "  [" << i << "," << j << "] " << io::format_double(analytic(i, j)) << "  "
                  << io::format_double(system.gram(i, j)) << "\n";
  }
  std::cout << "min eigenvalue: analytic " << io::format_double(min_a) << "  mc "
            << io::format_double(min_m) << "\n";
  std::cout << "condition: analytic "
            << (min_a > 0.0 ? io::format_double(max_a / min_a) : "inf") << "  mc "
            << (min_m > 0.0 ? io::format_double(max_m / min_m) : "inf") << "\n";
  std::cout << "mc error frobenius: " << io::format_double(err_fro)
            << "  relative: " << io::format_double(err_rel) << "\n";
  if (duplicate) std::cout << "duplicate centers: yes (gram is rank deficient)\n";
  std::cout << "manifest: " << ctx.hash << "\n";

  if (!out.empty()) {
    json body{{"k", set.size()},
              {"mc_samples", mc_samples},
              {"analytic", io::detail::mat_to_json(analytic)},
              {"mc", io::detail::mat_to_json(system.gram)},
              {"min_eig_analytic", min_a},
              {"min_eig_mc", min_m},
              {"condition_analytic", condition(min_a, max_a)},
              {"condition_mc", condition(min_m, max_m)},
              {"error_frobenius", err_fro},
              {"error_relative", err_rel},
              {"duplicate_flag", duplicate}};
    io::write_file(out, io::dump_document(io::make_document("GramCheck", std::move(body),
                                                            ctx.hash)));
    std::cout << "wrote table: " << out << "\n";
  }
  finish_run(ctx);
  return 0;
}

void cap_threads_from_env() {
  if (const char* env = std::getenv("CORDS_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  cap_threads_from_env();

  CLI::App app{"cords: codec between object sets and continuous density/feature fields"};
  app.set_version_flag("--version", std::string(cords::kToolVersion));
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, csv, trace, field_out, manifest_path;

  auto add_common = [&](CLI::App* sub, bool with_csv = false, bool with_trace = false,
                        bool with_field = false) {
    CLI::Option* seed_opt = sub->add_option("--seed", seed, "RNG seed (required unless replaying a manifest)");
    sub->add_option("--out", out, "write the machine-readable artifact here");
    sub->add_option("--manifest", manifest_path,
                    "write the run manifest here, or replay it if the file exists");
    if (with_csv) sub->add_option("--csv", csv, "also write a flat CSV table");
    if (with_trace) sub->add_option("--trace", trace, "write the optimizer trace CSV");
    if (with_field) sub->add_option("--field", field_out, "write the encoded truth field");
    return seed_opt;
  };

  EncodeFlags enc;
  CLI::App* enc_cmd = app.add_subcommand("encode", "encode an object set into field samples");
  enc_cmd->add_option("--in", enc.in, "ObjectSet document (.json or .csv)");
  enc_cmd->add_option("--family", enc.family, "kernel family: gaussian|laplacian|epanechnikov");
  enc_cmd->add_option("--sigma", enc.sigma, "kernel bandwidth");
  enc_cmd->add_option("--samples", enc.samples, "number of field samples M");
  enc_cmd->add_option("--scheme", enc.scheme, "sampling scheme: importance|uniform");
  enc_cmd->add_option("--temperature", enc.temperature, "proposal temperature");
  enc_cmd->add_option("--importance-fraction", enc.importance_fraction,
                      "fraction of draws from the kernel mixture");
  CLI::Option* enc_ps = enc_cmd->add_option("--proposal-sigma", enc.proposal_sigma,
                                            "proposal bandwidth (default: kernel sigma)");
  enc_cmd->add_flag("--legacy-unit-weights", enc.legacy_unit_weights,
                    "legacy w = 1/(M q~) weights (breaks mass calibration)");
  CLI::Option* enc_seed = add_common(enc_cmd, true);

  DecodeFlags dec;
  CLI::App* dec_cmd = app.add_subcommand("decode", "decode field samples into an object set");
  dec_cmd->add_option("--in", dec.in, "FieldSamples document");
  dec_cmd->add_option("--family", dec.family, "kernel family used to encode");
  dec_cmd->add_option("--sigma", dec.sigma, "kernel bandwidth used to encode");
  CLI::Option* dec_delta = dec_cmd->add_option("--bic-delta", dec.bic_delta,
                                               "BIC scan halfwidth (default: 0.15*count)");
  dec_cmd->add_option("--bic-margin", dec.bic_margin, "BIC margin to override the mass count");
  dec_cmd->add_option("--gmm-max-points", dec.gmm_max_points, "resample cap for the GMM stage");
  dec_cmd->add_flag("--log-space", dec.log_space, "fit the position objective on log density");
  dec_cmd->add_flag("--free-amplitude", dec.free_amplitude, "fit a global amplitude factor");
  dec_cmd->add_option("--categorical-offset", dec.categorical_offset,
                      "first feature column of a one-hot block");
  dec_cmd->add_option("--categorical-size", dec.categorical_size,
                      "width of the one-hot block (0 = none)");
  CLI::Option* dec_seed = add_common(dec_cmd, false, true);

  RoundtripFlags rt;
  CLI::App* rt_cmd = app.add_subcommand("roundtrip", "encode, sample, decode, and score a set");
  rt_cmd->add_option("--in", rt.enc.in, "ObjectSet document (.json or .csv)");
  rt_cmd->add_option("--family", rt.enc.family, "kernel family");
  rt_cmd->add_option("--sigma", rt.enc.sigma, "kernel bandwidth");
  rt_cmd->add_option("--samples", rt.enc.samples, "number of field samples M");
  rt_cmd->add_option("--scheme", rt.enc.scheme, "sampling scheme: importance|uniform");
  rt_cmd->add_option("--temperature", rt.enc.temperature, "proposal temperature");
  rt_cmd->add_option("--importance-fraction", rt.enc.importance_fraction,
                     "fraction of draws from the kernel mixture");
  CLI::Option* rt_ps = rt_cmd->add_option("--proposal-sigma", rt.enc.proposal_sigma,
                                          "proposal bandwidth (default: kernel sigma)");
  rt_cmd->add_flag("--legacy-unit-weights", rt.enc.legacy_unit_weights,
                   "legacy w = 1/(M q~) weights");
  rt_cmd->add_option("--subsample", rt.subsample, "keep only this many samples before decoding");
  CLI::Option* rt_delta = rt_cmd->add_option("--bic-delta", rt.dec.bic_delta,
                                             "BIC scan halfwidth (default: 0.15*count)");
  rt_cmd->add_option("--bic-margin", rt.dec.bic_margin, "BIC margin to override the mass count");
  rt_cmd->add_option("--gmm-max-points", rt.dec.gmm_max_points, "resample cap for the GMM stage");
  rt_cmd->add_flag("--log-space", rt.dec.log_space, "fit the position objective on log density");
  rt_cmd->add_flag("--free-amplitude", rt.dec.free_amplitude, "fit a global amplitude factor");
  CLI::Option* rt_seed = add_common(rt_cmd);

  SimFrbFlags frb;
  CLI::App* frb_cmd = app.add_subcommand("sim-frb", "draw a synthetic burst light curve");
  frb_cmd->add_option("--grid-size", frb.grid_size, "time bins T");
  frb_cmd->add_option("--background", frb.background, "background rate per bin");
  frb_cmd->add_option("--n-min", frb.n_min, "minimum component count");
  frb_cmd->add_option("--n-max", frb.n_max, "maximum component count");
  frb_cmd->add_option("--min-onset-sep", frb.min_onset_sep, "reject draws with closer onsets");
  frb_cmd->add_option("--sigma-rho", frb.sigma_rho, "density bandwidth of the encoded field");
  frb_cmd->add_option("--sigma-feat", frb.sigma_feat, "feature bandwidth of the encoded field");
  CLI::Option* frb_seed = add_common(frb_cmd, false, false, true);

  Decode1DFlags d1;
  CLI::App* d1_cmd = app.add_subcommand("decode-1d", "decode a 1D gridded field");
  d1_cmd->add_option("--in", d1.in, "GridField1D document");
  d1_cmd->add_option("--downsample", d1.downsample, "average-pool the grid by this factor");
  d1_cmd->add_flag("--log-space", d1.log_space, "fit the position objective on log density");
  d1_cmd->add_option("--exponent-clamp", d1.exponent_clamp,
                     "clamp for exponentiating log10 channels");
  CLI::Option* d1_seed = add_common(d1_cmd);

  BenchFlags bench;
  CLI::App* bench_cmd = app.add_subcommand("bench-maxima", "run the local-maxima benchmark");
  bench_cmd->add_option("--instances", bench.instances, "number of field instances");
  bench_cmd->add_option("--lengthscale", bench.lengthscale, "GP lengthscale");
  bench_cmd->add_option("--amplitude", bench.amplitude, "GP amplitude");
  bench_cmd->add_option("--num-features", bench.num_features, "random Fourier feature count");
  bench_cmd->add_option("--envelope-margin", bench.envelope_margin, "taper frame width");
  bench_cmd->add_option("--envelope-mode", bench.envelope_mode,
                        "interior_one|literal_rising");
  bench_cmd->add_option("--grid-n", bench.grid_n, "peak-extraction grid resolution");
  bench_cmd->add_option("--threshold-rel", bench.threshold_rel, "relative peak threshold");
  bench_cmd->add_option("--min-distance", bench.min_distance, "peak suppression radius (cells)");
  bench_cmd->add_option("--max-peaks", bench.max_peaks, "peak cap per instance");
  bench_cmd->add_option("--epsilon", bench.epsilon, "match tolerance");
  bench_cmd->add_option("--encode-sigma", bench.encode_sigma, "bandwidth for encoding truth peaks");
  bench_cmd->add_option("--sample-count", bench.sample_count, "importance samples P");
  bench_cmd->add_option("--subsample", bench.subsample, "samples kept after subsampling K");
  bench_cmd->add_flag("--oracle", bench.oracle, "score the truth against itself");
  CLI::Option* bench_seed = add_common(bench_cmd, true);

  GramCheckFlags gram;
  CLI::App* gram_cmd = app.add_subcommand("gram-check", "compare MC and analytic Gram matrices");
  gram_cmd->add_option("--centers", gram.centers, "ObjectSet document with the centers");
  gram_cmd->add_option("--family", gram.family, "kernel family (analytic form needs gaussian)");
  gram_cmd->add_option("--sigma", gram.sigma, "kernel bandwidth");
  gram_cmd->add_option("--mc-samples", gram.mc_samples, "uniform MC sample count");
  CLI::Option* gram_seed = add_common(gram_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(enc_cmd)) {
      enc.proposal_sigma_given = enc_ps->count() > 0;
      return cmd_encode(enc, seed, enc_seed->count() > 0, out, csv, manifest_path);
    }
    if (app.got_subcommand(dec_cmd)) {
      dec.bic_delta_given = dec_delta->count() > 0;
      return cmd_decode(dec, seed, dec_seed->count() > 0, out, trace, manifest_path);
    }
    if (app.got_subcommand(rt_cmd)) {
      rt.enc.proposal_sigma_given = rt_ps->count() > 0;
      rt.dec.bic_delta_given = rt_delta->count() > 0;
      return cmd_roundtrip(rt, seed, rt_seed->count() > 0, out, manifest_path);
    }
    if (app.got_subcommand(frb_cmd))
      return cmd_sim_frb(frb, seed, frb_seed->count() > 0, out, field_out, manifest_path);
    if (app.got_subcommand(d1_cmd))
      return cmd_decode_1d(d1, out, manifest_path, seed, d1_seed->count() > 0);
    if (app.got_subcommand(bench_cmd))
      return cmd_bench_maxima(bench, seed, bench_seed->count() > 0, out, csv, manifest_path);
    if (app.got_subcommand(gram_cmd))
      return cmd_gram_check(gram, seed, gram_seed->count() > 0, out, manifest_path);
    std::cerr << "usage error: no command given\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const cords::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
