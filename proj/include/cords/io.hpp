#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cords/bench.hpp"
#include "cords/decode.hpp"
#include "cords/decode1d.hpp"
#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/gmm.hpp"
#include "cords/kernels.hpp"
#include "cords/version.hpp"

namespace cords {

// Everything needed to replay a CLI invocation: resolved parameters, seed,
// and content hashes of the input files. Deliberately no timestamps or host
// details; a manifest is a pure function input.
struct RunManifest {
  std::string tool_version;
  std::string command;
  nlohmann::json params;  // resolved flag set, command specific
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;  // path -> fnv1a64 hex
};

namespace io {

using json = nlohmann::json;

// ----------------------------------------------------------------------------
// Hashing and files
// ----------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file for reading", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw ParseError("read failure", path);
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open file for writing", path);
  out << content;
  if (!out.good()) throw ParseError("write failure", path);
}

inline std::string hash_file(const std::string& path) {
  return hash_hex(fnv1a64(read_file(path)));
}

// ----------------------------------------------------------------------------
// Number formatting (CSV side; JSON uses the library's shortest round-trip)
// ----------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("malformed number '" + std::string(s) + "'", where);
  return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("malformed integer '" + std::string(s) + "'", where);
  return v;
}

inline std::uint64_t parse_uint64(std::string_view s, const std::string& where) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("malformed unsigned integer '" + std::string(s) + "'", where);
  return v;
}

// ----------------------------------------------------------------------------
// JSON primitives: path-qualified access, strict key sets
// ----------------------------------------------------------------------------

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ParseError("expected an object", path);
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError("missing field", path + "/" + key);
  return *it;
}

// Unknown fields are rejected, not ignored; reproducibility beats forward
// compatibility here.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& path) {
  if (!j.is_object()) throw ParseError("expected an object", path);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError("unknown field '" + item.key() + "'", path);
  }
}

inline double get_double(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number()) throw ParseError("expected a number", path + "/" + key);
  return v.get<double>();
}

inline double get_finite(const json& j, const char* key, const std::string& path) {
  const double v = get_double(j, key, path);
  if (!std::isfinite(v)) throw ParseError("expected a finite number", path + "/" + key);
  return v;
}

inline long long get_int(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ParseError("expected an integer", path + "/" + key);
  return v.get<long long>();
}

inline std::uint64_t get_uint64(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0)
    return static_cast<std::uint64_t>(v.get<long long>());
  throw ParseError("expected a non-negative integer", path + "/" + key);
}

inline bool get_bool(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_boolean()) throw ParseError("expected a boolean", path + "/" + key);
  return v.get<bool>();
}

inline std::string get_string(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_string()) throw ParseError("expected a string", path + "/" + key);
  return v.get<std::string>();
}

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& j, const std::string& path,
                                     bool require_finite = true) {
  if (!j.is_array()) throw ParseError("expected an array", path);
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ParseError("expected a number", path + "/" + std::to_string(i));
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    if (require_finite && !std::isfinite(v[static_cast<Eigen::Index>(i)]))
      throw ParseError("expected a finite number", path + "/" + std::to_string(i));
  }
  return v;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// cols is authoritative so empty matrices keep their width.
inline Eigen::MatrixXd mat_from_json(const json& j, Eigen::Index cols,
                                     const std::string& path) {
  if (!j.is_array()) throw ParseError("expected an array of rows", path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string row_path = path + "/" + std::to_string(r);
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError("expected a row of " + std::to_string(cols) + " numbers", row_path);
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number())
        throw ParseError("expected a number", row_path + "/" + std::to_string(c));
      m(static_cast<Eigen::Index>(r), c) = row[c].get<double>();
      if (!std::isfinite(m(static_cast<Eigen::Index>(r), c)))
        throw ParseError("expected a finite number", row_path + "/" + std::to_string(c));
    }
  }
  return m;
}

// Infinity is representable in the model (condition numbers) but not in
// JSON; it maps to null.
inline json number_or_null(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

inline double number_or_inf(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw ParseError("expected a number or null", path + "/" + key);
  return v.get<double>();
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Embedded (non-document) codecs
// ----------------------------------------------------------------------------

inline json to_json(const KernelSpec& spec) {
  return {{"family", family_name(spec.family)},
          {"sigma", spec.sigma},
          {"dim", spec.dim},
          {"normalized", spec.normalized}};
}

inline KernelSpec kernel_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"family", "sigma", "dim", "normalized"}, path);
  KernelSpec spec;
  spec.family = family_from_name(detail::get_string(j, "family", path));
  spec.sigma = detail::get_finite(j, "sigma", path);
  spec.dim = static_cast<int>(detail::get_int(j, "dim", path));
  spec.normalized = detail::get_bool(j, "normalized", path);
  validate(spec);
  return spec;
}

inline json to_json(const Box& box) {
  return {{"lo", detail::vec_to_json(box.lo)}, {"hi", detail::vec_to_json(box.hi)}};
}

inline Box box_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"lo", "hi"}, path);
  Box box;
  box.lo = detail::vec_from_json(detail::require(j, "lo", path), path + "/lo");
  box.hi = detail::vec_from_json(detail::require(j, "hi", path), path + "/hi");
  validate(box);
  return box;
}

inline const char* scheme_name(SampleScheme scheme) {
  return scheme == SampleScheme::Uniform ? "uniform" : "importance";
}

inline SampleScheme scheme_from_name(const std::string& name, const std::string& path) {
  if (name == "uniform") return SampleScheme::Uniform;
  if (name == "importance") return SampleScheme::Importance;
  throw ParseError("unknown scheme '" + name + "'", path);
}

inline json to_json(const ProposalMeta& meta) {
  json j{{"proposal_sigma", meta.proposal_sigma},
         {"temperature", meta.temperature},
         {"importance_fraction", meta.importance_fraction}};
  j["box"] = meta.box ? to_json(*meta.box) : json(nullptr);
  return j;
}

inline ProposalMeta proposal_meta_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"proposal_sigma", "temperature", "importance_fraction", "box"},
                     path);
  ProposalMeta meta;
  meta.proposal_sigma = detail::get_finite(j, "proposal_sigma", path);
  meta.temperature = detail::get_finite(j, "temperature", path);
  meta.importance_fraction = detail::get_finite(j, "importance_fraction", path);
  const json& box = detail::require(j, "box", path);
  if (!box.is_null()) meta.box = box_from_json(box, path + "/box");
  return meta;
}

inline json to_json(const SamplerConfig& cfg) {
  json j{{"scheme", scheme_name(cfg.scheme)},
         {"count", cfg.count},
         {"temperature", cfg.temperature},
         {"importance_fraction", cfg.importance_fraction},
         {"seed", cfg.seed},
         {"legacy_unit_weights", cfg.legacy_unit_weights}};
  j["proposal_sigma"] = cfg.proposal_sigma ? json(*cfg.proposal_sigma) : json(nullptr);
  j["box"] = cfg.box ? to_json(*cfg.box) : json(nullptr);
  return j;
}

inline SamplerConfig sampler_from_json(const json& j, const std::string& path) {
  detail::check_keys(j,
                     {"scheme", "count", "proposal_sigma", "temperature",
                      "importance_fraction", "box", "seed", "legacy_unit_weights"},
                     path);
  SamplerConfig cfg;
  cfg.scheme = scheme_from_name(detail::get_string(j, "scheme", path), path + "/scheme");
  cfg.count = static_cast<int>(detail::get_int(j, "count", path));
  const json& ps = detail::require(j, "proposal_sigma", path);
  if (!ps.is_null()) {
    if (!ps.is_number()) throw ParseError("expected a number or null", path + "/proposal_sigma");
    cfg.proposal_sigma = ps.get<double>();
  }
  cfg.temperature = detail::get_finite(j, "temperature", path);
  cfg.importance_fraction = detail::get_finite(j, "importance_fraction", path);
  const json& box = detail::require(j, "box", path);
  if (!box.is_null()) cfg.box = box_from_json(box, path + "/box");
  cfg.seed = detail::get_uint64(j, "seed", path);
  cfg.legacy_unit_weights = detail::get_bool(j, "legacy_unit_weights", path);
  validate(cfg);
  return cfg;
}

inline json to_json(const ObjectiveOptions& opts) {
  return {{"log_space", opts.log_space},
          {"free_amplitude", opts.free_amplitude},
          {"amplitude", opts.amplitude},
          {"floor_scale", opts.floor_scale}};
}

inline ObjectiveOptions objective_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"log_space", "free_amplitude", "amplitude", "floor_scale"}, path);
  ObjectiveOptions opts;
  opts.log_space = detail::get_bool(j, "log_space", path);
  opts.free_amplitude = detail::get_bool(j, "free_amplitude", path);
  opts.amplitude = detail::get_finite(j, "amplitude", path);
  opts.floor_scale = detail::get_finite(j, "floor_scale", path);
  return opts;
}

inline json to_json(const LbfgsConfig& cfg) {
  return {{"memory", cfg.memory},       {"max_iter", cfg.max_iter},
          {"c1", cfg.c1},               {"c2", cfg.c2},
          {"grad_tol", cfg.grad_tol},   {"max_line_steps", cfg.max_line_steps}};
}

inline LbfgsConfig lbfgs_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"memory", "max_iter", "c1", "c2", "grad_tol", "max_line_steps"},
                     path);
  LbfgsConfig cfg;
  cfg.memory = static_cast<int>(detail::get_int(j, "memory", path));
  cfg.max_iter = static_cast<int>(detail::get_int(j, "max_iter", path));
  cfg.c1 = detail::get_finite(j, "c1", path);
  cfg.c2 = detail::get_finite(j, "c2", path);
  cfg.grad_tol = detail::get_finite(j, "grad_tol", path);
  cfg.max_line_steps = static_cast<int>(detail::get_int(j, "max_line_steps", path));
  return cfg;
}

inline json to_json(const GmmParams& params) {
  return {{"tol", params.tol},
          {"max_iter", params.max_iter},
          {"pin_equal_weights", params.pin_equal_weights}};
}

inline GmmParams gmm_params_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"tol", "max_iter", "pin_equal_weights"}, path);
  GmmParams params;
  params.tol = detail::get_finite(j, "tol", path);
  params.max_iter = static_cast<int>(detail::get_int(j, "max_iter", path));
  params.pin_equal_weights = detail::get_bool(j, "pin_equal_weights", path);
  return params;
}

inline json to_json(const DecodeOptions& opts) {
  json j{{"bic_margin", opts.bic_margin},
         {"objective", to_json(opts.objective)},
         {"lbfgs", to_json(opts.lbfgs)},
         {"gmm", to_json(opts.gmm)},
         {"gmm_max_points", opts.gmm_max_points},
         {"seed", opts.seed},
         {"categorical_offset", opts.categorical_offset},
         {"categorical_size", opts.categorical_size}};
  j["bic_delta"] = opts.bic_delta ? json(*opts.bic_delta) : json(nullptr);
  return j;
}

inline DecodeOptions decode_options_from_json(const json& j, const std::string& path) {
  detail::check_keys(j,
                     {"bic_delta", "bic_margin", "objective", "lbfgs", "gmm",
                      "gmm_max_points", "seed", "categorical_offset", "categorical_size"},
                     path);
  DecodeOptions opts;
  const json& delta = detail::require(j, "bic_delta", path);
  if (!delta.is_null()) {
    if (!delta.is_number_integer() && !delta.is_number_unsigned())
      throw ParseError("expected an integer or null", path + "/bic_delta");
    opts.bic_delta = delta.get<int>();
  }
  opts.bic_margin = detail::get_finite(j, "bic_margin", path);
  opts.objective = objective_from_json(detail::require(j, "objective", path), path + "/objective");
  opts.lbfgs = lbfgs_from_json(detail::require(j, "lbfgs", path), path + "/lbfgs");
  opts.gmm = gmm_params_from_json(detail::require(j, "gmm", path), path + "/gmm");
  opts.gmm_max_points = static_cast<int>(detail::get_int(j, "gmm_max_points", path));
  opts.seed = detail::get_uint64(j, "seed", path);
  opts.categorical_offset = static_cast<int>(detail::get_int(j, "categorical_offset", path));
  opts.categorical_size = static_cast<int>(detail::get_int(j, "categorical_size", path));
  return opts;
}

inline json to_json(const GmmFit& fit) {
  json j{{"means", detail::mat_to_json(fit.means)},
         {"dim", fit.means.cols()},
         {"shared_variance", fit.shared_variance},
         {"mixing_weights", detail::vec_to_json(fit.mixing_weights)},
         {"log_likelihood", fit.log_likelihood},
         {"bic", fit.bic},
         {"iterations", fit.iterations},
         {"variance_floor", fit.variance_floor},
         {"collapsed", fit.collapsed},
         {"restarted", fit.restarted},
         {"monotone", fit.monotone}};
  json trace = json::array();
  for (double v : fit.ll_trace) trace.push_back(v);
  j["ll_trace"] = std::move(trace);
  return j;
}

inline GmmFit gmm_fit_from_json(const json& j, const std::string& path) {
  detail::check_keys(j,
                     {"means", "dim", "shared_variance", "mixing_weights", "log_likelihood",
                      "bic", "iterations", "variance_floor", "collapsed", "restarted",
                      "monotone", "ll_trace"},
                     path);
  GmmFit fit;
  const auto dim = static_cast<Eigen::Index>(detail::get_int(j, "dim", path));
  fit.means = detail::mat_from_json(detail::require(j, "means", path), dim, path + "/means");
  fit.shared_variance = detail::get_finite(j, "shared_variance", path);
  fit.mixing_weights = detail::vec_from_json(detail::require(j, "mixing_weights", path),
                                             path + "/mixing_weights");
  fit.log_likelihood = detail::get_double(j, "log_likelihood", path);
  fit.bic = detail::get_double(j, "bic", path);
  fit.iterations = static_cast<int>(detail::get_int(j, "iterations", path));
  fit.variance_floor = detail::get_finite(j, "variance_floor", path);
  fit.collapsed = detail::get_bool(j, "collapsed", path);
  fit.restarted = detail::get_bool(j, "restarted", path);
  fit.monotone = detail::get_bool(j, "monotone", path);
  const json& trace = detail::require(j, "ll_trace", path);
  if (!trace.is_array()) throw ParseError("expected an array", path + "/ll_trace");
  fit.ll_trace.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace[i].is_number())
      throw ParseError("expected a number", path + "/ll_trace/" + std::to_string(i));
    fit.ll_trace.push_back(trace[i].get<double>());
  }
  return fit;
}

// ----------------------------------------------------------------------------
// Documents: {"version": 1, "type": ..., optional "manifest": hash, ...body}
// ----------------------------------------------------------------------------

inline json make_document(const char* type, json body,
                          const std::string& manifest_hash = {}) {
  body["version"] = kSchemaVersion;
  body["type"] = type;
  if (!manifest_hash.empty()) body["manifest"] = manifest_hash;
  return body;
}

inline std::string dump_document(const json& doc) { return doc.dump(2) + "\n"; }

inline json parse_text(const std::string& text, const std::string& where) {
  json j = json::parse(text, nullptr, false, false);
  if (j.is_discarded()) throw ParseError("malformed JSON", where);
  return j;
}

// Verifies version and type, returns the body. allowed lists body fields;
// version/type/manifest are implicitly allowed.
inline json open_document(const std::string& text, const char* type,
                          std::initializer_list<const char*> allowed,
                          const std::string& where = "/") {
  const json j = parse_text(text, where);
  if (!j.is_object()) throw ParseError("expected a top-level object", where);
  std::vector<const char*> keys{"version", "type", "manifest"};
  keys.insert(keys.end(), allowed.begin(), allowed.end());
  if (!j.is_object()) throw ParseError("expected an object", where);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : keys)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError("unknown field '" + item.key() + "'", where);
  }
  const long long version = detail::get_int(j, "version", where);
  if (version != kSchemaVersion)
    throw ParseError("unsupported schema version " + std::to_string(version), where + "version");
  const std::string tag = detail::get_string(j, "type", where);
  if (tag != type)
    throw ParseError("expected type '" + std::string(type) + "', found '" + tag + "'",
                     where + "type");
  return j;
}

// --- ObjectSet

inline std::string write_object_set(const ObjectSet& set, const std::string& manifest_hash = {}) {
  json body{{"positions", detail::mat_to_json(set.positions)},
            {"features", detail::mat_to_json(set.features)},
            {"dim", set.positions.cols()},
            {"feature_dim", set.features.cols()}};
  return dump_document(make_document("ObjectSet", std::move(body), manifest_hash));
}

inline ObjectSet read_object_set(const std::string& text, const std::string& where = "/") {
  const json j = open_document(text, "ObjectSet", {"positions", "features", "dim", "feature_dim"},
                               where);
  ObjectSet set;
  const auto dim = static_cast<Eigen::Index>(detail::get_int(j, "dim", where));
  const auto fdim = static_cast<Eigen::Index>(detail::get_int(j, "feature_dim", where));
  set.positions =
      detail::mat_from_json(detail::require(j, "positions", where), dim, where + "positions");
  set.features =
      detail::mat_from_json(detail::require(j, "features", where), fdim, where + "features");
  try {
    validate(set);
  } catch (const Error& e) {
    throw ParseError(e.what(), where);
  }
  return set;
}

// --- FieldSamples

inline std::string write_samples(const FieldSamples& samples,
                                 const std::string& manifest_hash = {}) {
  json body{{"points", detail::mat_to_json(samples.points)},
            {"density", detail::vec_to_json(samples.density)},
            {"features", detail::mat_to_json(samples.features)},
            {"weights", detail::vec_to_json(samples.weights)},
            {"dim", samples.points.cols()},
            {"feature_dim", samples.features.cols()},
            {"scheme", scheme_name(samples.scheme)}};
  body["proposal_meta"] =
      samples.proposal_meta ? to_json(*samples.proposal_meta) : json(nullptr);
  return dump_document(make_document("FieldSamples", std::move(body), manifest_hash));
}

inline FieldSamples read_samples(const std::string& text, const std::string& where = "/") {
  const json j = open_document(text, "FieldSamples",
                               {"points", "density", "features", "weights", "dim",
                                "feature_dim", "scheme", "proposal_meta"},
                               where);
  FieldSamples samples;
  const auto dim = static_cast<Eigen::Index>(detail::get_int(j, "dim", where));
  const auto fdim = static_cast<Eigen::Index>(detail::get_int(j, "feature_dim", where));
  samples.points =
      detail::mat_from_json(detail::require(j, "points", where), dim, where + "points");
  samples.density =
      detail::vec_from_json(detail::require(j, "density", where), where + "density");
  samples.features =
      detail::mat_from_json(detail::require(j, "features", where), fdim, where + "features");
  samples.weights =
      detail::vec_from_json(detail::require(j, "weights", where), where + "weights");
  samples.scheme =
      scheme_from_name(detail::get_string(j, "scheme", where), where + "scheme");
  const json& meta = detail::require(j, "proposal_meta", where);
  if (!meta.is_null())
    samples.proposal_meta = proposal_meta_from_json(meta, where + "proposal_meta");
  for (Eigen::Index i = 0; i < samples.density.size(); ++i)
    if (samples.density[i] < 0.0)
      throw ParseError("density must be >= 0", where + "density/" + std::to_string(i));
  for (Eigen::Index i = 0; i < samples.weights.size(); ++i)
    if (!(samples.weights[i] > 0.0))
      throw ParseError("weights must be > 0", where + "weights/" + std::to_string(i));
  try {
    validate(samples);
  } catch (const Error& e) {
    throw ParseError(e.what(), where);
  }
  return samples;
}

// --- DecodeResult

inline std::string write_decode_result(const DecodeResult& result,
                                       const std::string& manifest_hash = {}) {
  json body{{"count", result.count},
            {"raw_mass", result.raw_mass},
            {"centers", detail::mat_to_json(result.centers)},
            {"features", detail::mat_to_json(result.features)},
            {"dim", result.centers.cols()},
            {"feature_dim", result.features.cols()},
            {"amplitude", result.amplitude},
            {"residual", result.residual},
            {"gram_condition", detail::number_or_null(result.gram_condition)},
            {"fallback_used", result.fallback_used},
            {"low_separation", result.low_separation}};
  if (result.categorical_labels) {
    json labels = json::array();
    for (Eigen::Index i = 0; i < result.categorical_labels->size(); ++i)
      labels.push_back((*result.categorical_labels)[i]);
    body["categorical_labels"] = std::move(labels);
  } else {
    body["categorical_labels"] = nullptr;
  }
  body["gmm"] = result.gmm ? to_json(*result.gmm) : json(nullptr);
  json trace = json::array();
  for (const auto& row : result.trace)
    trace.push_back({{"iteration", row.iteration},
                     {"value", row.value},
                     {"grad_norm", row.grad_norm}});
  body["trace"] = std::move(trace);
  return dump_document(make_document("DecodeResult", std::move(body), manifest_hash));
}

inline DecodeResult read_decode_result(const std::string& text, const std::string& where = "/") {
  const json j = open_document(
      text, "DecodeResult",
      {"count", "raw_mass", "centers", "features", "dim", "feature_dim", "amplitude",
       "residual", "gram_condition", "fallback_used", "low_separation",
       "categorical_labels", "gmm", "trace"},
      where);
  DecodeResult result;
  result.count = static_cast<int>(detail::get_int(j, "count", where));
  result.raw_mass = detail::get_finite(j, "raw_mass", where);
  const auto dim = static_cast<Eigen::Index>(detail::get_int(j, "dim", where));
  const auto fdim = static_cast<Eigen::Index>(detail::get_int(j, "feature_dim", where));
  result.centers =
      detail::mat_from_json(detail::require(j, "centers", where), dim, where + "centers");
  result.features =
      detail::mat_from_json(detail::require(j, "features", where), fdim, where + "features");
  result.amplitude = detail::get_finite(j, "amplitude", where);
  result.residual = detail::get_double(j, "residual", where);
  result.gram_condition = detail::number_or_inf(j, "gram_condition", where);
  result.fallback_used = detail::get_bool(j, "fallback_used", where);
  result.low_separation = detail::get_bool(j, "low_separation", where);
  const json& labels = detail::require(j, "categorical_labels", where);
  if (!labels.is_null()) {
    if (!labels.is_array()) throw ParseError("expected an array or null", where + "categorical_labels");
    Eigen::VectorXi vec(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!labels[i].is_number_integer() && !labels[i].is_number_unsigned())
        throw ParseError("expected an integer", where + "categorical_labels/" + std::to_string(i));
      vec[static_cast<Eigen::Index>(i)] = labels[i].get<int>();
    }
    result.categorical_labels = std::move(vec);
  }
  const json& gmm = detail::require(j, "gmm", where);
  if (!gmm.is_null()) result.gmm = gmm_fit_from_json(gmm, where + "gmm");
  const json& trace = detail::require(j, "trace", where);
  if (!trace.is_array()) throw ParseError("expected an array", where + "trace");
  result.trace.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::string row_path = where + "trace/" + std::to_string(i);
    detail::check_keys(trace[i], {"iteration", "value", "grad_norm"}, row_path);
    LbfgsTraceRow row;
    row.iteration = static_cast<int>(detail::get_int(trace[i], "iteration", row_path));
    row.value = detail::get_double(trace[i], "value", row_path);
    row.grad_norm = detail::get_double(trace[i], "grad_norm", row_path);
    result.trace.push_back(row);
  }
  return result;
}

// --- GridField1D

inline std::string write_grid_field(const GridField1D& field,
                                    const std::string& manifest_hash = {}) {
  json channels = json::array();
  for (Eigen::Index c = 0; c < field.channels.rows(); ++c) {
    Eigen::VectorXd row = field.channels.row(c).transpose();
    channels.push_back(detail::vec_to_json(row));
  }
  json info = json::array();
  for (const auto& ch : field.channel_info)
    info.push_back({{"name", ch.name}, {"log10", ch.log10}});
  json body{{"times", detail::vec_to_json(field.times)},
            {"dt", field.dt},
            {"density", detail::vec_to_json(field.density)},
            {"channels", std::move(channels)},
            {"channel_info", std::move(info)},
            {"sigma_rho", field.sigma_rho},
            {"sigma_feat", field.sigma_feat}};
  return dump_document(make_document("GridField1D", std::move(body), manifest_hash));
}

inline GridField1D read_grid_field(const std::string& text, const std::string& where = "/") {
  const json j = open_document(
      text, "GridField1D",
      {"times", "dt", "density", "channels", "channel_info", "sigma_rho", "sigma_feat"},
      where);
  GridField1D field;
  field.times = detail::vec_from_json(detail::require(j, "times", where), where + "times");
  field.dt = detail::get_finite(j, "dt", where);
  field.sigma_rho = detail::get_finite(j, "sigma_rho", where);
  field.sigma_feat = detail::get_finite(j, "sigma_feat", where);
  field.density =
      detail::vec_from_json(detail::require(j, "density", where), where + "density");
  const json& channels = detail::require(j, "channels", where);
  if (!channels.is_array()) throw ParseError("expected an array", where + "channels");
  field.channels.resize(static_cast<Eigen::Index>(channels.size()), field.times.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const Eigen::VectorXd row =
        detail::vec_from_json(channels[c], where + "channels/" + std::to_string(c));
    if (row.size() != field.times.size())
      throw ParseError("channel length must match times",
                       where + "channels/" + std::to_string(c));
    field.channels.row(static_cast<Eigen::Index>(c)) = row.transpose();
  }
  const json& info = detail::require(j, "channel_info", where);
  if (!info.is_array()) throw ParseError("expected an array", where + "channel_info");
  for (std::size_t c = 0; c < info.size(); ++c) {
    const std::string ch_path = where + "channel_info/" + std::to_string(c);
    detail::check_keys(info[c], {"name", "log10"}, ch_path);
    Channel ch;
    ch.name = detail::get_string(info[c], "name", ch_path);
    ch.log10 = detail::get_bool(info[c], "log10", ch_path);
    field.channel_info.push_back(std::move(ch));
  }
  try {
    validate(field);
  } catch (const Error& e) {
    throw ParseError(e.what(), where);
  }
  return field;
}

// --- FRB draw and 1D decode result

inline json to_json(const FrbComponent& comp) {
  return {{"t0", comp.t0},
          {"log_amp", comp.log_amp},
          {"log_rise", comp.log_rise},
          {"skew", comp.skew}};
}

inline FrbComponent frb_component_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, {"t0", "log_amp", "log_rise", "skew"}, path);
  FrbComponent comp;
  comp.t0 = detail::get_finite(j, "t0", path);
  comp.log_amp = detail::get_finite(j, "log_amp", path);
  comp.log_rise = detail::get_finite(j, "log_rise", path);
  comp.skew = detail::get_finite(j, "skew", path);
  return comp;
}

inline std::string write_frb_draw(const FrbDraw& draw, const std::string& manifest_hash = {}) {
  json comps = json::array();
  for (const auto& c : draw.components) comps.push_back(to_json(c));
  json body{{"components", std::move(comps)},
            {"rate", detail::vec_to_json(draw.rate)},
            {"counts", detail::vec_to_json(draw.counts)}};
  return dump_document(make_document("FrbDraw", std::move(body), manifest_hash));
}

inline FrbDraw read_frb_draw(const std::string& text, const std::string& where = "/") {
  const json j = open_document(text, "FrbDraw", {"components", "rate", "counts"}, where);
  FrbDraw draw;
  const json& comps = detail::require(j, "components", where);
  if (!comps.is_array()) throw ParseError("expected an array", where + "components");
  for (std::size_t i = 0; i < comps.size(); ++i)
    draw.components.push_back(
        frb_component_from_json(comps[i], where + "components/" + std::to_string(i)));
  draw.rate = detail::vec_from_json(detail::require(j, "rate", where), where + "rate");
  draw.counts = detail::vec_from_json(detail::require(j, "counts", where), where + "counts");
  return draw;
}

inline std::string write_decode1d_result(const Decode1DResult& result,
                                         const std::string& manifest_hash = {}) {
  json body{{"count", result.count},
            {"raw_mass", result.raw_mass},
            {"onsets", detail::vec_to_json(result.onsets)},
            {"values", detail::mat_to_json(result.values)},
            {"natural", detail::mat_to_json(result.natural)},
            {"num_channels", result.values.cols()},
            {"shortfall", result.shortfall},
            {"edge_proximal", result.edge_proximal},
            {"residual", result.residual},
            {"gram_condition", detail::number_or_null(result.gram_condition)},
            {"fallback_used", result.fallback_used}};
  return dump_document(make_document("Decode1DResult", std::move(body), manifest_hash));
}

inline Decode1DResult read_decode1d_result(const std::string& text,
                                           const std::string& where = "/") {
  const json j = open_document(text, "Decode1DResult",
                               {"count", "raw_mass", "onsets", "values", "natural",
                                "num_channels", "shortfall", "edge_proximal", "residual",
                                "gram_condition", "fallback_used"},
                               where);
  Decode1DResult result;
  result.count = static_cast<int>(detail::get_int(j, "count", where));
  result.raw_mass = detail::get_finite(j, "raw_mass", where);
  result.onsets = detail::vec_from_json(detail::require(j, "onsets", where), where + "onsets");
  const auto cols = static_cast<Eigen::Index>(detail::get_int(j, "num_channels", where));
  result.values =
      detail::mat_from_json(detail::require(j, "values", where), cols, where + "values");
  result.natural =
      detail::mat_from_json(detail::require(j, "natural", where), cols, where + "natural");
  result.shortfall = detail::get_bool(j, "shortfall", where);
  result.edge_proximal = detail::get_bool(j, "edge_proximal", where);
  result.residual = detail::get_double(j, "residual", where);
  result.gram_condition = detail::number_or_inf(j, "gram_condition", where);
  result.fallback_used = detail::get_bool(j, "fallback_used", where);
  return result;
}

// --- Benchmark report

inline const char* envelope_mode_name(EnvelopeMode mode) {
  return mode == EnvelopeMode::InteriorOne ? "interior_one" : "literal_rising";
}

inline EnvelopeMode envelope_mode_from_name(const std::string& name, const std::string& path) {
  if (name == "interior_one") return EnvelopeMode::InteriorOne;
  if (name == "literal_rising") return EnvelopeMode::LiteralRising;
  throw ParseError("unknown envelope mode '" + name + "'", path);
}

inline json to_json(const BenchConfig& cfg) {
  return {{"instances", cfg.instances},
          {"lengthscale", cfg.lengthscale},
          {"amplitude", cfg.amplitude},
          {"num_features", cfg.num_features},
          {"envelope_margin", cfg.envelope_margin},
          {"envelope_mode", envelope_mode_name(cfg.envelope_mode)},
          {"grid_n", cfg.grid_n},
          {"threshold_rel", cfg.threshold_rel},
          {"min_distance", cfg.min_distance},
          {"max_peaks", cfg.max_peaks},
          {"epsilon", cfg.epsilon},
          {"encode_sigma", cfg.encode_sigma},
          {"sample_count", cfg.sample_count},
          {"subsample", cfg.subsample},
          {"seed", cfg.seed},
          {"oracle", cfg.oracle},
          {"decode", to_json(cfg.decode)}};
}

inline BenchConfig bench_config_from_json(const json& j, const std::string& path) {
  detail::check_keys(j,
                     {"instances", "lengthscale", "amplitude", "num_features",
                      "envelope_margin", "envelope_mode", "grid_n", "threshold_rel",
                      "min_distance", "max_peaks", "epsilon", "encode_sigma", "sample_count",
                      "subsample", "seed", "oracle", "decode"},
                     path);
  BenchConfig cfg;
  cfg.instances = static_cast<int>(detail::get_int(j, "instances", path));
  cfg.lengthscale = detail::get_finite(j, "lengthscale", path);
  cfg.amplitude = detail::get_finite(j, "amplitude", path);
  cfg.num_features = static_cast<int>(detail::get_int(j, "num_features", path));
  cfg.envelope_margin = detail::get_finite(j, "envelope_margin", path);
  cfg.envelope_mode = envelope_mode_from_name(
      detail::get_string(j, "envelope_mode", path), path + "/envelope_mode");
  cfg.grid_n = static_cast<int>(detail::get_int(j, "grid_n", path));
  cfg.threshold_rel = detail::get_finite(j, "threshold_rel", path);
  cfg.min_distance = static_cast<int>(detail::get_int(j, "min_distance", path));
  cfg.max_peaks = static_cast<int>(detail::get_int(j, "max_peaks", path));
  cfg.epsilon = detail::get_finite(j, "epsilon", path);
  cfg.encode_sigma = detail::get_finite(j, "encode_sigma", path);
  cfg.sample_count = static_cast<int>(detail::get_int(j, "sample_count", path));
  cfg.subsample = static_cast<int>(detail::get_int(j, "subsample", path));
  cfg.seed = detail::get_uint64(j, "seed", path);
  cfg.oracle = detail::get_bool(j, "oracle", path);
  cfg.decode = decode_options_from_json(detail::require(j, "decode", path), path + "/decode");
  return cfg;
}

inline std::string write_bench_report(const BenchReport& report,
                                      const std::string& manifest_hash = {}) {
  json rows = json::array();
  for (const auto& row : report.rows)
    rows.push_back({{"seed", row.seed},
                    {"n_true", row.n_true},
                    {"n_pred", row.n_pred},
                    {"correct", row.correct},
                    {"max_pair_dist", row.max_pair_dist},
                    {"decode_ms", row.decode_ms}});
  json body{{"config", to_json(report.config)},
            {"rows", std::move(rows)},
            {"accuracy", report.accuracy},
            {"mean_decode_ms", report.mean_decode_ms}};
  return dump_document(make_document("BenchReport", std::move(body), manifest_hash));
}

inline BenchReport read_bench_report(const std::string& text, const std::string& where = "/") {
  const json j =
      open_document(text, "BenchReport", {"config", "rows", "accuracy", "mean_decode_ms"}, where);
  BenchReport report;
  report.config = bench_config_from_json(detail::require(j, "config", where), where + "config");
  const json& rows = detail::require(j, "rows", where);
  if (!rows.is_array()) throw ParseError("expected an array", where + "rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string row_path = where + "rows/" + std::to_string(i);
    detail::check_keys(rows[i],
                       {"seed", "n_true", "n_pred", "correct", "max_pair_dist", "decode_ms"},
                       row_path);
    BenchRow row;
    row.seed = detail::get_uint64(rows[i], "seed", row_path);
    row.n_true = static_cast<int>(detail::get_int(rows[i], "n_true", row_path));
    row.n_pred = static_cast<int>(detail::get_int(rows[i], "n_pred", row_path));
    row.correct = detail::get_bool(rows[i], "correct", row_path);
    row.max_pair_dist = detail::get_double(rows[i], "max_pair_dist", row_path);
    row.decode_ms = detail::get_double(rows[i], "decode_ms", row_path);
    report.rows.push_back(row);
  }
  report.accuracy = detail::get_finite(j, "accuracy", where);
  report.mean_decode_ms = detail::get_finite(j, "mean_decode_ms", where);
  return report;
}

// --- RunManifest

inline std::string write_manifest(const RunManifest& manifest) {
  json hashes = json::object();
  for (const auto& [path, hash] : manifest.input_hashes) hashes[path] = hash;
  json body{{"tool_version", manifest.tool_version},
            {"command", manifest.command},
            {"params", manifest.params},
            {"seed", manifest.seed},
            {"input_hashes", std::move(hashes)}};
  return dump_document(make_document("RunManifest", std::move(body)));
}

inline RunManifest read_manifest(const std::string& text, const std::string& where = "/") {
  const json j = open_document(
      text, "RunManifest", {"tool_version", "command", "params", "seed", "input_hashes"}, where);
  RunManifest manifest;
  manifest.tool_version = detail::get_string(j, "tool_version", where);
  manifest.command = detail::get_string(j, "command", where);
  manifest.params = detail::require(j, "params", where);
  manifest.seed = detail::get_uint64(j, "seed", where);
  const json& hashes = detail::require(j, "input_hashes", where);
  if (!hashes.is_object()) throw ParseError("expected an object", where + "input_hashes");
  for (const auto& item : hashes.items()) {
    if (!item.value().is_string())
      throw ParseError("expected a string", where + "input_hashes/" + item.key());
    manifest.input_hashes[item.key()] = item.value().get<std::string>();
  }
  return manifest;
}

// The identity of a run: hash of its canonical manifest document.
inline std::string manifest_hash(const RunManifest& manifest) {
  return hash_hex(fnv1a64(write_manifest(manifest)));
}

// ----------------------------------------------------------------------------
// CSV (lossy-layout convenience; JSON is canonical)
// ----------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::string> position_headers(int dim) {
  static const char* named[] = {"x", "y", "z"};
  std::vector<std::string> cols;
  if (dim <= 3)
    for (int i = 0; i < dim; ++i) cols.push_back(named[i]);
  else
    for (int i = 0; i < dim; ++i) cols.push_back("x" + std::to_string(i));
  return cols;
}

// Lines of a CSV body, comments and blanks stripped; first survivor is the
// header. Line numbers are preserved for error messages.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // line number, cells
};

inline CsvTable parse_csv(const std::string& text, const std::string& where) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      table.rows.emplace_back(line_no, std::move(cells));
    }
  }
  if (!have_header) throw ParseError("missing header row", where);
  return table;
}

inline void expect_header(const CsvTable& table, const std::vector<std::string>& expected,
                          const std::string& where) {
  if (table.header != expected) {
    std::string want;
    for (size_t i = 0; i < expected.size(); ++i)
      want += (i ? "," : "") + expected[i];
    throw ParseError("unexpected header, want '" + want + "'", where + ":line 1");
  }
}

}  // namespace detail

// Columns: x[,y,z] (or x0..), then f0..f{d_x-1}.
inline std::string write_csv_object_set(const ObjectSet& set,
                                        const std::string& manifest_hash = {}) {
  std::ostringstream out;
  if (!manifest_hash.empty()) out << "# manifest=" << manifest_hash << "\n";
  auto cols = detail::position_headers(static_cast<int>(set.positions.cols()));
  for (Eigen::Index f = 0; f < set.features.cols(); ++f)
    cols.push_back("f" + std::to_string(f));
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (Eigen::Index r = 0; r < set.positions.rows(); ++r) {
    for (Eigen::Index c = 0; c < set.positions.cols(); ++c)
      out << (c ? "," : "") << format_double(set.positions(r, c));
    for (Eigen::Index f = 0; f < set.features.cols(); ++f)
      out << "," << format_double(set.features(r, f));
    out << "\n";
  }
  return out.str();
}

inline ObjectSet read_csv_object_set(const std::string& text, const std::string& where) {
  const auto table = detail::parse_csv(text, where);
  int dim = 0;
  for (const auto& h : table.header) {
    const bool positional = (dim < 3 && h == detail::position_headers(3)[dim]) ||
                            h == "x" + std::to_string(dim);
    if (positional)
      ++dim;
    else
      break;
  }
  if (dim == 0) throw ParseError("no position columns found in header", where + ":line 1");
  const int fdim = static_cast<int>(table.header.size()) - dim;
  for (int f = 0; f < fdim; ++f)
    if (table.header[dim + f] != "f" + std::to_string(f))
      throw ParseError("unexpected feature column '" + table.header[dim + f] + "'",
                       where + ":line 1");
  ObjectSet set;
  set.positions.resize(static_cast<Eigen::Index>(table.rows.size()), dim);
  set.features.resize(static_cast<Eigen::Index>(table.rows.size()), fdim);
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& [line_no, cells] = table.rows[r];
    const std::string row_where = where + ":line " + std::to_string(line_no);
    if (static_cast<int>(cells.size()) != dim + fdim)
      throw ParseError("expected " + std::to_string(dim + fdim) + " columns, found " +
                           std::to_string(cells.size()),
                       row_where);
    for (int c = 0; c < dim; ++c)
      set.positions(static_cast<Eigen::Index>(r), c) = parse_double(cells[c], row_where);
    for (int f = 0; f < fdim; ++f)
      set.features(static_cast<Eigen::Index>(r), f) = parse_double(cells[dim + f], row_where);
  }
  validate(set);
  return set;
}

// Columns: positions, density, weight, then features. Scheme and proposal
// metadata do not survive the CSV layout.
inline std::string write_csv_samples(const FieldSamples& samples,
                                     const std::string& manifest_hash = {}) {
  std::ostringstream out;
  if (!manifest_hash.empty()) out << "# manifest=" << manifest_hash << "\n";
  auto cols = detail::position_headers(static_cast<int>(samples.points.cols()));
  cols.push_back("density");
  cols.push_back("weight");
  for (Eigen::Index f = 0; f < samples.features.cols(); ++f)
    cols.push_back("f" + std::to_string(f));
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (Eigen::Index r = 0; r < samples.points.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.points.cols(); ++c)
      out << (c ? "," : "") << format_double(samples.points(r, c));
    out << "," << format_double(samples.density[r]);
    out << "," << format_double(samples.weights[r]);
    for (Eigen::Index f = 0; f < samples.features.cols(); ++f)
      out << "," << format_double(samples.features(r, f));
    out << "\n";
  }
  return out.str();
}

// Inverse of write_csv_samples. The CSV layout does not carry scheme or
// proposal metadata; samples read back under the Importance label (the
// weaker contract, no equal-weight claim).
inline FieldSamples read_csv_samples(const std::string& text, const std::string& where) {
  const auto table = detail::parse_csv(text, where);
  int dim = 0;
  for (const auto& h : table.header) {
    const bool positional = (dim < 3 && h == detail::position_headers(3)[dim]) ||
                            h == "x" + std::to_string(dim);
    if (positional)
      ++dim;
    else
      break;
  }
  if (dim == 0) throw ParseError("no position columns found in header", where + ":line 1");
  const int rest = static_cast<int>(table.header.size()) - dim;
  if (rest < 2 || table.header[dim] != "density" || table.header[dim + 1] != "weight")
    throw ParseError("expected 'density,weight' after position columns", where + ":line 1");
  const int fdim = rest - 2;
  for (int f = 0; f < fdim; ++f)
    if (table.header[dim + 2 + f] != "f" + std::to_string(f))
      throw ParseError("unexpected feature column '" + table.header[dim + 2 + f] + "'",
                       where + ":line 1");
  FieldSamples samples;
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  samples.points.resize(m, dim);
  samples.density.resize(m);
  samples.features.resize(m, fdim);
  samples.weights.resize(m);
  samples.scheme = SampleScheme::Importance;
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& [line_no, cells] = table.rows[r];
    const std::string row_where = where + ":line " + std::to_string(line_no);
    if (static_cast<int>(cells.size()) != dim + 2 + fdim)
      throw ParseError("expected " + std::to_string(dim + 2 + fdim) + " columns, found " +
                           std::to_string(cells.size()),
                       row_where);
    const auto i = static_cast<Eigen::Index>(r);
    for (int c = 0; c < dim; ++c) samples.points(i, c) = parse_double(cells[c], row_where);
    samples.density[i] = parse_double(cells[dim], row_where);
    samples.weights[i] = parse_double(cells[dim + 1], row_where);
    for (int f = 0; f < fdim; ++f)
      samples.features(i, f) = parse_double(cells[dim + 2 + f], row_where);
    if (samples.density[i] < 0.0) throw ParseError("density must be >= 0", row_where);
    if (!(samples.weights[i] > 0.0)) throw ParseError("weights must be > 0", row_where);
  }
  try {
    validate(samples);
  } catch (const Error& e) {
    throw ParseError(e.what(), where);
  }
  return samples;
}

// Per-iteration optimizer trace.
inline std::string write_csv_trace(const std::vector<LbfgsTraceRow>& trace,
                                   const std::string& manifest_hash = {}) {
  std::ostringstream out;
  if (!manifest_hash.empty()) out << "# manifest=" << manifest_hash << "\n";
  out << "iteration,value,grad_norm\n";
  for (const auto& row : trace)
    out << row.iteration << "," << format_double(row.value) << ","
        << format_double(row.grad_norm) << "\n";
  return out.str();
}

inline std::string write_csv_bench(const BenchReport& report,
                                   const std::string& manifest_hash = {}) {
  std::ostringstream out;
  if (!manifest_hash.empty()) out << "# manifest=" << manifest_hash << "\n";
  out << "# config=" << to_json(report.config).dump() << "\n";
  out << "seed,n_true,n_pred,correct,max_pair_dist,decode_ms\n";
  for (const auto& row : report.rows)
    out << row.seed << "," << row.n_true << "," << row.n_pred << "," << (row.correct ? 1 : 0)
        << "," << format_double(row.max_pair_dist) << "," << format_double(row.decode_ms)
        << "\n";
  return out.str();
}

inline std::vector<BenchRow> read_csv_bench(const std::string& text, const std::string& where) {
  const auto table = detail::parse_csv(text, where);
  detail::expect_header(table, {"seed", "n_true", "n_pred", "correct", "max_pair_dist",
                                "decode_ms"},
                        where);
  std::vector<BenchRow> rows;
  for (const auto& [line_no, cells] : table.rows) {
    const std::string row_where = where + ":line " + std::to_string(line_no);
    if (cells.size() != 6)
      throw ParseError("expected 6 columns, found " + std::to_string(cells.size()), row_where);
    BenchRow row;
    row.seed = parse_uint64(cells[0], row_where);
    row.n_true = static_cast<int>(parse_int(cells[1], row_where));
    row.n_pred = static_cast<int>(parse_int(cells[2], row_where));
    row.correct = parse_int(cells[3], row_where) != 0;
    row.max_pair_dist = parse_double(cells[4], row_where);
    row.decode_ms = parse_double(cells[5], row_where);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace io
}  // namespace cords
