#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "cords/error.hpp"
#include "cords/kernels.hpp"

namespace cords {

// Axis-aligned box, lo < hi per axis.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }

  double volume() const {
    double v = 1.0;
    for (Eigen::Index i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
    return v;
  }

  bool contains(const Eigen::VectorXd& p) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
};

inline void validate(const Box& box) {
  if (box.lo.size() != box.hi.size() || box.lo.size() == 0)
    throw InvalidArgument("Box: lo/hi must be non-empty and of equal dimension");
  for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
    if (!std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]) || !(box.lo[i] < box.hi[i]))
      throw InvalidArgument("Box: requires finite lo < hi per axis");
  }
}

// A finite set of located, featured objects: N positions in R^d with
// d_x >= 0 feature channels per object. N = 0 and d_x = 0 are both valid.
struct ObjectSet {
  Eigen::MatrixXd positions;  // N x d
  Eigen::MatrixXd features;   // N x d_x

  int size() const { return static_cast<int>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

inline void validate(const ObjectSet& set) {
  if (set.features.rows() != set.positions.rows())
    throw InvalidArgument("ObjectSet: positions and features must have equal row counts");
  if (set.positions.rows() > 0 && set.positions.cols() < 1)
    throw InvalidArgument("ObjectSet: position dimension must be >= 1");
  if (!set.positions.allFinite() || !set.features.allFinite())
    throw InvalidArgument("ObjectSet: positions and features must be finite");
}

// Smallest pairwise center distance; +inf for N < 2. Encoding stays
// well defined for coincident centers, but callers are expected to warn
// below 1e-9 * sigma (the CLI does).
inline double min_separation(const ObjectSet& set) {
  const int n = set.size();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      best = std::min(best, (set.positions.row(i) - set.positions.row(j)).norm());
  return best;
}

enum class SampleScheme { Uniform, Importance };

// Provenance of an importance-sampled batch, carried for diagnostics and
// manifests; not needed to decode.
struct ProposalMeta {
  double proposal_sigma = 0.0;
  double temperature = 1.0;
  double importance_fraction = 1.0;
  std::optional<Box> box;
};

// A field observed at M points: density channel rho, d_x feature channels h,
// and quadrature weights such that sum_s f(r_s) w_s estimates int f.
struct FieldSamples {
  Eigen::MatrixXd points;    // M x d
  Eigen::VectorXd density;   // M, >= 0
  Eigen::MatrixXd features;  // M x d_x
  Eigen::VectorXd weights;   // M, > 0
  SampleScheme scheme = SampleScheme::Uniform;
  std::optional<ProposalMeta> proposal_meta;

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

inline void validate(const FieldSamples& samples) {
  const auto m = samples.points.rows();
  if (samples.density.size() != m || samples.weights.size() != m ||
      samples.features.rows() != m)
    throw InvalidField("FieldSamples: channel row counts must match points");
  if (m > 0 && samples.points.cols() < 1)
    throw InvalidField("FieldSamples: point dimension must be >= 1");
  if (!samples.points.allFinite() || !samples.density.allFinite() ||
      !samples.features.allFinite() || !samples.weights.allFinite())
    throw InvalidField("FieldSamples: all channels must be finite");
  if ((samples.density.array() < 0.0).any())
    throw InvalidField("FieldSamples: density must be >= 0");
  if ((samples.weights.array() <= 0.0).any())
    throw InvalidField("FieldSamples: weights must be > 0");
}

// Sampling configuration for encode_field. `box` is required for any uniform
// component unless the encoder can derive one (object bounds + 5 sigma pad).
struct SamplerConfig {
  SampleScheme scheme = SampleScheme::Importance;
  int count = 4096;                          // M
  std::optional<double> proposal_sigma;      // defaults to the encoding sigma
  double temperature = 1.0;
  double importance_fraction = 1.0;          // p; p < 1 mixes in uniform draws
  std::optional<Box> box;
  std::uint64_t seed = 0;
  // Reproduces the legacy w = 1/S convention (importance: w = 1/(S * q~) with
  // q~ the unnormalized mixture). Ratio-based recoveries are unaffected;
  // absolute mass calibration is lost. Off by default.
  bool legacy_unit_weights = false;
};

inline void validate(const SamplerConfig& cfg) {
  if (cfg.count < 1) throw InvalidArgument("SamplerConfig: count must be >= 1");
  if (cfg.proposal_sigma && !(*cfg.proposal_sigma > 0.0))
    throw InvalidArgument("SamplerConfig: proposal_sigma must be > 0");
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
    throw InvalidArgument("SamplerConfig: temperature must be finite and > 0");
  if (!(cfg.importance_fraction >= 0.0) || !(cfg.importance_fraction <= 1.0))
    throw InvalidArgument("SamplerConfig: importance_fraction must lie in [0, 1]");
  if (cfg.box) validate(*cfg.box);
}

}  // namespace cords
