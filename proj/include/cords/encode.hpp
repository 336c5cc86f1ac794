#pragma once

#include <Eigen/Core>
#include <numeric>
#include <vector>

#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/kernels.hpp"
#include "cords/sampling.hpp"

namespace cords {

// ============================================================================
// Set -> field encoding
// ============================================================================
//
//   rho(r) = (1/alpha) sum_i K(r; r_i)
//   h(r)   = (1/alpha) sum_i x_i K(r; r_i)
//
// alpha is the kernel mass, so int rho = N for every supported family and
// h/rho is a kernel-weighted average of the features. Objects are reduced in
// a canonical order (lexicographic over position, then feature rows), which
// makes the encoding exactly invariant to input permutation, bit for bit.

struct EncodedValues {
  Eigen::VectorXd density;   // S
  Eigen::MatrixXd features;  // S x d_x
};

namespace detail {

inline std::vector<int> canonical_order(const ObjectSet& set) {
  std::vector<int> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < set.dim(); ++c) {
      if (set.positions(a, c) != set.positions(b, c))
        return set.positions(a, c) < set.positions(b, c);
    }
    for (int c = 0; c < set.feature_dim(); ++c) {
      if (set.features(a, c) != set.features(b, c))
        return set.features(a, c) < set.features(b, c);
    }
    return false;
  });
  return order;
}

}  // namespace detail

// Density and feature channels of the encoded field at the given points.
inline EncodedValues encode_at(const ObjectSet& set, const KernelSpec& spec,
                               const Eigen::MatrixXd& points) {
  validate(set);
  validate(spec);
  if (points.cols() != spec.dim)
    throw InvalidArgument("encode_at: query dimension does not match spec");
  if (set.size() > 0 && set.dim() != spec.dim)
    throw InvalidArgument("encode_at: set dimension does not match spec");

  EncodedValues out;
  const auto s = points.rows();
  if (set.size() == 0) {
    out.density = Eigen::VectorXd::Zero(s);
    out.features = Eigen::MatrixXd::Zero(s, set.feature_dim());
    return out;
  }

  const std::vector<int> order = detail::canonical_order(set);
  Eigen::MatrixXd centers(set.size(), set.dim());
  Eigen::MatrixXd feats(set.size(), set.feature_dim());
  for (int i = 0; i < set.size(); ++i) {
    centers.row(i) = set.positions.row(order[i]);
    feats.row(i) = set.features.row(order[i]);
  }

  const Eigen::MatrixXd k = detail::kernel_matrix(spec, points, centers);
  const double inv_alpha = 1.0 / kernel_mass(spec);
  out.density = inv_alpha * k.rowwise().sum();
  out.features = inv_alpha * (k * feats);
  return out;
}

// Samples the encoded field under the configured scheme. Deterministic:
// a given (set, spec, config) always produces the identical FieldSamples.
inline FieldSamples encode_field(const ObjectSet& set, const KernelSpec& spec,
                                 const SamplerConfig& cfg) {
  validate(set);
  validate(spec);
  validate(cfg);

  DrawResult draw;
  if (cfg.scheme == SampleScheme::Uniform) {
    Box box = cfg.box ? *cfg.box : padded_box(set, 5.0 * spec.sigma);
    if (box.dim() != spec.dim)
      throw InvalidArgument("encode_field: box dimension does not match spec");
    draw = sample_uniform(box, cfg.count, cfg.seed);
    if (cfg.legacy_unit_weights)
      draw.weights = Eigen::VectorXd::Constant(cfg.count, 1.0 / cfg.count);
  } else {
    draw = sample_importance(set, spec, cfg);
  }

  const EncodedValues values = encode_at(set, spec, draw.points);
  FieldSamples samples;
  samples.points = std::move(draw.points);
  samples.density = values.density;
  samples.features = values.features;
  samples.weights = std::move(draw.weights);
  samples.scheme = cfg.scheme;
  samples.proposal_meta = std::move(draw.meta);
  return samples;
}

}  // namespace cords
