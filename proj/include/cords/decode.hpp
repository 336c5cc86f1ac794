#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/gmm.hpp"
#include "cords/kernels.hpp"
#include "cords/optimize.hpp"
#include "cords/sampling.hpp"

namespace cords {

// ============================================================================
// Field -> set decoding
// ============================================================================
//
// Three stages, composable or separate:
//   1. count      N-hat = round(sum_s rho_s w_s), half-up, clamped at 0.
//   2. positions  GMM (BIC-scanned around N-hat) on a density-weighted
//                 resample of the sample coordinates, refined by L-BFGS on
//                 the kernel-matching objective over all samples.
//   3. features   MC Gram system G-hat X = B-hat assembled with the same
//                 weights, Tikhonov-damped, X scaled by the kernel mass.
//
// Because G-hat and B-hat share samples and weights, feature recovery is
// exact for clean encoded fields up to the Tikhonov bias, independent of
// Monte Carlo noise. Decode cost is O(S N + N^3): the EM input is capped at
// gmm_max_points, every other stage is a single pass over the samples.

struct GmmParams {
  double tol = 1e-6;
  int max_iter = 200;
  bool pin_equal_weights = false;
};

struct DecodeOptions {
  std::optional<int> bic_delta;    // default: round(0.15 * n_hat)
  double bic_margin = 10.0;
  ObjectiveOptions objective;
  LbfgsConfig lbfgs;
  GmmParams gmm;
  int gmm_max_points = 2048;       // EM input cap; resample is seeded
  std::uint64_t seed = 0;          // decode stream: 0 = resample, 1 = selection
  int categorical_offset = 0;      // feature block decoded by argmax
  int categorical_size = 0;        // 0 = no categorical block
};

struct CountEstimate {
  double raw_mass = 0.0;
  int count = 0;
};

inline CountEstimate estimate_count(const FieldSamples& samples) {
  validate(samples);
  const double raw = samples.density.dot(samples.weights);
  return {raw, std::max(0, round_half_up(raw))};
}

struct PositionFit {
  Eigen::MatrixXd centers;          // K x d, K = selected component count
  ComponentSelection selection;
  RefineResult refine;
  bool low_separation = false;      // some pair of centers closer than 2 sigma
};

// GMM + L-BFGS position recovery for n_hat objects. The GMM sees a
// systematic resample of the coordinates with probability proportional to
// rho_s w_s (a no-op thinning for matched-proposal importance samples; the
// step that makes uniform-scheme fields decodable). L-BFGS runs on the full
// sample set.
inline PositionFit fit_positions(const FieldSamples& samples, const KernelSpec& spec,
                                 int n_hat, const DecodeOptions& opts = {}) {
  validate(samples);
  validate(spec);
  if (n_hat < 1) throw InvalidArgument("fit_positions: n_hat must be >= 1");
  const int m = samples.size();
  if (m < n_hat)
    throw InsufficientPoints("fit_positions: fewer samples than objects");
  if (samples.dim() != spec.dim)
    throw InvalidArgument("fit_positions: sample dimension does not match spec");

  const Eigen::VectorXd mass = samples.density.cwiseProduct(samples.weights);
  if (!(mass.sum() > 0.0))
    throw InvalidField("fit_positions: field carries no mass");

  const int r = std::min(m, std::max(opts.gmm_max_points, n_hat));
  Rng resample_rng = Rng(opts.seed).stream(0);
  const std::vector<int> idx = systematic_resample(mass, r, resample_rng);
  Eigen::MatrixXd gmm_points(r, samples.dim());
  for (int i = 0; i < r; ++i) gmm_points.row(i) = samples.points.row(idx[i]);

  PositionFit out;
  out.selection = select_components(
      gmm_points, n_hat, opts.bic_delta, Rng(opts.seed).stream(1).next_u64(),
      opts.bic_margin, opts.gmm.tol, opts.gmm.max_iter, opts.gmm.pin_equal_weights);

  const PositionObjective objective(samples.points, samples.density, spec,
                                    out.selection.chosen_k, opts.objective);
  out.refine = refine_centers(objective, out.selection.fit.means, opts.lbfgs);
  out.centers = out.refine.centers;

  double min_sep = std::numeric_limits<double>::infinity();
  for (int i = 0; i < out.centers.rows(); ++i)
    for (int j = i + 1; j < out.centers.rows(); ++j)
      min_sep = std::min(min_sep, (out.centers.row(i) - out.centers.row(j)).norm());
  out.low_separation = min_sep < 2.0 * spec.sigma;
  return out;
}

struct GramSystem {
  Eigen::MatrixXd gram;  // K x K
  Eigen::MatrixXd b;     // K x d_x
};

// Weighted assembly of the feature system at the given centers:
//   G-hat_uv = sum_s k_u(r_s) k_v(r_s) w_s,  B-hat_u = sum_s h(r_s) k_u(r_s) w_s.
// With MC weights this estimates the overlap integrals; with quadrature
// weights it converges to them deterministically.
inline GramSystem gram_system(const FieldSamples& samples, const KernelSpec& spec,
                              const Eigen::MatrixXd& centers) {
  validate(samples);
  validate(spec);
  if (centers.cols() != spec.dim)
    throw InvalidArgument("gram_system: center dimension does not match spec");
  const Eigen::MatrixXd kmat = detail::kernel_matrix(spec, samples.points, centers);
  const Eigen::MatrixXd kw = samples.weights.asDiagonal() * kmat;
  GramSystem sys;
  sys.gram = kmat.transpose() * kw;
  sys.b = kw.transpose() * samples.features;
  return sys;
}

// Closed-form expectation of the MC Gram: pairwise Gaussian overlaps.
inline Eigen::MatrixXd analytic_gram(const KernelSpec& spec, const Eigen::MatrixXd& centers) {
  validate(spec);
  if (centers.cols() != spec.dim)
    throw InvalidArgument("analytic_gram: center dimension does not match spec");
  const auto k = centers.rows();
  Eigen::MatrixXd g(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      g(i, j) = gaussian_overlap(spec, centers.row(i).transpose(), centers.row(j).transpose());
      g(j, i) = g(i, j);
    }
  return g;
}

struct FeatureRecovery {
  Eigen::MatrixXd features;       // K x d_x
  double gram_condition = 0.0;    // +inf when the raw Gram is singular
  bool fallback_used = false;
};

// Weighted MC Gram solve: X-hat = alpha (G-hat + eps I)^-1 B-hat with
// eps = 1e-4 * mean(diag G-hat), damping applied always. A rank-deficient
// Gram (condition > 1e12) falls back to the minimum-norm least-squares
// solution of the undamped system.
inline FeatureRecovery recover_features(const FieldSamples& samples,
                                        const KernelSpec& spec,
                                        const Eigen::MatrixXd& centers) {
  FeatureRecovery out;
  const auto k = centers.rows();
  if (k == 0) {
    validate(samples);
    out.features.resize(0, samples.feature_dim());
    return out;
  }

  const GramSystem sys = gram_system(samples, spec, centers);
  const Eigen::MatrixXd& gram = sys.gram;
  const Eigen::MatrixXd& b = sys.b;
  const double alpha = kernel_mass(spec);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lambda_min = eig.eigenvalues().minCoeff();
  const double lambda_max = eig.eigenvalues().maxCoeff();
  out.gram_condition = lambda_min > 0.0
                           ? lambda_max / lambda_min
                           : std::numeric_limits<double>::infinity();

  if (!(lambda_min > 0.0) || out.gram_condition > 1e12) {
    out.fallback_used = true;
    out.features =
        alpha * gram.completeOrthogonalDecomposition().solve(b).eval();
    return out;
  }

  const double eps = 1e-4 * gram.diagonal().mean();
  Eigen::MatrixXd damped = gram;
  damped.diagonal().array() += eps;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
  if (ldlt.info() != Eigen::Success) {
    out.fallback_used = true;
    out.features =
        alpha * gram.completeOrthogonalDecomposition().solve(b).eval();
    return out;
  }
  out.features = alpha * ldlt.solve(b);
  return out;
}

struct DecodeResult {
  int count = 0;
  double raw_mass = 0.0;
  Eigen::MatrixXd centers;    // count x d
  Eigen::MatrixXd features;   // count x d_x
  double amplitude = 1.0;
  double residual = 0.0;      // final objective value
  double gram_condition = 0.0;
  bool fallback_used = false;
  bool low_separation = false;
  std::optional<Eigen::VectorXi> categorical_labels;
  std::optional<GmmFit> gmm;  // selected mixture, for diagnostics
  std::vector<LbfgsTraceRow> trace;
};

// Full decode: count, positions, features, optional categorical argmax.
// When the BIC scan strongly overrides the mass count, the decoded set size
// follows the selected component count (raw_mass still reports the mass).
inline DecodeResult decode_set(const FieldSamples& samples, const KernelSpec& spec,
                               const DecodeOptions& opts = {}) {
  const CountEstimate est = estimate_count(samples);
  DecodeResult res;
  res.raw_mass = est.raw_mass;
  res.count = est.count;
  if (est.count == 0) {
    res.centers.resize(0, samples.dim());
    res.features.resize(0, samples.feature_dim());
    return res;
  }

  PositionFit fit = fit_positions(samples, spec, est.count, opts);
  res.count = static_cast<int>(fit.centers.rows());
  res.centers = fit.centers;
  res.amplitude = fit.refine.amplitude;
  res.residual = fit.refine.opt.value;
  res.low_separation = fit.low_separation;
  res.trace = fit.refine.opt.trace;
  res.gmm = fit.selection.fit;

  FeatureRecovery rec = recover_features(samples, spec, res.centers);
  res.features = std::move(rec.features);
  res.gram_condition = rec.gram_condition;
  res.fallback_used = rec.fallback_used;

  if (opts.categorical_size > 0) {
    if (opts.categorical_offset < 0 ||
        opts.categorical_offset + opts.categorical_size > res.features.cols())
      throw InvalidArgument("decode_set: categorical block exceeds feature width");
    Eigen::VectorXi labels(res.count);
    for (int i = 0; i < res.count; ++i) {
      int arg = 0;
      res.features.row(i)
          .segment(opts.categorical_offset, opts.categorical_size)
          .maxCoeff(&arg);
      labels[i] = arg;
    }
    res.categorical_labels = labels;
  }
  return res;
}

}  // namespace cords
