#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/kernels.hpp"
#include "cords/rng.hpp"

namespace cords {

// ============================================================================
// Monte Carlo sampling of fields
// ============================================================================
//
// Two schemes:
//   Uniform     i.i.d. points in a finite box, exact-unbiased weights
//               w = Vol(box) / M.
//   Importance  points from a normalized kernel mixture centered on the
//               objects, weights w = 1 / (M q). The proposal kernel is always
//               a normalized Gaussian of bandwidth proposal_sigma so that
//               q > 0 everywhere any supported encoding kernel is positive.
// A mixed scheme (importance_fraction p < 1) draws round(p * M) points from
// the mixture and the rest uniformly; q is the correspondingly mixed density
// with the realized fractions, which keeps the weights exact-unbiased.

// Object bounds padded by `pad` on every axis.
inline Box padded_box(const ObjectSet& set, double pad) {
  if (set.size() == 0)
    throw InvalidArgument("padded_box: cannot derive bounds from an empty set");
  Box box;
  box.lo = set.positions.colwise().minCoeff().transpose().array() - pad;
  box.hi = set.positions.colwise().maxCoeff().transpose().array() + pad;
  return box;
}

// Proposal mixture weights under temperature sharpening: pi_i is
// proportional to rho(c_i)^(temperature - 1), computed in log space.
// temperature = 1 gives the uniform center choice.
inline Eigen::VectorXd proposal_mixture_weights(const ObjectSet& set,
                                                const KernelSpec& spec,
                                                double temperature) {
  const int n = set.size();
  if (n == 0) throw EmptyProposal("proposal weights of an empty set");
  if (temperature == 1.0) return Eigen::VectorXd::Constant(n, 1.0 / n);
  const Eigen::VectorXd rho =
      detail::kernel_matrix(spec, set.positions, set.positions).rowwise().sum();
  Eigen::ArrayXd logits = (temperature - 1.0) * rho.array().log();
  logits -= logits.maxCoeff();
  Eigen::VectorXd pi = logits.exp().matrix();
  return pi / pi.sum();
}

// Normalized proposal mixture density at each row of `points`.
inline Eigen::VectorXd proposal_density(const Eigen::MatrixXd& points,
                                        const ObjectSet& set, double proposal_sigma,
                                        const Eigen::VectorXd& pi) {
  KernelSpec prop{KernelFamily::Gaussian, proposal_sigma,
                  static_cast<int>(points.cols()), true};
  return detail::kernel_matrix(prop, points, set.positions) * pi;
}

struct DrawResult {
  Eigen::MatrixXd points;   // M x d
  Eigen::VectorXd weights;  // M
  std::optional<ProposalMeta> meta;
};

// Uniform draw. Stream use: points consume d uniforms each, row-major.
inline DrawResult sample_uniform(const Box& box, int count, std::uint64_t seed) {
  validate(box);
  if (count < 1) throw InvalidArgument("sample_uniform: count must be >= 1");
  const int d = box.dim();
  Rng rng = Rng(seed).stream(0);
  DrawResult out;
  out.points.resize(count, d);
  for (int s = 0; s < count; ++s)
    for (int a = 0; a < d; ++a) out.points(s, a) = rng.uniform(box.lo[a], box.hi[a]);
  out.weights = Eigen::VectorXd::Constant(count, box.volume() / count);
  return out;
}

// Importance (and mixed) draw around the objects of `set`.
// Stream use: 0 = uniform component points, 1 = center picks, 2 = offsets.
inline DrawResult sample_importance(const ObjectSet& set, const KernelSpec& spec,
                                    const SamplerConfig& cfg) {
  validate(set);
  validate(cfg);
  validate(spec);
  if (set.size() == 0)
    throw EmptyProposal("sample_importance: empty object set has no proposal");
  if (set.dim() != spec.dim)
    throw InvalidArgument("sample_importance: set dimension does not match spec");

  const int m = cfg.count;
  const int d = set.dim();
  const double sigma_p = cfg.proposal_sigma.value_or(spec.sigma);
  const int m_imp = static_cast<int>(std::llround(cfg.importance_fraction * m));
  const int m_uni = m - m_imp;
  const double p_eff = static_cast<double>(m_imp) / m;

  std::optional<Box> box = cfg.box;
  if (m_uni > 0 && !box) box = padded_box(set, 5.0 * std::max(spec.sigma, sigma_p));

  const Eigen::VectorXd pi = proposal_mixture_weights(set, spec, cfg.temperature);
  Eigen::VectorXd cdf(pi.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pi.size(); ++i) cdf[i] = (acc += pi[i]);

  Rng base(cfg.seed);
  Rng uni = base.stream(0);
  Rng centers = base.stream(1);
  Rng offsets = base.stream(2);

  DrawResult out;
  out.points.resize(m, d);
  for (int s = 0; s < m_imp; ++s) {
    const double u = centers.next_double();
    Eigen::Index i = std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u) - cdf.data();
    if (i >= pi.size()) i = pi.size() - 1;
    for (int a = 0; a < d; ++a)
      out.points(s, a) = set.positions(i, a) + sigma_p * offsets.normal();
  }
  for (int s = m_imp; s < m; ++s)
    for (int a = 0; a < d; ++a) out.points(s, a) = uni.uniform(box->lo[a], box->hi[a]);

  Eigen::VectorXd q = Eigen::VectorXd::Zero(m);
  if (m_imp > 0) q = p_eff * proposal_density(out.points, set, sigma_p, pi);
  if (m_uni > 0) {
    const double u_dens = (1.0 - p_eff) / box->volume();
    for (int s = 0; s < m; ++s)
      if (box->contains(out.points.row(s).transpose())) q[s] += u_dens;
  }

  if (cfg.legacy_unit_weights) {
    // Legacy convention: unnormalized mixture q~ = sum_i kappa_prop, w = 1/(M q~).
    // Defined for the pure importance path only.
    if (m_uni > 0)
      throw UnsupportedOperation("legacy_unit_weights is defined only for pure schemes");
    const Eigen::VectorXd q_raw =
        proposal_density(out.points, set, sigma_p,
                         Eigen::VectorXd::Ones(set.size()));
    out.weights = (q_raw.array() * m).inverse().matrix();
  } else {
    out.weights = (q.array() * m).inverse().matrix();
  }

  ProposalMeta meta;
  meta.proposal_sigma = sigma_p;
  meta.temperature = cfg.temperature;
  meta.importance_fraction = p_eff;
  meta.box = box;
  out.meta = meta;
  return out;
}

// Systematic resampling: R indices with selection probability proportional
// to `weights`, deterministic given the stream (one uniform for the offset).
// Equal weights with R <= M reduce to an even thinning without duplicates.
inline std::vector<int> systematic_resample(const Eigen::VectorXd& weights, int count,
                                            Rng& rng) {
  const auto m = weights.size();
  if (m == 0 || count < 1)
    throw InvalidArgument("systematic_resample: need weights and count >= 1");
  if ((weights.array() < 0.0).any())
    throw InvalidArgument("systematic_resample: weights must be >= 0");
  const double total = weights.sum();
  if (!(total > 0.0))
    throw InvalidArgument("systematic_resample: weights must not all be zero");
  std::vector<int> picks;
  picks.reserve(count);
  const double step = total / count;
  double position = rng.next_double() * step;
  double cum = weights[0];
  Eigen::Index i = 0;
  for (int k = 0; k < count; ++k) {
    while (cum < position && i + 1 < m) cum += weights[++i];
    picks.push_back(static_cast<int>(i));
    position += step;
  }
  return picks;
}

// First K of a seeded Fisher-Yates shuffle of [0, M); order preserved by index.
inline std::vector<int> subsample_indices(int m, int k, Rng& rng) {
  if (k < 0 || k > m) throw InvalidArgument("subsample_indices: need 0 <= k <= m");
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(m - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace cords
