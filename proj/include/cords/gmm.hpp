#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cords/error.hpp"
#include "cords/kernels.hpp"
#include "cords/rng.hpp"

namespace cords {

// ============================================================================
// Isotropic shared-variance Gaussian mixtures
// ============================================================================
//
// Model: p(x) = sum_k pi_k N(x; mu_k, s I) with one shared scalar variance s.
// Fitting is plain EM from a k-means++ initialization. The shared variance is
// clamped from below at floor = max((1e-4 * data diameter)^2, 1e-30), where
// the diameter is the bounding-box diagonal. Model selection is by BIC with
// p = K d + K - 1 + 1 free parameters (means, weights, shared variance).

struct GmmFit {
  Eigen::MatrixXd means;            // K x d
  double shared_variance = 0.0;
  Eigen::VectorXd mixing_weights;   // K
  double log_likelihood = 0.0;
  double bic = 0.0;
  int iterations = 0;
  std::vector<double> ll_trace;     // log-likelihood per EM iteration
  double variance_floor = 0.0;
  bool collapsed = false;           // variance at floor with a negligible weight
  bool restarted = false;           // an empty component was re-seeded
  bool monotone = true;             // trace non-decreasing since last restart

  int components() const { return static_cast<int>(means.rows()); }
};

namespace detail {

inline double bbox_diameter(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) return 0.0;
  return (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
}

// Row-wise log(sum(exp(.))) of a log-probability matrix.
inline Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& logp) {
  const Eigen::VectorXd rowmax = logp.rowwise().maxCoeff();
  return rowmax.array() +
         (logp.colwise() - rowmax).array().exp().rowwise().sum().log();
}

}  // namespace detail

// k-means++ D^2 seeding; returns K distinct rows of `points` as means.
// Stream use: one index draw for the first seed, one uniform per later seed.
inline Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& points, int k,
                                     std::uint64_t seed) {
  const int m = static_cast<int>(points.rows());
  if (k < 1) throw InvalidArgument("kmeanspp_init: k must be >= 1");
  if (m < k) throw InsufficientPoints("kmeanspp_init: fewer points than seeds");
  if (!points.allFinite()) throw InvalidArgument("kmeanspp_init: points must be finite");

  Rng rng = Rng(seed).stream(0);
  std::vector<int> chosen;
  chosen.reserve(k);
  std::vector<char> is_chosen(m, 0);

  const int first = static_cast<int>(rng.uniform_index(m));
  chosen.push_back(first);
  is_chosen[first] = 1;
  Eigen::VectorXd d2 =
      (points.rowwise() - points.row(first)).rowwise().squaredNorm();

  while (static_cast<int>(chosen.size()) < k) {
    const double total = d2.sum();
    int pick = -1;
    if (total > 0.0) {
      const double u = rng.next_double() * total;
      double cum = 0.0;
      for (int i = 0; i < m; ++i) {
        cum += d2[i];
        if (cum > u) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // numerical tail: take the last positive-mass index
        for (int i = m - 1; i >= 0; --i)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      // All remaining points coincide with chosen seeds; pick uniformly
      // among the unchosen to keep the seeds distinct rows.
      int remaining = m - static_cast<int>(chosen.size());
      auto j = rng.uniform_index(remaining);
      for (int i = 0; i < m; ++i) {
        if (is_chosen[i]) continue;
        if (j == 0) {
          pick = i;
          break;
        }
        --j;
      }
    }
    chosen.push_back(pick);
    is_chosen[pick] = 1;
    d2 = d2.cwiseMin(
        (points.rowwise() - points.row(pick)).rowwise().squaredNorm());
  }

  Eigen::MatrixXd means(k, points.cols());
  for (int i = 0; i < k; ++i) means.row(i) = points.row(chosen[i]);
  return means;
}

// Hard-assignment Lloyd iterations on the seeded means, to assignment
// fixpoint or the cap. A cluster that empties keeps its previous mean.
// Running k-means after the D^2 seeding is the standard k-means++ pipeline
// and sharply cuts the rate of EM local optima downstream.
inline Eigen::MatrixXd lloyd_refine(const Eigen::MatrixXd& points, Eigen::MatrixXd means,
                                    int max_iter = 25) {
  const int m = static_cast<int>(points.rows());
  const int k = static_cast<int>(means.rows());
  std::vector<int> assign(m, -1);
  Eigen::VectorXd counts(k);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd d2 = detail::squared_distances(points, means);
    bool changed = false;
    for (int i = 0; i < m; ++i) {
      int arg = 0;
      d2.row(i).minCoeff(&arg);
      if (arg != assign[i]) {
        assign[i] = arg;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    counts.setZero();
    for (int i = 0; i < m; ++i) {
      sums.row(assign[i]) += points.row(i);
      counts[assign[i]] += 1.0;
    }
    for (int j = 0; j < k; ++j)
      if (counts[j] > 0.0) means.row(j) = sums.row(j) / counts[j];
  }
  return means;
}

// EM fit with K components. The log-likelihood trace is recorded per
// iteration and is non-decreasing (up to a 1e-9 relative slack) except
// across an empty-component restart, of which at most one is attempted.
// init_means, when given, replaces the k-means++ seeding (the seed is then
// unused); rows must equal k.
inline GmmFit fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                      double tol = 1e-6, int max_iter = 200,
                      bool pin_equal_weights = false,
                      const std::optional<Eigen::MatrixXd>& init_means = {}) {
  const int m = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (k < 1) throw InvalidArgument("fit_gmm: k must be >= 1");
  if (m < k) throw InsufficientPoints("fit_gmm: fewer points than components");
  if (d < 1) throw InvalidArgument("fit_gmm: dimension must be >= 1");
  if (!(tol > 0.0) || max_iter < 1)
    throw InvalidArgument("fit_gmm: tol must be > 0 and max_iter >= 1");
  if (init_means && (init_means->rows() != k || init_means->cols() != d))
    throw InvalidArgument("fit_gmm: init_means shape must be k x d");

  GmmFit fit;
  fit.variance_floor = std::max(std::pow(1e-4 * detail::bbox_diameter(points), 2), 1e-30);
  fit.means = lloyd_refine(points, init_means ? *init_means
                                              : kmeanspp_init(points, k, seed));
  fit.mixing_weights = Eigen::VectorXd::Constant(k, 1.0 / k);

  Eigen::MatrixXd d2 = detail::squared_distances(points, fit.means);
  fit.shared_variance =
      std::max(d2.rowwise().minCoeff().mean() / d, fit.variance_floor);

  const double log2pi = std::log(2.0 * M_PI);
  const auto log_joint = [&](Eigen::MatrixXd& logp) {
    const double s = fit.shared_variance;
    logp = (-0.5 / s) * d2;
    logp.array().rowwise() +=
        (fit.mixing_weights.array().max(1e-300).log() -
         0.5 * d * (log2pi + std::log(s)))
            .transpose();
  };

  double prev_ll = -std::numeric_limits<double>::infinity();
  const auto record = [&](double ll) {
    fit.ll_trace.push_back(ll);
    fit.log_likelihood = ll;
    if (std::isfinite(prev_ll) && ll < prev_ll - 1e-9 * (1.0 + std::abs(prev_ll)))
      fit.monotone = false;
  };

  Eigen::MatrixXd logp;
  bool converged = false;
  for (int iter = 0; iter < max_iter && !converged; ++iter) {
    // E-step: likelihood of the current parameters, then responsibilities.
    log_joint(logp);
    const Eigen::VectorXd lse = detail::row_logsumexp(logp);
    const double ll = lse.sum();
    record(ll);
    fit.iterations = iter + 1;
    converged = std::isfinite(prev_ll) &&
                std::abs(ll - prev_ll) / std::max(1.0, std::abs(prev_ll)) < tol;
    prev_ll = ll;
    if (converged) break;

    Eigen::MatrixXd resp = (logp.colwise() - lse).array().exp();
    Eigen::VectorXd nk = resp.colwise().sum();

    // Empty-component restart: re-seed at the worst-fit point, once.
    // Monotonicity tracking restarts with it.
    if (nk.minCoeff() < 1e-12 && !fit.restarted) {
      int dead;
      nk.minCoeff(&dead);
      int worst;
      lse.minCoeff(&worst);
      fit.means.row(dead) = points.row(worst);
      fit.mixing_weights[dead] = 1.0 / m;
      fit.mixing_weights /= fit.mixing_weights.sum();
      fit.restarted = true;
      fit.monotone = true;
      prev_ll = -std::numeric_limits<double>::infinity();
      d2 = detail::squared_distances(points, fit.means);
      continue;
    }

    // M-step.
    nk = nk.cwiseMax(1e-300);
    fit.means = (resp.transpose() * points).array().colwise() / nk.array();
    if (!pin_equal_weights) fit.mixing_weights = nk / m;
    d2 = detail::squared_distances(points, fit.means);
    fit.shared_variance =
        std::max((resp.array() * d2.array()).sum() / (m * d), fit.variance_floor);
  }

  if (!converged) {
    // Ran out of iterations after an M-step; re-evaluate so the reported
    // likelihood matches the returned parameters.
    log_joint(logp);
    record(detail::row_logsumexp(logp).sum());
  }

  fit.collapsed = fit.shared_variance <= fit.variance_floor &&
                  fit.mixing_weights.minCoeff() < 1e-6;
  const int p = k * d + k - 1 + 1;
  fit.bic = -2.0 * fit.log_likelihood + p * std::log(static_cast<double>(m));
  return fit;
}

namespace detail {

inline double min_row_separation(const Eigen::MatrixXd& means) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < means.rows(); ++i)
    for (int j = i + 1; j < means.rows(); ++j)
      best = std::min(best, (means.row(i) - means.row(j)).norm());
  return best;
}

// Merge the closest pair of rows into their weight-averaged midpoint.
inline void merge_closest_rows(Eigen::MatrixXd& means, Eigen::VectorXd& weights) {
  int a = 0, b = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < means.rows(); ++i)
    for (int j = i + 1; j < means.rows(); ++j) {
      const double d2 = (means.row(i) - means.row(j)).squaredNorm();
      if (d2 < best) { best = d2; a = i; b = j; }
    }
  const double wa = weights(a), wb = weights(b);
  means.row(a) = (wa * means.row(a) + wb * means.row(b)) / std::max(wa + wb, 1e-300);
  weights(a) = wa + wb;
  const int last = static_cast<int>(means.rows()) - 1;
  means.row(b) = means.row(last);
  weights(b) = weights(last);
  means.conservativeResize(last, Eigen::NoChange);
  weights.conservativeResize(last);
}

// Warm-start means with `target` rows derived from an existing fit: merge the
// closest pair while above target, then collapse any near-coincident pairs
// (closer than dedup_tol), then append the data point farthest from the
// current means while below target.
inline Eigen::MatrixXd adapt_means(const Eigen::MatrixXd& points, Eigen::MatrixXd means,
                                   Eigen::VectorXd weights, int target,
                                   double dedup_tol = 0.0) {
  while (means.rows() > target) merge_closest_rows(means, weights);
  while (means.rows() > 1 && min_row_separation(means) < dedup_tol)
    merge_closest_rows(means, weights);
  while (means.rows() < target) {
    int arg = 0;
    squared_distances(points, means).rowwise().minCoeff().maxCoeff(&arg);
    const int last = static_cast<int>(means.rows());
    means.conservativeResize(last + 1, Eigen::NoChange);
    means.row(last) = points.row(arg);
    weights.conservativeResize(last + 1);
    weights(last) = 1.0 / target;
  }
  return means;
}

}  // namespace detail

struct ComponentSelection {
  GmmFit fit;                 // the selected fit
  int chosen_k = 0;
  std::vector<int> ks;        // candidate component counts
  std::vector<double> bics;   // BIC per candidate, aligned with ks
};

// Half-up rounding shared by count estimation and the delta rule.
inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

// BIC scan over K in [max(1, n_hat - delta), n_hat + delta]. Keeps n_hat
// unless a neighbor's BIC undercuts it by more than `margin`. The default
// delta is round(0.15 * n_hat). Fit k uses seed stream k.
//
// When a neighbor wins the scan, the n_hat fit is refit once, warm-started
// from the winner's means reshaped to n_hat rows, and the better of the two
// n_hat fits enters the margin rule. A neighbor that merely escaped a bad
// n_hat seeding (a missed cluster among well-separated ones) loses its edge
// under the rescue fit; a genuinely better K keeps it.
inline ComponentSelection select_components(const Eigen::MatrixXd& points, int n_hat,
                                            std::optional<int> delta, std::uint64_t seed,
                                            double margin = 10.0, double tol = 1e-6,
                                            int max_iter = 200,
                                            bool pin_equal_weights = false) {
  const int m = static_cast<int>(points.rows());
  if (n_hat < 1) throw InvalidArgument("select_components: n_hat must be >= 1");
  if (m < n_hat)
    throw InsufficientPoints("select_components: fewer points than n_hat components");

  const int dd = delta ? *delta : round_half_up(0.15 * n_hat);
  if (dd < 0) throw InvalidArgument("select_components: delta must be >= 0");
  const int k_lo = std::max(1, n_hat - dd);
  const int k_hi = std::min(n_hat + dd, m);

  ComponentSelection sel;
  std::vector<GmmFit> fits;
  const double dup_tol = 1e-3 * detail::bbox_diameter(points);
  for (int k = k_lo; k <= k_hi; ++k) {
    Rng stream = Rng(seed).stream(static_cast<std::uint64_t>(k));
    GmmFit f = fit_gmm(points, k, stream.next_u64(), tol, max_iter, pin_equal_weights);
    if (k > 1 && detail::min_row_separation(f.means) < dup_tol) {
      // Near-coincident means signal a missed cluster (two components trapped
      // on one blob inflate the shared variance for every point). Refit from
      // the dedup'd means grown back by farthest-point; keep the better fit.
      const Eigen::MatrixXd init =
          detail::adapt_means(points, f.means, f.mixing_weights, k, dup_tol);
      GmmFit r = fit_gmm(points, k, 0, tol, max_iter, pin_equal_weights, init);
      if (r.bic < f.bic) f = std::move(r);
    }
    fits.push_back(std::move(f));
    sel.ks.push_back(k);
    sel.bics.push_back(fits.back().bic);
  }

  const int base_idx = n_hat - k_lo;
  int best_idx = base_idx;
  for (int i = 0; i < static_cast<int>(sel.bics.size()); ++i)
    if (sel.bics[i] < sel.bics[best_idx]) best_idx = i;

  if (best_idx != base_idx) {
    const Eigen::MatrixXd init = detail::adapt_means(
        points, fits[best_idx].means, fits[best_idx].mixing_weights, n_hat, dup_tol);
    GmmFit rescue =
        fit_gmm(points, n_hat, 0, tol, max_iter, pin_equal_weights, init);
    if (rescue.bic < fits[base_idx].bic) {
      fits[base_idx] = std::move(rescue);
      sel.bics[base_idx] = fits[base_idx].bic;
    }
    best_idx = base_idx;
    for (int i = 0; i < static_cast<int>(sel.bics.size()); ++i)
      if (sel.bics[i] < sel.bics[best_idx]) best_idx = i;
  }

  const bool strongly_better =
      best_idx != base_idx && sel.bics[best_idx] < sel.bics[base_idx] - margin;
  const int pick = strongly_better ? best_idx : base_idx;
  sel.chosen_k = sel.ks[pick];
  sel.fit = std::move(fits[pick]);
  return sel;
}

}  // namespace cords
