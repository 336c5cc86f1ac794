#pragma once

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/kernels.hpp"
#include "cords/lbfgs.hpp"

namespace cords {

// ============================================================================
// Position objective and refinement
// ============================================================================
//
// Kernel-matching loss over the observed density channel:
//
//   L(c, a) = (1/S) sum_s ( rho_s - a (1/alpha) sum_u K(r_s; c_u) )^2
//
// For a clean field encoded from the true centers the global minimum is
// exactly zero at those centers with a = 1, sampled or not, which is what
// makes L-BFGS refinement exact rather than merely statistical. Optionally
// the residual is taken between logs (both sides floored at
// floor_scale * max(rho)) for large dynamic ranges, and the global
// amplitude can be freed as a = exp(u) to absorb normalization mismatch.

struct ObjectiveOptions {
  bool log_space = false;
  bool free_amplitude = false;
  double amplitude = 1.0;      // fixed value when not freed
  double floor_scale = 1e-8;   // log-space floor, relative to peak density
};

class PositionObjective {
 public:
  PositionObjective(Eigen::MatrixXd points, Eigen::VectorXd density,
                    const KernelSpec& spec, int num_centers,
                    ObjectiveOptions opts = {})
      : points_(std::move(points)),
        rho_(std::move(density)),
        spec_(spec),
        opts_(opts),
        k_(num_centers) {
    validate(spec_);
    if (points_.rows() != rho_.size() || points_.rows() == 0)
      throw InvalidArgument("PositionObjective: need matching, non-empty samples");
    if (points_.cols() != spec_.dim)
      throw InvalidArgument("PositionObjective: sample dimension does not match spec");
    if (k_ < 1) throw InvalidArgument("PositionObjective: need at least one center");
    if (!(opts_.amplitude > 0.0))
      throw InvalidArgument("PositionObjective: amplitude must be > 0");
    floor_ = std::max(opts_.floor_scale * rho_.maxCoeff(), 1e-300);
  }

  int num_centers() const { return k_; }
  int dim() const { return spec_.dim; }
  // Packed layout: centers row-major (k * d), then u = log a when freed.
  int packed_size() const { return k_ * spec_.dim + (opts_.free_amplitude ? 1 : 0); }
  const ObjectiveOptions& options() const { return opts_; }

  Eigen::VectorXd pack(const Eigen::MatrixXd& centers, double amplitude) const {
    if (centers.rows() != k_ || centers.cols() != spec_.dim)
      throw InvalidArgument("PositionObjective: center shape mismatch");
    if (opts_.free_amplitude && !(amplitude > 0.0))
      throw InvalidArgument("PositionObjective: amplitude must be > 0");
    Eigen::VectorXd x(packed_size());
    for (int u = 0; u < k_; ++u)
      x.segment(u * spec_.dim, spec_.dim) = centers.row(u).transpose();
    if (opts_.free_amplitude) x[k_ * spec_.dim] = std::log(amplitude);
    return x;
  }

  Eigen::MatrixXd unpack_centers(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd centers(k_, spec_.dim);
    for (int u = 0; u < k_; ++u)
      centers.row(u) = x.segment(u * spec_.dim, spec_.dim).transpose();
    return centers;
  }

  double unpack_amplitude(const Eigen::VectorXd& x) const {
    return opts_.free_amplitude ? std::exp(x[k_ * spec_.dim]) : opts_.amplitude;
  }

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    if (x.size() != packed_size())
      throw InvalidArgument("PositionObjective: packed vector size mismatch");
    const int d = spec_.dim;
    const auto s_count = points_.rows();
    const Eigen::MatrixXd centers = unpack_centers(x);
    const double a = unpack_amplitude(x);

    // Unscaled profile values and their derivative in squared distance.
    const Eigen::MatrixXd t = detail::squared_distances(points_, centers);
    Eigen::ArrayXXd pv, pd;
    const double s2 = spec_.sigma * spec_.sigma;
    switch (spec_.family) {
      case KernelFamily::Gaussian:
        pv = (-0.5 / s2 * t.array()).exp();
        pd = -0.5 / s2 * pv;
        break;
      case KernelFamily::Laplacian: {
        const Eigen::ArrayXXd r = t.array().sqrt();
        pv = (-r / spec_.sigma).exp();
        pd = (r > 0.0).select(-pv / (2.0 * spec_.sigma * r), 0.0);
        break;
      }
      case KernelFamily::Epanechnikov:
        pv = (1.0 - t.array() / s2).max(0.0);
        pd = (t.array() <= s2)
                 .select(Eigen::ArrayXXd::Constant(t.rows(), t.cols(), -1.0 / s2), 0.0);
        break;
    }

    const double c0 = a * kernel_scale(spec_) / kernel_mass(spec_);
    const Eigen::VectorXd pred = c0 * pv.rowwise().sum().matrix();

    // dL/dpred per sample, and the value.
    double value = 0.0;
    Eigen::VectorXd dpred(s_count);
    if (!opts_.log_space) {
      const Eigen::VectorXd resid = pred - rho_;
      value = resid.squaredNorm() / s_count;
      dpred = (2.0 / s_count) * resid;
    } else {
      const Eigen::ArrayXd pf = pred.array().max(floor_);
      const Eigen::ArrayXd rf = rho_.array().max(floor_);
      const Eigen::ArrayXd resid = pf.log() - rf.log();
      value = resid.square().sum() / s_count;
      dpred = ((2.0 / s_count) * resid *
               (pred.array() > floor_).cast<double>() / pf)
                  .matrix();
    }

    // Chain rule through squared distances: for center u,
    // grad_u = 2 c0 [ c_u * sum_s w_su - sum_s w_su r_s ], w = dpred .* pd.
    const Eigen::MatrixXd w = (pd.colwise() * dpred.array()).matrix();
    const Eigen::VectorXd wsum = w.colwise().sum().transpose();
    const Eigen::MatrixXd wx = w.transpose() * points_;
    grad.resize(packed_size());
    for (int u = 0; u < k_; ++u)
      grad.segment(u * d, d) =
          2.0 * c0 * (wsum[u] * centers.row(u).transpose() - wx.row(u).transpose());
    if (opts_.free_amplitude) grad[k_ * d] = dpred.dot(pred);
    return value;
  }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd rho_;
  KernelSpec spec_;
  ObjectiveOptions opts_;
  int k_;
  double floor_ = 0.0;
};

// Value and gradient at a center matrix (spec-facing convenience).
inline std::pair<double, Eigen::MatrixXd> objective_eval(const PositionObjective& obj,
                                                         const Eigen::MatrixXd& centers,
                                                         double amplitude = 1.0) {
  Eigen::VectorXd grad;
  const double value = obj(obj.pack(centers, amplitude), grad);
  Eigen::MatrixXd gc(centers.rows(), centers.cols());
  for (int u = 0; u < centers.rows(); ++u)
    gc.row(u) = grad.segment(u * centers.cols(), centers.cols()).transpose();
  return {value, gc};
}

struct RefineResult {
  Eigen::MatrixXd centers;
  double amplitude = 1.0;
  LbfgsResult opt;
};

// L-BFGS refinement of centers (and optionally the amplitude) from an
// initial guess. Equivariant under permutation of the initial centers.
inline RefineResult refine_centers(const PositionObjective& obj,
                                   const Eigen::MatrixXd& centers0,
                                   const LbfgsConfig& cfg = {}) {
  RefineResult out;
  out.opt = lbfgs_minimize(obj, obj.pack(centers0, obj.options().amplitude), cfg);
  out.centers = obj.unpack_centers(out.opt.x);
  out.amplitude = obj.unpack_amplitude(out.opt.x);
  return out;
}

}  // namespace cords
