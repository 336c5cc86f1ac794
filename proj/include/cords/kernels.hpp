#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "cords/error.hpp"

namespace cords {

// ============================================================================
// Kernel family
// ============================================================================
//
// All kernels are radial, K(r; s) = c * profile(||r - s||^2), with a single
// bandwidth sigma. `normalized` selects unit total mass (c = 1/alpha, the
// library default); the raw profile (c = 1) is kept for alpha bookkeeping
// tests. Supported profiles:
//   Gaussian      exp(-t / (2 sigma^2)),        t = squared distance
//   Laplacian     exp(-sqrt(t) / sigma)
//   Epanechnikov  max(0, 1 - t / sigma^2)       (exactly 0 at the boundary)

enum class KernelFamily { Gaussian, Laplacian, Epanechnikov };

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double sigma = 1.0;
  int dim = 2;
  bool normalized = true;
};

inline void validate(const KernelSpec& spec) {
  if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma))
    throw InvalidArgument("KernelSpec: sigma must be finite and > 0");
  if (spec.dim < 1) throw InvalidArgument("KernelSpec: dim must be >= 1");
}

inline std::string family_name(KernelFamily family) {
  switch (family) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Laplacian: return "laplacian";
    case KernelFamily::Epanechnikov: return "epanechnikov";
  }
  throw InvalidArgument("unknown kernel family");
}

inline KernelFamily family_from_name(const std::string& name) {
  if (name == "gaussian") return KernelFamily::Gaussian;
  if (name == "laplacian") return KernelFamily::Laplacian;
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  throw InvalidArgument("unknown kernel family: " + name);
}

namespace detail {

// Unit-ball volume V_d = pi^(d/2) / Gamma(d/2 + 1).
inline double unit_ball_volume(int dim) {
  return std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim + 1.0);
}

// Unit-sphere surface S_{d-1} = 2 pi^(d/2) / Gamma(d/2).
inline double unit_sphere_surface(int dim) {
  return 2.0 * std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim);
}

}  // namespace detail

// Total mass alpha of the raw (unnormalized) profile in `dim` dimensions.
inline double raw_profile_mass(const KernelSpec& spec) {
  validate(spec);
  const double s = spec.sigma;
  const int d = spec.dim;
  switch (spec.family) {
    case KernelFamily::Gaussian:
      return std::pow(2.0 * M_PI * s * s, 0.5 * d);
    case KernelFamily::Laplacian:
      // S_{d-1} * sigma^d * Gamma(d); the d = 1 case reduces to 2 sigma.
      return detail::unit_sphere_surface(d) * std::pow(s, d) * std::tgamma(d);
    case KernelFamily::Epanechnikov:
      // V_d * sigma^d * 2 / (d + 2); the d = 1 case reduces to 4 sigma / 3.
      return detail::unit_ball_volume(d) * std::pow(s, d) * 2.0 / (d + 2.0);
  }
  throw InvalidArgument("unknown kernel family");
}

// Mass of the kernel as evaluated: 1 when normalized, alpha otherwise.
inline double kernel_mass(const KernelSpec& spec) {
  return spec.normalized ? 1.0 : raw_profile_mass(spec);
}

// Leading constant applied to the raw profile.
inline double kernel_scale(const KernelSpec& spec) {
  return spec.normalized ? 1.0 / raw_profile_mass(spec) : 1.0;
}

// Raw profile value at squared distance t >= 0.
inline double kernel_profile(const KernelSpec& spec, double t) {
  const double s2 = spec.sigma * spec.sigma;
  switch (spec.family) {
    case KernelFamily::Gaussian:
      return std::exp(-0.5 * t / s2);
    case KernelFamily::Laplacian:
      return std::exp(-std::sqrt(t) / spec.sigma);
    case KernelFamily::Epanechnikov:
      return t < s2 ? 1.0 - t / s2 : 0.0;
  }
  throw InvalidArgument("unknown kernel family");
}

// Derivative of the raw profile with respect to squared distance. The
// Epanechnikov boundary uses the one-sided interior derivative; the
// Laplacian subgradient at zero distance is 0.
inline double kernel_profile_dt(const KernelSpec& spec, double t) {
  const double s2 = spec.sigma * spec.sigma;
  switch (spec.family) {
    case KernelFamily::Gaussian:
      return -0.5 / s2 * std::exp(-0.5 * t / s2);
    case KernelFamily::Laplacian: {
      const double r = std::sqrt(t);
      if (r == 0.0) return 0.0;
      return -std::exp(-r / spec.sigma) / (2.0 * spec.sigma * r);
    }
    case KernelFamily::Epanechnikov:
      return t <= s2 ? -1.0 / s2 : 0.0;
  }
  throw InvalidArgument("unknown kernel family");
}

// K(r; s). Computed from the difference vector only, so a common translation
// of both arguments perturbs the value by at most rounding of r - s.
inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& r,
                          const Eigen::VectorXd& s) {
  validate(spec);
  if (r.size() != spec.dim || s.size() != spec.dim)
    throw InvalidArgument("kernel_eval: point dimension does not match spec");
  if (!r.allFinite() || !s.allFinite())
    throw InvalidArgument("kernel_eval: points must be finite");
  const double t = (r - s).squaredNorm();
  return kernel_scale(spec) * kernel_profile(spec, t);
}

// Closed-form pair integral int K(r; s1) K(r; s2) dr, Gaussian family only.
// For normalized kernels this is (4 pi sigma^2)^(-d/2) exp(-||s1-s2||^2 / (4 sigma^2));
// the raw profile scales it by alpha^2.
inline double gaussian_overlap(const KernelSpec& spec, const Eigen::VectorXd& s1,
                               const Eigen::VectorXd& s2) {
  validate(spec);
  if (spec.family != KernelFamily::Gaussian)
    throw UnsupportedOperation("gaussian_overlap: closed form exists only for the Gaussian family");
  if (s1.size() != spec.dim || s2.size() != spec.dim)
    throw InvalidArgument("gaussian_overlap: point dimension does not match spec");
  const double s2v = spec.sigma * spec.sigma;
  const double d2 = (s1 - s2).squaredNorm();
  const double unit = std::pow(4.0 * M_PI * s2v, -0.5 * spec.dim) * std::exp(-0.25 * d2 / s2v);
  if (spec.normalized) return unit;
  const double alpha = raw_profile_mass(spec);
  return alpha * alpha * unit;
}

namespace detail {

// Pairwise squared distances between row-point matrices, via the expanded
// GEMM form; clamped at zero against cancellation.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a,
                                         const Eigen::MatrixXd& b) {
  Eigen::MatrixXd d2 = -2.0 * a * b.transpose();
  d2.colwise() += a.rowwise().squaredNorm();
  d2.rowwise() += b.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

// S x K matrix of kernel values between sample points and centers.
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec,
                                     const Eigen::MatrixXd& points,
                                     const Eigen::MatrixXd& centers) {
  validate(spec);
  if (points.cols() != spec.dim || centers.cols() != spec.dim)
    throw InvalidArgument("kernel_matrix: point dimension does not match spec");
  const double scale = kernel_scale(spec);
  const double s2 = spec.sigma * spec.sigma;
  Eigen::MatrixXd t = squared_distances(points, centers);
  switch (spec.family) {
    case KernelFamily::Gaussian:
      return scale * (-0.5 / s2 * t.array()).exp().matrix();
    case KernelFamily::Laplacian:
      return scale * (-t.array().sqrt() / spec.sigma).exp().matrix();
    case KernelFamily::Epanechnikov:
      return scale * (1.0 - t.array() / s2).max(0.0).matrix();
  }
  throw InvalidArgument("unknown kernel family");
}

}  // namespace detail

}  // namespace cords
