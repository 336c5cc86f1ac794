#pragma once

#include <Eigen/Core>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "cords/error.hpp"

namespace cords {

struct LbfgsConfig {
  int memory = 10;
  int max_iter = 50;
  double c1 = 1e-4;          // Armijo slope fraction
  double c2 = 0.9;           // strong Wolfe curvature fraction
  double grad_tol = 1e-8;    // convergence on ||grad||_2
  int max_line_steps = 20;   // trial evaluations per line search
};

struct LbfgsTraceRow {
  int iteration;
  double value;
  double grad_norm;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<LbfgsTraceRow> trace;
};

namespace detail {

// Minimizer of the cubic interpolant through (a, fa, ga) and (b, fb, gb);
// falls back to bisection when the interpolant is degenerate.
inline double cubic_minimizer(double a, double fa, double ga, double b, double fb,
                              double gb) {
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0) {
      const double t = b - (b - a) * (gb + d2 - d1) / denom;
      if (std::isfinite(t)) return t;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Minimizes f: R^n -> R with L-BFGS and a strong Wolfe line search
// (bracket + zoom with cubic interpolation). `f(x, grad)` must return the
// value and fill the gradient.
//
// Error contract: a non-finite value or gradient at x0 is an invalid
// argument; if every trial step of a line search is non-finite the
// optimizer throws OptimizationDiverged carrying the last finite iterate;
// a finite but Wolfe-violating line search leaves the last iterate intact
// and returns with `line_search_failed` set.
template <class F>
LbfgsResult lbfgs_minimize(F&& f, Eigen::VectorXd x0, const LbfgsConfig& cfg = {}) {
  const auto n = x0.size();
  if (n == 0) throw InvalidArgument("lbfgs_minimize: empty starting point");
  if (cfg.memory < 1 || cfg.max_iter < 1 || cfg.max_line_steps < 2 ||
      !(cfg.c1 > 0.0 && cfg.c1 < cfg.c2 && cfg.c2 < 1.0) || !(cfg.grad_tol >= 0.0))
    throw InvalidArgument("lbfgs_minimize: invalid configuration");

  LbfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(n);
  res.value = f(res.x, res.grad);
  if (!std::isfinite(res.value) || !res.grad.allFinite())
    throw InvalidArgument("lbfgs_minimize: objective not finite at the start point");
  res.trace.push_back({0, res.value, res.grad.norm()});

  std::deque<Eigen::VectorXd> mem_s, mem_y;
  std::deque<double> mem_rho;
  Eigen::VectorXd g_new(n), x_trial(n);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    if (res.grad.norm() <= cfg.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion for d = -H g.
    Eigen::VectorXd q = res.grad;
    const int k = static_cast<int>(mem_s.size());
    std::vector<double> a(k);
    for (int i = k - 1; i >= 0; --i) {
      a[i] = mem_rho[i] * mem_s[i].dot(q);
      q -= a[i] * mem_y[i];
    }
    if (k > 0) q *= mem_s.back().dot(mem_y.back()) / mem_y.back().squaredNorm();
    for (int i = 0; i < k; ++i) {
      const double b = mem_rho[i] * mem_y[i].dot(q);
      q += (a[i] - b) * mem_s[i];
    }
    Eigen::VectorXd dir = -q;
    double dphi0 = dir.dot(res.grad);
    if (!(dphi0 < 0.0)) {  // curvature noise; fall back to steepest descent
      dir = -res.grad;
      dphi0 = dir.dot(res.grad);
      mem_s.clear();
      mem_y.clear();
      mem_rho.clear();
    }

    // Strong Wolfe line search on phi(t) = f(x + t dir).
    const double phi0 = res.value;
    double t_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
    double t = 1.0;
    double t_accept = -1.0, phi_accept = 0.0;
    bool have_bracket = false;
    double lo = 0.0, phi_lo = phi0, dphi_lo = dphi0, hi = 0.0, phi_hi = 0.0,
           dphi_hi = 0.0;
    int evals = 0;
    bool any_finite = false;

    while (evals < cfg.max_line_steps) {
      x_trial = res.x + t * dir;
      const double phi = f(x_trial, g_new);
      ++evals;
      const bool finite = std::isfinite(phi) && g_new.allFinite();
      if (!finite) {
        // Step overshot the finite region; pull the trial back.
        t = have_bracket ? 0.5 * (lo + t) : 0.5 * (t_prev + t);
        continue;
      }
      any_finite = true;
      const double dphi = g_new.dot(dir);

      if (!have_bracket) {
        if (phi > phi0 + cfg.c1 * t * dphi0 || (evals > 1 && phi >= phi_prev)) {
          have_bracket = true;
          lo = t_prev; phi_lo = phi_prev; dphi_lo = dphi_prev;
          hi = t; phi_hi = phi; dphi_hi = dphi;
        } else if (std::fabs(dphi) <= -cfg.c2 * dphi0) {
          t_accept = t; phi_accept = phi;
          break;
        } else if (dphi >= 0.0) {
          have_bracket = true;
          lo = t; phi_lo = phi; dphi_lo = dphi;
          hi = t_prev; phi_hi = phi_prev; dphi_hi = dphi_prev;
        } else {
          t_prev = t; phi_prev = phi; dphi_prev = dphi;
          t *= 2.0;
          continue;
        }
      } else {
        // Zoom step: standard bracket update.
        if (phi > phi0 + cfg.c1 * t * dphi0 || phi >= phi_lo) {
          hi = t; phi_hi = phi; dphi_hi = dphi;
        } else if (std::fabs(dphi) <= -cfg.c2 * dphi0) {
          t_accept = t; phi_accept = phi;
          break;
        } else {
          if (dphi * (hi - lo) >= 0.0) {
            hi = lo; phi_hi = phi_lo; dphi_hi = dphi_lo;
          }
          lo = t; phi_lo = phi; dphi_lo = dphi;
        }
      }

      // Next zoom trial: cubic interpolation, safeguarded to the interior.
      double cand = detail::cubic_minimizer(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi);
      const double span = hi - lo;
      const double margin = 0.1 * std::fabs(span);
      const double lo_edge = std::min(lo, hi) + margin;
      const double hi_edge = std::max(lo, hi) - margin;
      if (!(cand >= lo_edge && cand <= hi_edge)) cand = 0.5 * (lo + hi);
      t = cand;
    }

    if (t_accept < 0.0) {
      if (!any_finite) {
        std::vector<double> last(res.x.data(), res.x.data() + res.x.size());
        throw OptimizationDiverged(
            "lbfgs_minimize: objective non-finite along the search direction", last);
      }
      res.line_search_failed = true;
      break;
    }

    // Accept the step, update memory.
    const Eigen::VectorXd s = t_accept * dir;
    const Eigen::VectorXd y = g_new - res.grad;
    res.x += s;
    res.value = phi_accept;
    res.grad = g_new;
    res.iterations = iter;
    res.trace.push_back({iter, res.value, res.grad.norm()});

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      mem_s.push_back(s);
      mem_y.push_back(y);
      mem_rho.push_back(1.0 / sy);
      if (static_cast<int>(mem_s.size()) > cfg.memory) {
        mem_s.pop_front();
        mem_y.pop_front();
        mem_rho.pop_front();
      }
    }
  }

  if (!res.converged && res.grad.norm() <= cfg.grad_tol) res.converged = true;
  return res;
}

}  // namespace cords
