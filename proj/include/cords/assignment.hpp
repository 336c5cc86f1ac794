#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "cords/error.hpp"

namespace cords {

// Minimum-cost assignment (Hungarian algorithm with potentials, O(n^2 m)).
// `cost` is n x m with n <= m; returns the matched column per row.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n == 0) return {};
  if (n > m) throw InvalidArgument("hungarian: requires rows <= cols");
  if (!cost.allFinite()) throw InvalidArgument("hungarian: costs must be finite");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> match(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) match[p[j] - 1] = j - 1;
  return match;
}

// Greedy nearest matching on a line: values of `a` are processed in
// increasing order, each taking the nearest unconsumed value of `b`.
// Returns the matched index of b per entry of a (-1 once b is exhausted).
inline std::vector<int> greedy_nearest_1d(const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& b) {
  const auto n = a.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x] < a[y]; });

  std::vector<int> match(n, -1);
  std::vector<char> taken(b.size(), 0);
  for (const int i : order) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (taken[j]) continue;
      const double d = std::fabs(a[i] - b[j]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) taken[best] = 1;
    match[i] = best;
  }
  return match;
}

// Matched (row of a, row of b) index pairs under Euclidean cost; Hungarian
// for d >= 2, sorted-order greedy for points on a line. Pairs cover the
// smaller of the two sets.
inline std::vector<std::pair<int, int>> match_points(const Eigen::MatrixXd& a,
                                                     const Eigen::MatrixXd& b) {
  std::vector<std::pair<int, int>> pairs;
  if (a.rows() == 0 || b.rows() == 0) return pairs;
  if (a.cols() != b.cols())
    throw InvalidArgument("match_points: dimension mismatch");

  if (a.cols() == 1) {
    const bool a_small = a.rows() <= b.rows();
    const Eigen::VectorXd& small = a_small ? a.col(0) : b.col(0);
    const Eigen::VectorXd& big = a_small ? b.col(0) : a.col(0);
    const std::vector<int> match = greedy_nearest_1d(small, big);
    for (int i = 0; i < static_cast<int>(match.size()); ++i)
      if (match[i] >= 0)
        pairs.emplace_back(a_small ? i : match[i], a_small ? match[i] : i);
    return pairs;
  }

  const bool a_small = a.rows() <= b.rows();
  const Eigen::MatrixXd& small = a_small ? a : b;
  const Eigen::MatrixXd& big = a_small ? b : a;
  Eigen::MatrixXd cost(small.rows(), big.rows());
  for (Eigen::Index i = 0; i < small.rows(); ++i)
    cost.row(i) = (big.rowwise() - small.row(i)).rowwise().norm().transpose();
  const std::vector<int> match = hungarian(cost);
  for (int i = 0; i < static_cast<int>(match.size()); ++i)
    pairs.emplace_back(a_small ? i : match[i], a_small ? match[i] : i);
  return pairs;
}

}  // namespace cords
