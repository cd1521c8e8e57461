#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg::objective {

/// Dense row-major cost matrix.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Minimum-cost assignment of min(rows, cols) pairs (Kuhn-Munkres with potentials, O(n²m)).
inline AssignmentMatrix hungarian_match(const CostMatrix& cost) {
  if (cost.rows == 0 || cost.cols == 0) throw EmptyInputError("hungarian_match: empty cost matrix");
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_match: non-finite cost");
  }
  // The solver assigns every row of an n×m problem with n <= m; transpose when needed.
  const bool transposed = cost.rows > cost.cols;
  const int n = transposed ? cost.cols : cost.rows;
  const int m = transposed ? cost.rows : cost.cols;
  const auto at = [&](int i, int j) { return transposed ? cost(j, i) : cost(i, j); };

  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentMatrix delta(cost.rows, cost.cols);
  for (int j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    if (transposed) {
      delta.assign(j - 1, match[j] - 1);
    } else {
      delta.assign(match[j] - 1, j - 1);
    }
  }
  return delta;
}

inline double assignment_cost(const CostMatrix& cost, const AssignmentMatrix& delta) {
  double total = 0.0;
  for (int r = 0; r < cost.rows; ++r) {
    if (delta.col_of(r) >= 0) total += cost(r, delta.col_of(r));
  }
  return total;
}

}  // namespace seqseg::objective
