#pragma once

// Dense two-phase simplex (Bland's rule) for the balanced transportation
// problem. Independent of the library solver; only fit for tiny instances.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double lp_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                           const std::vector<double>& cost) {
  const std::size_t n = supply.size(), m = demand.size(), nv = n * m;
  const std::size_t rows = n + m - 1;  // last demand row is implied by the others
  const std::size_t cols = nv + rows;  // originals, then one artificial per row
  const double tol = 1e-12;
  std::vector<std::vector<double>> t(rows + 1, std::vector<double>(cols + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) t[i][i * m + j] = 1.0;
    t[i][cols] = supply[i];
  }
  for (std::size_t j = 0; j + 1 < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) t[n + j][i * m + j] = 1.0;
    t[n + j][cols] = demand[j];
  }
  std::vector<std::size_t> basis(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    t[k][nv + k] = 1.0;
    basis[k] = nv + k;
  }

  auto pivot = [&](std::size_t row, std::size_t col) {
    const double p = t[row][col];
    for (double& v : t[row]) v /= p;
    for (std::size_t k = 0; k <= rows; ++k) {
      if (k == row || t[k][col] == 0.0) continue;
      const double f = t[k][col];
      for (std::size_t c = 0; c <= cols; ++c) t[k][c] -= f * t[row][c];
    }
    basis[row] = col;
  };
  auto run = [&](std::size_t limit) {
    for (int guard = 0; guard < 100000; ++guard) {
      std::size_t enter = limit;
      for (std::size_t c = 0; c < limit; ++c)
        if (t[rows][c] < -tol) {
          enter = c;
          break;
        }
      if (enter == limit) return;
      std::size_t leave = rows;
      double best = 0.0;
      for (std::size_t k = 0; k < rows; ++k) {
        if (t[k][enter] <= tol) continue;
        const double ratio = t[k][cols] / t[k][enter];
        if (leave == rows || ratio < best - tol || (std::abs(ratio - best) <= tol && basis[k] < basis[leave])) {
          leave = k;
          best = ratio;
        }
      }
      if (leave == rows) throw std::runtime_error("unbounded");
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex did not terminate");
  };

  // Phase 1: minimize the sum of artificials.
  for (std::size_t c = 0; c <= cols; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows; ++k) s += t[k][c];
    t[rows][c] = c < nv ? -s : (c == cols ? -s : 0.0);
  }
  run(nv);
  if (std::abs(t[rows][cols]) > 1e-9) throw std::runtime_error("infeasible");
  for (std::size_t k = 0; k < rows; ++k) {
    if (basis[k] < nv) continue;
    for (std::size_t c = 0; c < nv; ++c)
      if (std::abs(t[k][c]) > tol) {
        pivot(k, c);
        break;
      }
  }
  // Phase 2: reduced costs for the real objective.
  for (std::size_t c = 0; c <= cols; ++c) {
    double v = c < nv ? cost[c] : 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
      const double cb = basis[k] < nv ? cost[basis[k]] : 0.0;
      v -= cb * t[k][c];
    }
    t[rows][c] = c < nv || c == cols ? v : 0.0;
  }
  run(nv);
  return -t[rows][cols];
}

}  // namespace oracle
