#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace infradet {

/// Cost above which a pair is treated as forbidden (gated out).
inline constexpr double kForbiddenCost = 1e9;

class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  void validate() const {
    for (double v : data_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("CostMatrix: entries must be finite and non-negative");
      }
    }
  }

 private:
  size_t rows_{0}, cols_{0};
  std::vector<double> data_;
};

struct AssignmentResult {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double total_cost{0.0};
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
};

namespace detail {

/// Shortest-augmenting-path assignment with dual potentials, O(n^2 m).
/// Requires rows <= cols. Returns col index per row.
inline std::vector<int> augmenting_path_assign(const CostMatrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a.at(i0 - 1, j - 1) - u[i0] - v[j];
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
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace detail

/// Minimum-cost one-to-one assignment over min(rows, cols) pairs.
/// Pairs landing on the forbidden sentinel are reported as unmatched.
inline AssignmentResult solve_lap(const CostMatrix& costs) {
  AssignmentResult res;
  const int r = static_cast<int>(costs.rows());
  const int c = static_cast<int>(costs.cols());
  if (r == 0 || c == 0) {
    for (int i = 0; i < r; ++i) res.unmatched_rows.push_back(i);
    for (int j = 0; j < c; ++j) res.unmatched_cols.push_back(j);
    return res;
  }
  costs.validate();

  std::vector<int> row_to_col(r, -1);
  if (r <= c) {
    row_to_col = detail::augmenting_path_assign(costs);
  } else {
    CostMatrix t(costs.cols(), costs.rows());
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) t.at(j, i) = costs.at(i, j);
    const auto col_to_row = detail::augmenting_path_assign(t);
    for (int j = 0; j < c; ++j) {
      if (col_to_row[j] >= 0) row_to_col[col_to_row[j]] = j;
    }
  }

  std::vector<char> col_matched(c, 0);
  for (int i = 0; i < r; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && costs.at(i, j) < kForbiddenCost) {
      res.pairs.emplace_back(i, j);
      res.total_cost += costs.at(i, j);
      col_matched[j] = 1;
    } else {
      res.unmatched_rows.push_back(i);
    }
  }
  for (int j = 0; j < c; ++j) {
    if (!col_matched[j]) res.unmatched_cols.push_back(j);
  }
  return res;
}

}  // namespace infradet
