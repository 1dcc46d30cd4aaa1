#pragma once

#include <Eigen/Core>
#include <vector>

namespace stcal {

/// Minimum-cost assignment on a rectangular cost matrix (rows to columns,
/// each row matched to exactly one column when rows <= cols, and vice versa).
/// Returns match[row] = column index, or -1 for rows left unmatched when
/// rows > cols. O(n^3) shortest augmenting path formulation.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace stcal
