#pragma once

#include <Eigen/Core>
#include <vector>

namespace panoslam {

/// Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^3)).
/// Rectangular inputs are padded internally; row i of the result holds the
/// assigned column or -1 when the row is left unmatched. When rows > cols,
/// exactly cols rows are matched (and vice versa), minimizing total cost over
/// the real entries.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col);

}  // namespace panoslam
