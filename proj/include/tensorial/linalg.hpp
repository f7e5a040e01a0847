#pragma once

#include <vector>

#include "tensorial/tensor.hpp"

namespace tensorial {

/// Thin SVD m = u · diag(singular_values) · vt with k = min(rows, cols).
/// Singular values are non-increasing. Each column of u has its
/// largest-magnitude entry non-negative (first index wins ties); the matching
/// row of vt is flipped with it.
struct SvdResult {
  Matrix u;
  std::vector<double> singular_values;
  Matrix vt;
};

SvdResult svd(const Matrix& m);

/// Sum of squares of singular values past the first `rank`.
double discarded_energy(const std::vector<double>& singular_values, std::size_t rank);

/// Smallest rank whose leading squared singular values reach `fraction` of
/// the total (1 for an all-zero spectrum). Throws unless 0 < fraction <= 1.
std::size_t energy_rank(const std::vector<double>& singular_values, double fraction);

}  // namespace tensorial
