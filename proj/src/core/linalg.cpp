#include "tensorial/linalg.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "tensorial/errors.hpp"

namespace tensorial {

SvdResult svd(const Matrix& m) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw NumericError("svd input contains a non-finite entry");
  }
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const std::size_t k = std::min(rows, cols);
  if (k == 0) throw ShapeError("svd of an empty matrix");

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> in(m.data().data(), static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
  Eigen::BDCSVD<Eigen::MatrixXd> solver(in, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw NumericError("svd failed to converge after " + std::to_string(solver.nonzeroSingularValues()) +
                       " resolved singular values");
  }

  SvdResult out{Matrix(rows, k), std::vector<double>(k), Matrix(k, cols)};
  const auto& u = solver.matrixU();
  const auto& v = solver.matrixV();
  const auto& s = solver.singularValues();
  for (std::size_t j = 0; j < k; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out.singular_values[j] = s(jj);

    // Sign convention: largest-magnitude entry of each left vector is >= 0.
    std::size_t pivot = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double a = std::abs(u(static_cast<Eigen::Index>(i), jj));
      if (a > best) {
        best = a;
        pivot = i;
      }
    }
    const double sign = u(static_cast<Eigen::Index>(pivot), jj) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < rows; ++i) out.u(i, j) = sign * u(static_cast<Eigen::Index>(i), jj);
    for (std::size_t c = 0; c < cols; ++c) out.vt(j, c) = sign * v(static_cast<Eigen::Index>(c), jj);
  }

  for (double x : out.u.data())
    if (!std::isfinite(x)) throw NumericError("svd produced non-finite singular vectors");
  for (double x : out.singular_values)
    if (!std::isfinite(x)) throw NumericError("svd produced non-finite singular values");
  return out;
}

double discarded_energy(const std::vector<double>& singular_values, std::size_t rank) {
  double e = 0.0;
  for (std::size_t j = rank; j < singular_values.size(); ++j) e += singular_values[j] * singular_values[j];
  return e;
}

std::size_t energy_rank(const std::vector<double>& s, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("energy fraction must lie in (0, 1]");
  if (fraction == 1.0) return s.size();
  double total = 0.0;
  for (double v : s) total += v * v;
  if (total == 0.0) return 1;
  double kept = 0.0;
  for (std::size_t r = 0; r < s.size(); ++r) {
    kept += s[r] * s[r];
    if (kept >= fraction * total) return r + 1;
  }
  return s.size();
}

}  // namespace tensorial
