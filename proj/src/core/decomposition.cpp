#include "tensorial/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tensorial/errors.hpp"
#include "tensorial/linalg.hpp"

namespace tensorial {

namespace {

void require_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError("decomposition input contains a non-finite entry");
}

Tensor project_all(const Tensor& t, const std::vector<Matrix>& factors, std::size_t skip) {
  Tensor y = t;
  for (std::size_t m = 0; m < factors.size(); ++m)
    if (m != skip) y = n_mode_product(y, transpose(factors[m]), m);
  return y;
}

}  // namespace

std::size_t TuckerFactors::parameter_count() const {
  std::size_t n = core.size();
  for (const auto& a : factors) n += a.rows() * a.cols();
  return n;
}

std::size_t TTFactors::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : cores) n += c.size();
  return n;
}

std::vector<std::size_t> clamp_tucker_ranks(std::span<const std::size_t> requested, std::span<const std::size_t> shape) {
  if (requested.size() != shape.size()) {
    throw ArgumentError("expected " + std::to_string(shape.size()) + " Tucker ranks, got " +
                        std::to_string(requested.size()));
  }
  std::vector<std::size_t> out(requested.size());
  for (std::size_t n = 0; n < requested.size(); ++n) {
    if (requested[n] == 0) throw ArgumentError("Tucker ranks must be >= 1");
    out[n] = std::min(requested[n], shape[n]);
  }
  return out;
}

std::vector<std::size_t> clamp_tt_ranks(std::span<const std::size_t> requested, std::span<const std::size_t> shape) {
  const std::size_t n = shape.size();
  if (n == 0) throw ArgumentError("empty shape");
  const bool full_chain = requested.size() == n + 1;
  if (!full_chain && requested.size() != n - 1) {
    throw ArgumentError("expected " + std::to_string(n - 1) + " interior TT ranks or a chain of " +
                        std::to_string(n + 1) + ", got " + std::to_string(requested.size()));
  }
  const std::size_t skip = full_chain ? 1 : 0;
  std::vector<std::size_t> out(requested.begin(), requested.end());
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t r = requested[k + skip];
    if (r == 0) throw ArgumentError("TT ranks must be >= 1");
    std::size_t left = 1, right = 1;
    for (std::size_t i = 0; i <= k; ++i) left *= shape[i];
    for (std::size_t i = k + 1; i < n; ++i) right *= shape[i];
    out[k + skip] = std::min({r, left, right});
  }
  if (full_chain) {
    out.front() = 1;
    out.back() = 1;
  }
  return out;
}

double relative_error(const Tensor& reference, const Tensor& approximation) {
  const double ref = frobenius_norm(reference);
  const double diff = frobenius_distance(reference, approximation);
  if (ref == 0.0) return diff;
  return diff / ref;
}

TuckerFactors tucker_hosvd(const Tensor& t, std::span<const std::size_t> ranks) {
  require_finite(t);
  const auto r = clamp_tucker_ranks(ranks, t.shape());
  TuckerFactors f;
  f.source_shape = t.shape();
  f.factors.reserve(t.ndim());
  for (std::size_t n = 0; n < t.ndim(); ++n) {
    const SvdResult s = svd(matricize(t, n));
    f.factors.push_back(leading_columns(s.u, std::min(r[n], s.u.cols())));
  }
  // A column count below r[n] only happens when I_n > prod(other dims); pad
  // the factor to keep the requested layout with orthonormal columns.
  for (std::size_t n = 0; n < t.ndim(); ++n) {
    if (f.factors[n].cols() < r[n]) {
      Matrix padded(f.factors[n].rows(), r[n]);
      for (std::size_t i = 0; i < padded.rows(); ++i)
        for (std::size_t j = 0; j < f.factors[n].cols(); ++j) padded(i, j) = f.factors[n](i, j);
      // Gram-Schmidt against unit vectors to complete the basis.
      std::size_t col = f.factors[n].cols();
      for (std::size_t e = 0; e < padded.rows() && col < r[n]; ++e) {
        std::vector<double> v(padded.rows(), 0.0);
        v[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
          for (std::size_t j = 0; j < col; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < padded.rows(); ++i) dot += padded(i, j) * v[i];
            for (std::size_t i = 0; i < padded.rows(); ++i) v[i] -= dot * padded(i, j);
          }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (std::size_t i = 0; i < padded.rows(); ++i) padded(i, col) = v[i] / norm;
        ++col;
      }
      f.factors[n] = std::move(padded);
    }
  }
  f.core = project_all(t, f.factors, t.ndim());
  return f;
}

Tensor tucker_reconstruct(const TuckerFactors& f) {
  if (f.factors.size() != f.core.ndim() || f.source_shape.size() != f.core.ndim()) {
    throw ShapeError("Tucker factor count does not match core rank");
  }
  Tensor out = f.core;
  for (std::size_t n = 0; n < f.factors.size(); ++n) {
    const Matrix& a = f.factors[n];
    if (a.rows() != f.source_shape[n] || a.cols() != f.core.dim(n)) {
      throw ShapeError("Tucker factor " + std::to_string(n) + " is " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + ", expected " + std::to_string(f.source_shape[n]) + "x" +
                       std::to_string(f.core.dim(n)));
    }
    out = n_mode_product(out, a, n);
  }
  return out;
}

DecompositionReport tucker_report(const Tensor& source, const TuckerFactors& f, std::size_t iterations) {
  DecompositionReport r;
  r.relative_error = relative_error(source, tucker_reconstruct(f));
  r.iterations = iterations;
  r.ranks_used = f.ranks();
  r.compression_ratio = static_cast<double>(source.size()) / static_cast<double>(f.parameter_count());
  return r;
}

std::pair<TuckerFactors, DecompositionReport> tucker_hooi(const Tensor& t, std::span<const std::size_t> ranks,
                                                          const HooiOptions& options) {
  if (options.max_iters < 1) throw ArgumentError("HOOI needs max_iters >= 1");
  if (!(options.tol > 0.0)) throw ArgumentError("HOOI needs tol > 0");

  TuckerFactors best = tucker_hosvd(t, ranks);
  double best_err = relative_error(t, tucker_reconstruct(best));
  const auto r = best.ranks();

  std::vector<Matrix> factors = best.factors;
  std::size_t iterations = 0;
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    iterations = it;
    for (std::size_t n = 0; n < t.ndim(); ++n) {
      const SvdResult s = svd(matricize(project_all(t, factors, n), n));
      if (s.u.cols() >= r[n]) factors[n] = leading_columns(s.u, r[n]);
    }
    TuckerFactors candidate{project_all(t, factors, t.ndim()), factors, t.shape()};
    const double err = relative_error(t, tucker_reconstruct(candidate));
    const double improvement = best_err - err;
    if (err < best_err) {
      best = std::move(candidate);
      best_err = err;
    }
    if (improvement < options.tol) break;
  }
  DecompositionReport report = tucker_report(t, best, iterations);
  return {std::move(best), std::move(report)};
}

std::pair<TTFactors, DecompositionReport> tt_svd(const Tensor& t, std::span<const std::size_t> max_ranks,
                                                 double energy_fraction) {
  require_finite(t);
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) {
    throw ArgumentError("energy fraction must lie in (0, 1]");
  }
  const auto& shape = t.shape();
  const std::size_t n = shape.size();
  auto clamped = clamp_tt_ranks(max_ranks, shape);
  if (clamped.size() == n + 1) clamped = std::vector<std::size_t>(clamped.begin() + 1, clamped.end() - 1);

  TTFactors f;
  f.ranks.assign(1, 1);
  DecompositionReport report;

  // Remainder carried between steps: (r_k · I_k) × (∏_{j>k} I_j) after reshape.
  std::vector<double> rest(t.values());
  std::size_t rank = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t rows = rank * shape[k];
    const std::size_t cols = rest.size() / rows;
    const SvdResult s = svd(Matrix(rows, cols, std::move(rest)));
    std::size_t next = std::min(clamped[k], s.singular_values.size());
    next = std::min(next, energy_rank(s.singular_values, energy_fraction));
    next = std::max<std::size_t>(next, 1);
    report.truncation_residuals.push_back(std::sqrt(discarded_energy(s.singular_values, next)));

    std::vector<double> core(rows * next);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < next; ++j) core[i * next + j] = s.u(i, j);
    f.cores.emplace_back(Shape{rank, shape[k], next}, std::move(core));

    rest.assign(next * cols, 0.0);
    for (std::size_t i = 0; i < next; ++i)
      for (std::size_t j = 0; j < cols; ++j) rest[i * cols + j] = s.singular_values[i] * s.vt(i, j);
    rank = next;
    f.ranks.push_back(rank);
  }
  f.cores.emplace_back(Shape{rank, shape[n - 1], 1}, std::move(rest));
  f.ranks.push_back(1);

  report.relative_error = relative_error(t, tt_reconstruct(f));
  report.iterations = 1;
  report.ranks_used = f.ranks;
  report.compression_ratio = static_cast<double>(t.size()) / static_cast<double>(f.parameter_count());
  return {std::move(f), std::move(report)};
}

Tensor tt_reconstruct(const TTFactors& f) {
  if (f.cores.empty()) throw ShapeError("TT factorization has no cores");
  if (f.ranks.size() != f.cores.size() + 1 || f.ranks.front() != 1 || f.ranks.back() != 1) {
    throw ShapeError("TT rank chain must have N+1 entries with unit boundaries");
  }
  Shape out_shape;
  for (std::size_t k = 0; k < f.cores.size(); ++k) {
    const Tensor& c = f.cores[k];
    if (c.ndim() != 3 || c.dim(0) != f.ranks[k] || c.dim(2) != f.ranks[k + 1]) {
      throw ShapeError("TT core " + std::to_string(k) + " has shape " + shape_string(c.shape()) +
                       " which breaks the rank chain");
    }
    out_shape.push_back(c.dim(1));
  }

  // Running product: (∏ I_0..I_k) × r_{k+1}, row-major.
  std::vector<double> acc(f.cores[0].values());
  std::size_t lead = f.cores[0].dim(1);
  for (std::size_t k = 1; k < f.cores.size(); ++k) {
    const Tensor& c = f.cores[k];
    const std::size_t r_in = c.dim(0), extent = c.dim(1), r_out = c.dim(2);
    std::vector<double> next(lead * extent * r_out, 0.0);
    const auto core = c.data();
    for (std::size_t l = 0; l < lead; ++l)
      for (std::size_t a = 0; a < r_in; ++a) {
        const double w = acc[l * r_in + a];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < extent; ++i) {
          double* dst = &next[(l * extent + i) * r_out];
          const double* src = &core[(a * extent + i) * r_out];
          for (std::size_t b = 0; b < r_out; ++b) dst[b] += w * src[b];
        }
      }
    acc = std::move(next);
    lead *= extent;
  }
  return Tensor(std::move(out_shape), std::move(acc));
}

}  // namespace tensorial
