#include "tensorial/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tensorial/errors.hpp"

namespace tensorial {

namespace {

void validate_shape(std::span<const std::size_t> shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor shape " + shape_string(shape) + " has a zero extent");
  }
}

// Splits the shape around `mode` into (prod before, extent, prod after).
struct ModeSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

ModeSplit split_at(std::span<const std::size_t> shape, std::size_t mode) {
  ModeSplit s{1, shape[mode], 1};
  for (std::size_t i = 0; i < mode; ++i) s.outer *= shape[i];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t shape_size(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                     " elements, got " + std::to_string(data_.size()));
  }
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ArgumentError("index rank " + std::to_string(index.size()) + " does not match tensor rank " +
                        std::to_string(shape_.size()));
  }
  std::size_t off = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= shape_[k]) throw ArgumentError("index out of range on axis " + std::to_string(k));
    off = off * shape_[k] + index[k];
  }
  return off;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                     std::to_string(rows * cols) + " elements, got " + std::to_string(data_.size()));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dimensions differ: " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* row = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data()[k * b.cols()];
      for (std::size_t j = 0; j < b.cols(); ++j) row[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix leading_columns(const Matrix& m, std::size_t count) {
  if (count > m.cols()) throw ArgumentError("requested more columns than the matrix has");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, c);
  return out;
}

Tensor reshape(const Tensor& t, Shape new_shape) {
  if (shape_size(new_shape) != t.size()) {
    throw ShapeError("cannot reshape " + shape_string(t.shape()) + " to " + shape_string(new_shape));
  }
  return Tensor(std::move(new_shape), t.values());
}

Tensor permute_axes(const Tensor& t, std::span<const std::size_t> order) {
  const std::size_t n = t.ndim();
  if (order.size() != n) throw ArgumentError("permutation length does not match tensor rank");
  std::vector<bool> seen(n, false);
  for (std::size_t a : order) {
    if (a >= n || seen[a]) throw ArgumentError("axis order is not a permutation of 0..N-1");
    seen[a] = true;
  }

  Shape out_shape(n);
  for (std::size_t k = 0; k < n; ++k) out_shape[k] = t.dim(order[k]);

  // Input strides, reordered to follow the output axes.
  std::vector<std::size_t> in_strides(n);
  std::size_t s = 1;
  for (std::size_t k = n; k-- > 0;) {
    in_strides[k] = s;
    s *= t.dim(k);
  }
  std::vector<std::size_t> stride(n);
  for (std::size_t k = 0; k < n; ++k) stride[k] = in_strides[order[k]];

  std::vector<double> out(t.size());
  std::vector<std::size_t> idx(n, 0);
  std::size_t src = 0;
  const auto in = t.data();
  for (std::size_t dst = 0; dst < out.size(); ++dst) {
    out[dst] = in[src];
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < out_shape[k]) {
        src += stride[k];
        break;
      }
      src -= stride[k] * (out_shape[k] - 1);
      idx[k] = 0;
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor permute_axes(const Tensor& t, std::initializer_list<std::size_t> order) {
  return permute_axes(t, std::span<const std::size_t>(order.begin(), order.size()));
}

Matrix matricize(const Tensor& t, std::size_t mode) {
  if (mode >= t.ndim()) throw ArgumentError("mode " + std::to_string(mode) + " out of range");
  const auto [outer, extent, inner] = split_at(t.shape(), mode);
  Matrix m(extent, outer * inner);
  const auto in = t.data();
  for (std::size_t l = 0; l < outer; ++l)
    for (std::size_t i = 0; i < extent; ++i)
      for (std::size_t r = 0; r < inner; ++r) m(i, l * inner + r) = in[(l * extent + i) * inner + r];
  return m;
}

Tensor dematricize(const Matrix& m, std::size_t mode, std::span<const std::size_t> shape) {
  if (mode >= shape.size()) throw ArgumentError("mode " + std::to_string(mode) + " out of range");
  const auto [outer, extent, inner] = split_at(shape, mode);
  if (m.rows() != extent || m.cols() != outer * inner) {
    throw ShapeError("matrix does not match the mode-" + std::to_string(mode) + " unfolding of " +
                     shape_string(shape));
  }
  std::vector<double> out(shape_size(shape));
  for (std::size_t l = 0; l < outer; ++l)
    for (std::size_t i = 0; i < extent; ++i)
      for (std::size_t r = 0; r < inner; ++r) out[(l * extent + i) * inner + r] = m(i, l * inner + r);
  return Tensor(Shape(shape.begin(), shape.end()), std::move(out));
}

Tensor n_mode_product(const Tensor& t, const Matrix& m, std::size_t mode) {
  if (mode >= t.ndim()) throw ArgumentError("mode " + std::to_string(mode) + " out of range");
  if (m.cols() != t.dim(mode)) {
    throw ShapeError("mode-" + std::to_string(mode) + " product needs a matrix with " +
                     std::to_string(t.dim(mode)) + " columns, got " + std::to_string(m.cols()));
  }
  const auto [outer, extent, inner] = split_at(t.shape(), mode);
  const std::size_t out_extent = m.rows();
  Shape out_shape = t.shape();
  out_shape[mode] = out_extent;
  std::vector<double> out(outer * out_extent * inner, 0.0);
  const auto in = t.data();
  for (std::size_t l = 0; l < outer; ++l) {
    for (std::size_t j = 0; j < out_extent; ++j) {
      double* dst = &out[(l * out_extent + j) * inner];
      for (std::size_t i = 0; i < extent; ++i) {
        const double w = m(j, i);
        const double* src = &in[(l * extent + i) * inner];
        for (std::size_t r = 0; r < inner; ++r) dst[r] += w * src[r];
      }
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

double frobenius_norm(const Tensor& t) {
  double sum = 0.0;
  for (double v : t.data()) sum += v * v;
  return std::sqrt(sum);
}

double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (double v : m.data()) sum += v * v;
  return std::sqrt(sum);
}

double frobenius_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace tensorial
