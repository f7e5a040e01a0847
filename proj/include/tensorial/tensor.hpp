#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tensorial {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

/// Dense N-dimensional array of doubles in row-major order (last index fastest).
/// Every axis has extent >= 1 and there is at least one axis.
class Tensor {
 public:
  /// Single zero element of shape [1].
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::size_t offset(std::span<const std::size_t> index) const;
  double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  double& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }
  double& at(std::initializer_list<std::size_t> index) {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
/// Leading `count` columns of `m`.
Matrix leading_columns(const Matrix& m, std::size_t count);

Tensor reshape(const Tensor& t, Shape new_shape);
Tensor permute_axes(const Tensor& t, std::span<const std::size_t> order);
Tensor permute_axes(const Tensor& t, std::initializer_list<std::size_t> order);

/// Mode-n unfolding. Columns follow the row-major order of the remaining axes
/// taken in ascending axis index.
Matrix matricize(const Tensor& t, std::size_t mode);
Tensor dematricize(const Matrix& m, std::size_t mode, std::span<const std::size_t> shape);

/// t ×_mode m, with m of shape [J, shape[mode]].
Tensor n_mode_product(const Tensor& t, const Matrix& m, std::size_t mode);

double frobenius_norm(const Tensor& t);
double frobenius_norm(const Matrix& m);
/// ||a - b||_F; shapes must match.
double frobenius_distance(const Tensor& a, const Tensor& b);

}  // namespace tensorial
