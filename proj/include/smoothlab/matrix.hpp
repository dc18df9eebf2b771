#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace smoothlab {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Every kernel in this library works on small dense matrices, so storage is a
/// single contiguous vector and all products are plain loops. Row-wise
/// operations run the same instruction sequence for every row, which keeps
/// results for bitwise-identical rows bitwise identical.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const Vector& values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  // Bitwise comparison of shape and entries.
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& a);

/// Adds `v` to every row.
Matrix add_row_vector(const Matrix& a, std::span<const double> v);
Matrix relu(const Matrix& a);
Matrix permute_rows(const Matrix& a, std::span<const std::size_t> perm);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace smoothlab
