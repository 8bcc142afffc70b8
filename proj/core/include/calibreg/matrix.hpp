#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace calibreg {

/// Dense row-major matrix of doubles. Batches are stored one sample per row,
/// so a batch of m samples with d features is an m x d matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  /// Builds a matrix from nested brace lists; all rows must have equal length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::vector<double> row_copy(std::size_t r) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Standard matrix product. Throws std::invalid_argument naming both shapes
/// when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

/// a^T * b without materializing the transpose (gradient accumulation path).
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose (backprop through a layer).
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

bool is_finite(const Matrix& a);

/// "(r x c)" -- used by shape errors.
std::string shape_string(const Matrix& a);

}  // namespace calibreg
