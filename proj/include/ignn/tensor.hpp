#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ignn {

/// Row-major dense matrix of doubles. Vectors are 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);
void require_finite(const Matrix& m, const char* what);

/// C = A B.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// C = A B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// X W + 1 b, with b a 1 x W.cols row vector broadcast over rows.
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// y += s * x
void axpy(double s, const Matrix& x, Matrix& y);

double dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double sum(const Matrix& a);
double max_abs(const Matrix& a);
/// Column sums as a 1 x cols row vector.
Matrix column_sums(const Matrix& a);
/// Column means as a 1 x cols row vector.
Matrix column_means(const Matrix& a);

/// Numerically stable softmax; output entries are positive and sum to one.
std::vector<double> softmax(std::span<const double> v);

Matrix tanh(const Matrix& a);
Matrix relu(const Matrix& a);
Matrix sigmoid(const Matrix& a);

/// Largest singular value of a dense matrix by power iteration on A^T A.
/// Stops early once the estimate changes by less than `rel_tol` relatively.
double spectral_norm(const Matrix& a, int max_iterations = 2000, double rel_tol = 1e-15);

/// 64-bit FNV-1a over the raw bytes of the matrix (shape included).
std::uint64_t fingerprint(const Matrix& m, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace ignn
