#include "ignn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "ignn/error.hpp"

namespace ignn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite entry");
}

namespace {

// Row-streaming product that skips zero entries of A; bag-of-words features
// are mostly zero.
void matmul_sparse_rows(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// Dense product accumulating a 4 x 32 tile of C in registers. Each entry is
// summed over p in the same order as the row-streaming kernel.
void matmul_dense(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                  std::size_t m) {
  constexpr std::size_t R = 4, J = 32;
  std::size_t i = 0;
  for (; i + R <= n; i += R) {
    std::size_t j0 = 0;
    for (; j0 + J <= m; j0 += J) {
      double acc[R][J] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * m + j0;
        for (std::size_t r = 0; r < R; ++r) {
          const double x = a[(i + r) * k + p];
          for (std::size_t j = 0; j < J; ++j) acc[r][j] += x * bp[j];
        }
      }
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < J; ++j) c[(i + r) * m + j0 + j] = acc[r][j];
    }
    if (j0 < m) {
      for (std::size_t r = 0; r < R; ++r) {
        double* ci = c + (i + r) * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = a[(i + r) * k + p];
          const double* bp = b + p * m;
          for (std::size_t j = j0; j < m; ++j) ci[j] += x * bp[j];
        }
      }
    }
  }
  if (i < n) matmul_sparse_rows(a + i * k, b, c + i * m, n - i, k, m);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  const auto nonzero = static_cast<std::size_t>(
      std::count_if(a.values().begin(), a.values().end(), [](double v) { return v != 0.0; }));
  if (2 * nonzero < a.size()) {
    matmul_sparse_rows(a.data(), b.data(), c.data(), n, k, m);
  } else {
    matmul_dense(a.data(), b.data(), c.data(), n, k, m);
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + a.shape_string() + "^T x " + b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(k, m);
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = a.data() + r * k;
    const double* br = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double ari = ar[i];
      if (ari == 0.0) continue;
      double* ci = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += ari * br[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape_string() + " x " + b.shape_string() + "^T");
  }
  // Row-streaming i-k-j order vectorises far better than dot products.
  return matmul(a, transpose(b));
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ShapeError("affine: X" + x.shape_string() + " W" + w.shape_string() + " b" +
                     b.shape_string());
  }
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  require_finite(out, "affine");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

void axpy(double s, const Matrix& x, Matrix& y) {
  require_same_shape(x, y, "axpy");
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += s * xs[i];
}

double dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += row[j];
  }
  return s;
}

Matrix column_means(const Matrix& a) {
  Matrix s = column_sums(a);
  if (a.rows() > 0) s *= 1.0 / static_cast<double>(a.rows());
  return s;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw DomainError("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) throw DomainError("softmax: non-finite input");
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return out;
}

Matrix tanh(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

Matrix relu(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix sigmoid(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

double spectral_norm(const Matrix& a, int max_iterations, double rel_tol) {
  if (a.empty() || max_abs(a) == 0.0) return 0.0;
  const std::size_t n = a.cols();
  Matrix v(n, 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * std::sin(static_cast<double>(i + 1));
  v *= 1.0 / frobenius_norm(v);

  double estimate = 0.0;
  for (int it = 0; it < std::max(1, max_iterations); ++it) {
    Matrix w = matmul_tn(a, matmul(a, v));
    const double nw = frobenius_norm(w);
    if (nw == 0.0) {
      // Start vector fell in the null space; restart on the heaviest column.
      std::size_t best = 0;
      double best_norm = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
        if (s > best_norm) best_norm = s, best = j;
      }
      v.fill(0.0);
      v[best] = 1.0;
      continue;
    }
    const double next = std::sqrt(nw);
    v = std::move(w);
    v *= 1.0 / nw;
    const bool done = std::abs(next - estimate) <= rel_tol * next;
    estimate = std::max(estimate, next);
    if (done) break;
  }
  return estimate;
}

std::uint64_t fingerprint(const Matrix& m, std::uint64_t h) {
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t r = m.rows(), c = m.cols();
  mix(&r, sizeof r);
  mix(&c, sizeof c);
  mix(m.data(), m.size() * sizeof(double));
  return h;
}

}  // namespace ignn
