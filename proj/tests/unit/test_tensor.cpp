#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "ignn/error.hpp"
#include "support.hpp"

using namespace ignn;
using ignn::test::max_rel_diff;
using ignn::test::naive_matmul;

namespace {

/// Cyclic Jacobi rotations on a symmetric matrix; returns the eigenvalues.
std::vector<double> jacobi_eigenvalues(Matrix s) {
  const std::size_t n = s.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(s(p, q)) < 1e-300) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double skp = s(k, p), skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double spk = s(p, k), sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = s(i, i);
  return ev;
}

}  // namespace

TEST(Tensor, MatmulMatchesNaiveOnDenseAndSparseInputs) {
  Rng rng(1);
  // Shapes exercise the tiled kernel, its column tail and its row tail.
  for (auto [n, k, m] : {std::tuple{9, 7, 70}, std::tuple{4, 128, 32}, std::tuple{13, 5, 3}, std::tuple{1, 1, 1}}) {
    Matrix a = rng.uniform_matrix(n, k, -1, 1);
    const Matrix b = rng.uniform_matrix(k, m, -1, 1);
    EXPECT_LT(max_rel_diff(matmul(a, b), naive_matmul(a, b)), 1e-13);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (i % 3) a[i] = 0.0;
    EXPECT_LT(max_rel_diff(matmul(a, b), naive_matmul(a, b)), 1e-13);
  }
}

TEST(Tensor, TransposedProductsMatchExplicitTranspose) {
  Rng rng(2);
  const Matrix a = rng.uniform_matrix(6, 4, -1, 1);
  const Matrix b = rng.uniform_matrix(6, 5, -1, 1);
  const Matrix c = rng.uniform_matrix(3, 4, -1, 1);
  EXPECT_LT(max_rel_diff(matmul_tn(a, b), naive_matmul(transpose(a), b)), 1e-13);
  EXPECT_LT(max_rel_diff(matmul_nt(a, c), naive_matmul(a, transpose(c))), 1e-13);
}

TEST(Tensor, ShapeMismatchesThrow) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(Matrix(2, 2) + Matrix(2, 3), ShapeError);
  EXPECT_THROW(affine(Matrix(2, 3), Matrix(3, 2), Matrix(1, 3)), ShapeError);
}

TEST(Tensor, SoftmaxIsStableAndNormalised) {
  const std::vector<double> v{1000.0, 1001.0, -1000.0};
  const auto p = softmax(v);
  double s = 0.0;
  for (double x : p) {
    EXPECT_TRUE(std::isfinite(x));
    EXPECT_GE(x, 0.0);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_NEAR(p[1] / p[0], std::exp(1.0), 1e-12);
}

TEST(Tensor, SpectralNormAgreesWithDenseEigenOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = rng.uniform_matrix(7, 5, -1, 1);
    const auto ev = jacobi_eigenvalues(matmul_tn(a, a));
    const double oracle = std::sqrt(*std::max_element(ev.begin(), ev.end()));
    EXPECT_NEAR(spectral_norm(a), oracle, 1e-9 * oracle);
  }
  EXPECT_EQ(spectral_norm(Matrix(3, 3)), 0.0);
}

TEST(Tensor, FingerprintTracksValuesAndShape) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = a;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b(1, 1) = std::nextafter(4.0, 5.0);
  EXPECT_NE(fingerprint(a), fingerprint(b));
  EXPECT_NE(fingerprint(Matrix(1, 4)), fingerprint(Matrix(2, 2)));
}

TEST(Tensor, NonFiniteValuesAreDetected) {
  Matrix a(2, 2);
  EXPECT_TRUE(a.all_finite());
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(a.all_finite());
  EXPECT_THROW(require_finite(a, "test"), NumericError);
}
