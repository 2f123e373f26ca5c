#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ignn/autodiff.hpp"
#include "ignn/tensor.hpp"

namespace ignn {

struct Edge {
  std::size_t row;
  std::size_t col;
  double weight = 1.0;
};

/// Square sparse matrix in compressed sparse row form. Column indices within a
/// row are sorted ascending and unique. Immutable after construction.
class SparseGraph {
 public:
  SparseGraph() = default;
  /// Builds from a list of directed entries. Duplicate (row, col) pairs and
  /// out-of-range indices are rejected.
  SparseGraph(std::size_t n, std::vector<Edge> entries);
  /// Each undirected edge is stored in both directions; self loops once.
  static SparseGraph undirected(std::size_t n, const std::vector<Edge>& edges);

  std::size_t n() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return col_idx_.size(); }
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Entry (r, c), zero when absent.
  double at(std::size_t r, std::size_t c) const;
  std::vector<Edge> entries() const;
  /// Number of stored entries off the diagonal.
  std::size_t offdiag_nnz() const;
  bool is_symmetric(double tol = 1e-12) const;
  Matrix to_dense() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Y = A X.
Matrix spmm(const SparseGraph& a, const Matrix& x);
/// Y = A^T X.
Matrix spmm_transposed(const SparseGraph& a, const Matrix& x);

/// D^-1/2 (A + I) D^-1/2 with D_ii = 1 + sum_j A_ij.
SparseGraph normalize_adjacency(const SparseGraph& a);

/// Keeps every self loop plus the ceil(keep_fraction * offdiag) heaviest
/// off-diagonal entries (ties broken by ascending (row, col)), then restores
/// symmetry by keeping an edge when either direction survived. Weights are
/// carried over unchanged. `seed` is accepted for operators that sample; the
/// top-weight rule is deterministic and ignores it.
SparseGraph sparsify(const SparseGraph& a_hat, double keep_fraction, std::uint64_t seed = 0);

/// D^-1 A; rows with no entries stay empty.
SparseGraph row_normalize(const SparseGraph& a);

/// Power-iteration estimate of the largest singular value.
double spectral_norm_estimate(const SparseGraph& a, int iterations);

namespace ad {
/// A X with A held fixed. `a` must outlive the tape's backward pass.
Var spmm(Tape& t, const SparseGraph& a, Var x);
}  // namespace ad

}  // namespace ignn
