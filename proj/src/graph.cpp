#include "ignn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ignn/error.hpp"

namespace ignn {

SparseGraph::SparseGraph(std::size_t n, std::vector<Edge> entries) : n_(n) {
  for (const Edge& e : entries) {
    if (e.row >= n || e.col >= n) {
      throw DomainError("SparseGraph: entry (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ") outside " + std::to_string(n) + " nodes");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Edge& a, const Edge& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_ptr_.assign(n + 1, 0);
  col_idx_.reserve(entries.size());
  values_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col) {
      throw DomainError("SparseGraph: duplicate entry (" + std::to_string(entries[i].row) + "," +
                        std::to_string(entries[i].col) + ")");
    }
    ++row_ptr_[entries[i].row + 1];
    col_idx_.push_back(entries[i].col);
    values_.push_back(entries[i].weight);
  }
  std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
}

SparseGraph SparseGraph::undirected(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<Edge> both;
  both.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    both.push_back(e);
    if (e.row != e.col) both.push_back(Edge{e.col, e.row, e.weight});
  }
  return SparseGraph(n, std::move(both));
}

double SparseGraph::at(std::size_t r, std::size_t c) const {
  if (r >= n_) return 0.0;
  const auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  const auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

std::vector<Edge> SparseGraph::entries() const {
  std::vector<Edge> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      out.push_back(Edge{r, col_idx_[k], values_[k]});
  return out;
}

std::size_t SparseGraph::offdiag_nnz() const {
  std::size_t count = 0;
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (col_idx_[k] != r) ++count;
  return count;
}

bool SparseGraph::is_symmetric(double tol) const {
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (std::abs(values_[k] - at(col_idx_[k], r)) > tol) return false;
  return true;
}

Matrix SparseGraph::to_dense() const {
  Matrix d(n_, n_);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
  return d;
}

Matrix spmm(const SparseGraph& a, const Matrix& x) {
  if (x.rows() != a.n()) {
    throw ShapeError("spmm: graph with " + std::to_string(a.n()) + " nodes times " +
                     x.shape_string());
  }
  const std::size_t m = x.cols();
  Matrix y(a.n(), m);
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& vals = a.values();
  for (std::size_t r = 0; r < a.n(); ++r) {
    double* yr = y.data() + r * m;
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const double w = vals[k];
      const double* xr = x.data() + ci[k] * m;
      for (std::size_t j = 0; j < m; ++j) yr[j] += w * xr[j];
    }
  }
  return y;
}

Matrix spmm_transposed(const SparseGraph& a, const Matrix& x) {
  if (x.rows() != a.n()) {
    throw ShapeError("spmm_transposed: graph with " + std::to_string(a.n()) + " nodes times " +
                     x.shape_string());
  }
  const std::size_t m = x.cols();
  Matrix y(a.n(), m);
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& vals = a.values();
  for (std::size_t r = 0; r < a.n(); ++r) {
    const double* xr = x.data() + r * m;
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const double w = vals[k];
      double* yc = y.data() + ci[k] * m;
      for (std::size_t j = 0; j < m; ++j) yc[j] += w * xr[j];
    }
  }
  return y;
}

SparseGraph normalize_adjacency(const SparseGraph& a) {
  const std::size_t n = a.n();
  std::vector<double> degree(n, 1.0);
  std::vector<double> diag(n, 1.0);
  std::vector<Edge> entries;
  entries.reserve(a.nnz() + n);
  for (const Edge& e : a.entries()) {
    if (e.weight < 0.0) {
      throw DomainError("normalize_adjacency: negative weight at (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ")");
    }
    degree[e.row] += e.weight;
    if (e.row == e.col) {
      diag[e.row] += e.weight;
    } else {
      entries.push_back(e);
    }
  }
  for (std::size_t i = 0; i < n; ++i) entries.push_back(Edge{i, i, diag[i]});
  for (Edge& e : entries) e.weight /= std::sqrt(degree[e.row] * degree[e.col]);
  return SparseGraph(n, std::move(entries));
}

SparseGraph sparsify(const SparseGraph& a_hat, double keep_fraction, std::uint64_t /*seed*/) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw DomainError("sparsify: keep_fraction must lie in (0, 1], got " +
                      std::to_string(keep_fraction));
  }
  std::vector<Edge> self_loops;
  std::vector<Edge> offdiag;
  for (const Edge& e : a_hat.entries()) (e.row == e.col ? self_loops : offdiag).push_back(e);

  const double target = keep_fraction * static_cast<double>(offdiag.size());
  // Guard against products like 0.3 * 10 landing just above an integer.
  auto keep = static_cast<std::size_t>(std::ceil(target - 1e-9));
  if (target > 0.0 && keep == 0) keep = 1;
  std::stable_sort(offdiag.begin(), offdiag.end(), [](const Edge& a, const Edge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  offdiag.resize(std::min(keep, offdiag.size()));

  std::vector<Edge> out = self_loops;
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  kept.reserve(2 * offdiag.size());
  for (const Edge& e : offdiag) {
    kept.emplace_back(e.row, e.col);
    kept.emplace_back(e.col, e.row);
  }
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  for (const auto& [r, c] : kept) {
    // The reverse direction may be absent in a non-symmetric input.
    double w = a_hat.at(r, c);
    if (w == 0.0) w = a_hat.at(c, r);
    out.push_back(Edge{r, c, w});
  }
  return SparseGraph(a_hat.n(), std::move(out));
}

SparseGraph row_normalize(const SparseGraph& a) {
  std::vector<Edge> entries = a.entries();
  std::vector<double> rowsum(a.n(), 0.0);
  for (const Edge& e : entries) rowsum[e.row] += e.weight;
  for (Edge& e : entries)
    if (rowsum[e.row] != 0.0) e.weight /= rowsum[e.row];
  return SparseGraph(a.n(), std::move(entries));
}

double spectral_norm_estimate(const SparseGraph& a, int iterations) {
  if (iterations < 1) throw DomainError("spectral_norm_estimate: iterations must be >= 1");
  const std::size_t n = a.n();
  if (n == 0 || std::all_of(a.values().begin(), a.values().end(), [](double v) { return v == 0.0; }))
    return 0.0;
  Matrix v(n, 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * std::sin(static_cast<double>(i + 1));
  v *= 1.0 / frobenius_norm(v);
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Matrix w = spmm_transposed(a, spmm(a, v));
    const double nw = frobenius_norm(w);
    if (nw == 0.0) break;
    // ||M v|| with M = A^T A PSD and v = M^k v0 / ||M^k v0|| never decreases.
    estimate = std::max(estimate, std::sqrt(nw));
    v = std::move(w);
    v *= 1.0 / nw;
  }
  return estimate;
}

namespace ad {

Var spmm(Tape& t, const SparseGraph& a, Var x) {
  const SparseGraph* graph = &a;
  return t.record(ignn::spmm(a, t.value(x)), {x}, [graph, x](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(x, spmm_transposed(*graph, g));
  });
}

}  // namespace ad

}  // namespace ignn
