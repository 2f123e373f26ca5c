#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "ignn/dataset.hpp"
#include "ignn/graph.hpp"
#include "ignn/model.hpp"
#include "ignn/rng.hpp"
#include "ignn/tensor.hpp"

namespace ignn::test {

inline std::string data_dir(const std::string& name) { return std::string(IGNN_TEST_DATA) + "/" + name; }

/// Per-process scratch path under the system temp directory.
inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ignn_" + std::to_string(::getpid()) + "_" + name)).string();
}

/// Naive triple loop, the reference for every product kernel.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

/// Random undirected graph on n nodes with about `edges` edges.
inline SparseGraph random_graph(std::size_t n, std::size_t edges, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> list;
  std::vector<char> used(n * n, 0);
  for (std::size_t t = 0; t < 4 * edges && list.size() < edges; ++t) {
    const std::size_t u = rng.below(n), v = rng.below(n);
    if (u == v || used[u * n + v]) continue;
    used[u * n + v] = used[v * n + u] = 1;
    list.push_back({u, v, 1.0});
  }
  return SparseGraph::undirected(n, list);
}

}  // namespace ignn::test
