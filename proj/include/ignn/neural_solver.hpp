#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ignn/autodiff.hpp"
#include "ignn/graph.hpp"
#include "ignn/model.hpp"
#include "ignn/solvers.hpp"

namespace ignn {

enum class UpdateRule {
  /// Z' = sum_i alpha_i (Z_i + beta G_i)
  ClassicAA,
  /// Z' = beta sum_i G_i + sum_i alpha_i Z_i
  LiteralAlg2,
};

UpdateRule parse_update_rule(const std::string& name);
const char* update_rule_name(UpdateRule r);

struct NeuralSolverOptions {
  std::size_t m = 5;
  std::size_t K = 10;
  std::size_t p = 8;
  std::size_t init_hidden = 8;
  std::size_t predictor_hidden = 16;
  double beta_max = 1.5;
  double keep_fraction = 0.25;
  UpdateRule update_rule = UpdateRule::ClassicAA;
};

struct Coefficients {
  std::vector<double> alpha;
  double beta = 1.0;
};

/// Replaces the predictor's output; receives the step index k and m_k.
using CoefficientOverride = std::function<Coefficients(std::size_t k, std::size_t m_k)>;

/// Variables produced by unrolling the solver on a tape.
struct Unrolled {
  ad::Var z0;
  /// Z^[1] .. Z^[K]
  std::vector<ad::Var> iterates;
  /// sum_i alpha_i G_i at steps 0 .. K-1
  std::vector<ad::Var> mixed_residuals;
  std::vector<ad::Var> alphas;
  std::vector<ad::Var> betas;
};

/// RMS of the entries of g, or 1 when g is zero.
double residual_scale(const Matrix& g);

/// Learned fixed-point solver: an initializer h(X), a per-node compressor of
/// residual history, and a one-layer graph network on the sparsified graph
/// that predicts the mixing weights alpha and the step size beta.
class NeuralSolver final : public FixedPointSolver {
 public:
  NeuralSolver() = default;
  static NeuralSolver random(std::size_t d, std::size_t hidden, const NeuralSolverOptions& options,
                             std::uint64_t seed);

  const NeuralSolverOptions& options() const noexcept { return options_; }
  void set_update_rule(UpdateRule rule) { options_.update_rule = rule; }
  void set_coefficient_override(CoefficientOverride hook) { override_ = std::move(hook); }

  /// Parameters in a fixed order, with stable names used for checkpoints.
  std::vector<std::pair<std::string, Matrix*>> parameters();
  std::vector<std::pair<std::string, const Matrix*>> parameters() const;
  std::size_t parameter_count() const;
  std::uint64_t fingerprint() const;

  Matrix init_estimate(const Matrix& x) const;
  /// Per-node compression tanh((G / scale) C + c) of one residual, n x p.
  /// The window is compressed with the RMS of its newest residual as scale,
  /// so the predictor sees the same input range at every tolerance.
  Matrix compress(const Matrix& g, double scale = 1.0) const;
  /// Coefficients from the compressed window (oldest first, m_k + 1 entries).
  Coefficients predict_compressed(const std::vector<Matrix>& compressed, const SparseGraph& a_s) const;
  /// Compresses then predicts; `window` holds raw residuals, oldest first.
  Coefficients predict_coeffs(const std::vector<Matrix>& window, const SparseGraph& a_s,
                              std::size_t m_k) const;

  /// Row-normalised sparsified graph the predictor runs on.
  SparseGraph predictor_graph(const SparseGraph& a_hat) const;

  std::string name() const override { return "neural"; }
  /// Starts from h(X) unless `z0` is non-empty. `max_iter` is the number of
  /// updates (K_run); the loop exits early once the residual reaches tol.
  SolveTrace solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                   std::size_t max_iter) const override;

  /// Records K update steps on `tape`. `params` are leaves holding the
  /// current parameter values in `parameters()` order; `a_s` must outlive
  /// the tape.
  Unrolled unroll(ad::Tape& tape, const std::vector<ad::Var>& params, const FixedPointProblem& problem,
                  const SparseGraph& a_s, std::size_t steps) const;

  void save(const std::string& path) const;
  static NeuralSolver load(const std::string& path);

 private:
  const SparseGraph& cached_predictor_graph(const SparseGraph& a_hat) const;

  NeuralSolverOptions options_;
  Matrix init_w1_, init_b1_, init_w2_, init_b2_;
  Matrix comp_w_, comp_b_;
  Matrix gcn_w_, gcn_b_;
  Matrix alpha_w_, alpha_b_;
  Matrix beta_w_, beta_b_;
  CoefficientOverride override_;

  struct GraphCache {
    const SparseGraph* source = nullptr;
    std::uint64_t key = 0;
    SparseGraph graph;
  };
  mutable std::shared_ptr<GraphCache> graph_cache_;
};

}  // namespace ignn
