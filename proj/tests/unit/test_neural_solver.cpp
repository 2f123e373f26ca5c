#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ignn/dataset.hpp"
#include "ignn/error.hpp"
#include "ignn/neural_solver.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ignn;

namespace {

NeuralSolverOptions small_options() {
  NeuralSolverOptions o;
  o.m = 3;
  o.p = 3;
  o.init_hidden = 4;
  o.predictor_hidden = 5;
  o.keep_fraction = 1.0;
  return o;
}

/// Random values in every parameter, biases included, so no symmetry hides a bug.
NeuralSolver scrambled(std::size_t d, std::size_t hidden, const NeuralSolverOptions& o, std::uint64_t seed) {
  NeuralSolver s = NeuralSolver::random(d, hidden, o, seed);
  Rng rng(seed + 100);
  for (auto& [name, m] : s.parameters()) *m = rng.uniform_matrix(m->rows(), m->cols(), -0.8, 0.8);
  return s;
}

const Matrix& param(const NeuralSolver& s, const std::string& name) {
  for (const auto& [n, m] : s.parameters())
    if (n == name) return *m;
  throw std::runtime_error("no parameter " + name);
}

/// Straight-line evaluation of the predictor with dense loops.
Coefficients reference_coeffs(const NeuralSolver& s, const std::vector<Matrix>& window, const Matrix& a_s) {
  const std::size_t n = window[0].rows(), d = window[0].cols();
  const std::size_t p = s.options().p, slots = s.options().m + 1;
  const Matrix &cw = param(s, "compress.w"), &cb = param(s, "compress.b");
  const Matrix &gw = param(s, "gcn.w"), &gb = param(s, "gcn.b");
  const Matrix &aw = param(s, "alpha.w"), &ab = param(s, "alpha.b");
  const Matrix &bw = param(s, "beta.w"), &bb = param(s, "beta.b");
  double ss = 0.0;
  for (std::size_t i = 0; i < window.back().size(); ++i) ss += window.back()[i] * window.back()[i];
  const double rms = std::sqrt(ss / static_cast<double>(window.back().size()));
  Matrix c(n, slots * p);
  for (std::size_t sl = 0; sl < window.size(); ++sl)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        double v = cb(0, j);
        for (std::size_t h = 0; h < d; ++h) v += window[sl](i, h) / rms * cw(h, j);
        c(i, sl * p + j) = std::tanh(v);
      }
  const std::size_t q = gw.cols();
  std::vector<double> pooled(q, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      double v = gb(0, j);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t f = 0; f < slots * p; ++f) v += a_s(i, k) * c(k, f) * gw(f, j);
      pooled[j] += std::tanh(v) / static_cast<double>(n);
    }
  Coefficients out;
  std::vector<double> logits(window.size());
  double beta_logit = bb(0, 0);
  for (std::size_t j = 0; j < q; ++j) beta_logit += pooled[j] * bw(j, 0);
  for (std::size_t sl = 0; sl < window.size(); ++sl) {
    logits[sl] = ab(0, sl);
    for (std::size_t j = 0; j < q; ++j) logits[sl] += pooled[j] * aw(j, sl);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - top));
  for (double l : logits) out.alpha.push_back(l / z);
  out.beta = s.options().beta_max / (1.0 + std::exp(-beta_logit));
  return out;
}

struct Tiny {
  Dataset data = load_dataset(test::data_dir("tiny3"));
  SparseGraph a_hat = normalize_adjacency(data.graph);
  IgnnModel model = IgnnModel::random(2, 4, 2, Activation::Relu, 0.9, 3);
};

}  // namespace

TEST(NeuralSolver, SingleSlotGivesUnitAlpha) {
  const NeuralSolver s = scrambled(3, 4, small_options(), 1);
  Rng rng(1);
  const SparseGraph a_s = s.predictor_graph(normalize_adjacency(test::random_graph(5, 6, 1)));
  const Coefficients c = s.predict_coeffs({rng.uniform_matrix(5, 4, -1, 1)}, a_s, 0);
  EXPECT_EQ(c.alpha, std::vector<double>{1.0});
}

TEST(NeuralSolver, CoefficientsStayOnSimplexWithBoundedBeta) {
  const NeuralSolver s = scrambled(3, 4, small_options(), 2);
  Rng rng(2);
  const SparseGraph a_s = s.predictor_graph(normalize_adjacency(test::random_graph(8, 12, 2)));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m_k = rng.below(4);
    std::vector<Matrix> window;
    for (std::size_t i = 0; i <= m_k; ++i) window.push_back(rng.uniform_matrix(8, 4, -5, 5));
    const Coefficients c = s.predict_coeffs(window, a_s, m_k);
    ASSERT_EQ(c.alpha.size(), m_k + 1);
    EXPECT_NEAR(std::accumulate(c.alpha.begin(), c.alpha.end(), 0.0), 1.0, 1e-12);
    for (double a : c.alpha) EXPECT_GE(a, 0.0);
    EXPECT_GT(c.beta, 0.0);
    EXPECT_LE(c.beta, s.options().beta_max);
  }
}

TEST(NeuralSolver, PredictorMatchesStraightLineOracle) {
  const NeuralSolver s = scrambled(3, 4, small_options(), 3);
  Rng rng(3);
  const SparseGraph a_s = s.predictor_graph(normalize_adjacency(test::random_graph(7, 10, 3)));
  for (std::size_t m_k = 0; m_k <= 3; ++m_k) {
    std::vector<Matrix> window;
    for (std::size_t i = 0; i <= m_k; ++i) window.push_back(rng.uniform_matrix(7, 4, -2, 2));
    const Coefficients got = s.predict_coeffs(window, a_s, m_k);
    const Coefficients want = reference_coeffs(s, window, a_s.to_dense());
    for (std::size_t i = 0; i <= m_k; ++i) EXPECT_NEAR(got.alpha[i], want.alpha[i], 1e-13);
    EXPECT_NEAR(got.beta, want.beta, 1e-13);
  }
}

TEST(NeuralSolver, CoefficientsIgnoreResidualMagnitude) {
  const NeuralSolver s = scrambled(3, 4, small_options(), 4);
  Rng rng(4);
  const SparseGraph a_s = s.predictor_graph(normalize_adjacency(test::random_graph(6, 8, 4)));
  std::vector<Matrix> window{rng.uniform_matrix(6, 4, -1, 1), rng.uniform_matrix(6, 4, -1, 1)};
  const Coefficients base = s.predict_coeffs(window, a_s, 1);
  for (Matrix& g : window) g *= 1e-7;
  const Coefficients tiny = s.predict_coeffs(window, a_s, 1);
  EXPECT_NEAR(tiny.alpha[0], base.alpha[0], 1e-12);
  EXPECT_NEAR(tiny.beta, base.beta, 1e-12);
}

TEST(NeuralSolver, NodeRelabellingLeavesCoefficientsUnchanged) {
  const NeuralSolver s = scrambled(3, 4, small_options(), 5);
  Rng rng(5);
  const SparseGraph a_s = s.predictor_graph(normalize_adjacency(test::random_graph(6, 9, 5)));
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<Edge> moved;
  for (const Edge& e : a_s.entries()) moved.push_back({perm[e.row], perm[e.col], e.weight});
  const SparseGraph permuted(6, moved);
  std::vector<Matrix> window{rng.uniform_matrix(6, 4, -1, 1), rng.uniform_matrix(6, 4, -1, 1),
                             rng.uniform_matrix(6, 4, -1, 1)};
  std::vector<Matrix> window_p;
  for (const Matrix& g : window) {
    Matrix gp(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) gp(perm[i], j) = g(i, j);
    window_p.push_back(gp);
  }
  const Coefficients a = s.predict_coeffs(window, a_s, 2), b = s.predict_coeffs(window_p, permuted, 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.alpha[i], b.alpha[i], 1e-12);
  EXPECT_NEAR(a.beta, b.beta, 1e-12);
}

TEST(NeuralSolver, DegenerateCoefficientsReproducePicard) {
  const Tiny t;
  NeuralSolver s = scrambled(2, 4, small_options(), 6);
  s.set_coefficient_override([](std::size_t, std::size_t m_k) {
    Coefficients c;
    c.alpha.assign(m_k + 1, 0.0);
    c.alpha.back() = 1.0;
    c.beta = 1.0;
    return c;
  });
  FixedPointProblem problem(t.model, t.a_hat, t.data.features);
  const Matrix z0 = s.init_estimate(t.data.features);
  const SolveTrace n = s.solve(problem, Matrix{}, 1e-10, 200);
  const SolveTrace p = picard_solve(problem, z0, 1e-10, 200);
  ASSERT_EQ(n.steps.size(), p.steps.size());
  for (std::size_t k = 0; k < n.steps.size(); ++k) {
    EXPECT_NEAR(n.steps[k].residual, p.steps[k].residual, 1e-12) << k;
  }
  EXPECT_LT(max_abs(n.final_z - p.final_z), 1e-12);
  EXPECT_TRUE(n.converged);
}

TEST(NeuralSolver, UnrollReproducesSolveIterates) {
  const Tiny t;
  for (UpdateRule rule : {UpdateRule::ClassicAA, UpdateRule::LiteralAlg2}) {
    NeuralSolver s = scrambled(2, 4, small_options(), 7);
    s.set_update_rule(rule);
    FixedPointProblem problem(t.model, t.a_hat, t.data.features);
    const SparseGraph a_s = s.predictor_graph(t.a_hat);
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& [name, m] : s.parameters()) leaves.push_back(tape.leaf(*m));
    const Unrolled u = s.unroll(tape, leaves, problem, a_s, 6);
    ASSERT_EQ(u.iterates.size(), 6u);
    const SolveTrace trace = s.solve(problem, Matrix{}, 0.0, 6);
    EXPECT_LT(max_abs(tape.value(u.iterates.back()) - trace.final_z), 1e-12) << update_rule_name(rule);
    EXPECT_LT(max_abs(tape.value(u.z0) - s.init_estimate(t.data.features)), 1e-15);
    EXPECT_NEAR(tape.value(u.betas[3])(0, 0), *trace.steps[3].beta, 1e-12);
  }
}

TEST(NeuralSolver, CheckpointRoundTripIsExact) {
  NeuralSolverOptions o = small_options();
  o.update_rule = UpdateRule::LiteralAlg2;
  o.beta_max = 1.25;
  const NeuralSolver s = scrambled(3, 4, o, 8);
  const std::string path = test::temp_path("solver.bin");
  s.save(path);
  const NeuralSolver back = NeuralSolver::load(path);
  EXPECT_EQ(back.fingerprint(), s.fingerprint());
  EXPECT_EQ(back.options().update_rule, UpdateRule::LiteralAlg2);
  EXPECT_EQ(back.options().beta_max, 1.25);
  EXPECT_EQ(back.options().m, 3u);
  IgnnModel m = IgnnModel::random(3, 4, 2, Activation::Relu, 0.9, 1);
  save_model(m, path);
  EXPECT_THROW(NeuralSolver::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST(NeuralSolver, ParameterBudgetOnCiteseerShape) {
  const IgnnModel model = IgnnModel::random(3703, 128, 6, Activation::Relu, 0.95, 1);
  const NeuralSolver s = NeuralSolver::random(3703, 128, NeuralSolverOptions{}, 1);
  EXPECT_LE(static_cast<double>(s.parameter_count()), 0.10 * static_cast<double>(model.parameter_count()));
}

TEST(NeuralSolver, RejectsBadOptionsAndOverride) {
  NeuralSolverOptions o = small_options();
  o.keep_fraction = 0.0;
  EXPECT_THROW(NeuralSolver::random(2, 4, o, 1), DomainError);
  const Tiny t;
  NeuralSolver s = scrambled(2, 4, small_options(), 9);
  s.set_coefficient_override([](std::size_t, std::size_t) { return Coefficients{{1.0}, 1.0}; });
  FixedPointProblem problem(t.model, t.a_hat, t.data.features);
  EXPECT_THROW(s.solve(problem, Matrix{}, 0.0, 5), DomainError);
}
