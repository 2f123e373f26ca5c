#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ignn/error.hpp"
#include "ignn/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ignn;
using test::rel_error;

namespace {

struct Small {
  SparseGraph a_hat;
  Matrix x;
  IgnnModel model;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> all;
};

Small small_problem(std::uint64_t seed, double kappa = 0.5) {
  Rng rng(seed);
  Small s{normalize_adjacency(test::random_graph(6, 7, seed)), rng.uniform_matrix(6, 3, -1, 1),
          IgnnModel::random(3, 4, 3, Activation::Tanh, kappa, seed), {}, {}};
  for (std::size_t i = 0; i < 6; ++i) {
    s.labels.push_back(rng.below(3));
    s.all.push_back(i);
  }
  // Random readout bias so the logits are not symmetric.
  s.model.readout_b = rng.uniform_matrix(1, 3, -0.5, 0.5);
  return s;
}

double loss_at_equilibrium(const Small& s) {
  return test::reference_loss(s.model, test::reference_equilibrium(s.model, s.a_hat, s.x), s.labels, s.all);
}

ModelGradients implicit_gradients(const Small& s, bool with_x = false) {
  FixedPointProblem problem(s.model, s.a_hat, s.x);
  const Matrix z = test::reference_equilibrium(s.model, s.a_hat, s.x);
  const ReadoutResult r = readout_loss(s.model, z, s.labels, s.all);
  return implicit_backward(problem, z, r.grad_z, 1e-14, 10000, with_x);
}

}  // namespace

TEST(Model, RandomModelRespectsKappa) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const IgnnModel m = IgnnModel::random(5, 16, 3, Activation::Relu, 0.9, seed);
    EXPECT_LE(spectral_norm(m.w), 0.9 * (1 + 1e-12));
  }
}

TEST(Model, ProjectionOnlyShrinks) {
  IgnnModel m = IgnnModel::random(2, 3, 2, Activation::Relu, 0.8, 1);
  m.w = Matrix::from_rows({{2, 0, 0}, {0, 1, 0}, {0, 0, 0.5}});
  project_weights(m);
  EXPECT_NEAR(spectral_norm(m.w), 0.8, 1e-12);
  EXPECT_NEAR(m.w(1, 1), 0.4, 1e-15);
  const Matrix small = Matrix::from_rows({{0.1, 0, 0}, {0, 0.2, 0}, {0, 0, 0.3}});
  m.w = small;
  project_weights(m);
  EXPECT_EQ(m.w, small);
}

TEST(Model, LayerMatchesDirectFormula) {
  const Small s = small_problem(3);
  FixedPointProblem problem(s.model, s.a_hat, s.x);
  Rng rng(9);
  const Matrix z = rng.uniform_matrix(6, 4, -1, 1);
  const Matrix dense = s.a_hat.to_dense();
  Matrix expect(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double pre = s.model.omega_b(0, j);
      for (std::size_t f = 0; f < 3; ++f) pre += s.x(i, f) * s.model.omega_w(f, j);
      for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t h = 0; h < 4; ++h) pre += dense(i, k) * z(k, h) * s.model.w(h, j);
      expect(i, j) = std::tanh(pre);
    }
  EXPECT_LT(test::max_rel_diff(layer_forward(z, problem), expect), 1e-14);
}

TEST(Model, InjectionCacheFollowsOmega) {
  Small s = small_problem(4);
  FixedPointProblem problem(s.model, s.a_hat, s.x);
  const Matrix z(6, 4);
  const Matrix before = layer_forward(z, problem);
  s.model.omega_b(0, 2) += 0.5;
  const Matrix after = layer_forward(z, problem);
  EXPECT_NEAR(after(0, 2), std::tanh(std::atanh(before(0, 2)) + 0.5), 1e-12);
  EXPECT_EQ(after(0, 1), before(0, 1));
}

TEST(Model, ImplicitGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Small s = small_problem(seed);
    const ModelGradients g = implicit_gradients(s);
    auto loss = [&] { return loss_at_equilibrium(s); };
    EXPECT_LT(rel_error(g.w, test::central_difference(s.model.w, loss, 1e-6)), 1e-6) << seed;
    EXPECT_LT(rel_error(g.omega_w, test::central_difference(s.model.omega_w, loss, 1e-6)), 1e-6) << seed;
    EXPECT_LT(rel_error(g.omega_b, test::central_difference(s.model.omega_b, loss, 1e-6)), 1e-6) << seed;
  }
}

TEST(Model, ImplicitGradientsMatchUnrolledPicard) {
  const Small s = small_problem(21);
  const ModelGradients g = implicit_gradients(s);
  const auto u = test::unrolled_picard_gradients(s.model, s.a_hat, s.x, s.labels, s.all, 100);
  EXPECT_LT(rel_error(g.w, u.w), 1e-8);
  EXPECT_LT(rel_error(g.omega_w, u.omega_w), 1e-8);
  EXPECT_LT(rel_error(g.omega_b, u.omega_b), 1e-8);
}

TEST(Model, InputGradientMatchesFiniteDifferences) {
  Small s = small_problem(31);
  const ModelGradients g = implicit_gradients(s, true);
  ASSERT_EQ(g.x.rows(), 6u);
  const Matrix fd = test::central_difference(s.x, [&] { return loss_at_equilibrium(s); }, 1e-6);
  EXPECT_LT(rel_error(g.x, fd), 1e-6);
  EXPECT_TRUE(implicit_gradients(s, false).x.empty());
}

TEST(Model, ReadoutGradientsMatchFiniteDifferences) {
  Small s = small_problem(41);
  Rng rng(41);
  Matrix z = rng.uniform_matrix(6, 4, -1, 1);
  const std::vector<std::size_t> split{0, 2, 5};
  const ReadoutResult r = readout_loss(s.model, z, s.labels, split);
  auto loss = [&] { return test::reference_loss(s.model, z, s.labels, split); };
  EXPECT_NEAR(r.loss, loss(), 1e-13);
  EXPECT_LT(rel_error(r.grad_z, test::central_difference(z, loss, 1e-6)), 1e-7);
  EXPECT_LT(rel_error(r.grad_w, test::central_difference(s.model.readout_w, loss, 1e-6)), 1e-7);
  EXPECT_LT(rel_error(r.grad_b, test::central_difference(s.model.readout_b, loss, 1e-6)), 1e-7);
  // Nodes outside the split get no gradient.
  for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(r.grad_z(1, h), 0.0);
}

TEST(Model, AdjointThatCannotConvergeThrows) {
  const Small s = small_problem(5, 0.95);
  FixedPointProblem problem(s.model, s.a_hat, s.x);
  const Matrix z = test::reference_equilibrium(s.model, s.a_hat, s.x);
  const ReadoutResult r = readout_loss(s.model, z, s.labels, s.all);
  EXPECT_THROW(implicit_backward(problem, z, r.grad_z, 1e-14, 1), ConvergenceError);
}

TEST(Model, LayerOpGradientMatchesFiniteDifferences) {
  const Small s = small_problem(6, 0.9);
  FixedPointProblem problem(s.model, s.a_hat, s.x);
  Rng rng(6);
  auto f = [&](ad::Tape& t, ad::Var z) { return ad::frobenius_norm(t, ad::layer(t, problem, z)); };
  EXPECT_LT(ad::grad_check(f, rng.uniform_matrix(6, 4, -1, 1), 1e-6), 1e-5);
}

TEST(Model, CheckpointRoundTripIsExact) {
  const IgnnModel m = IgnnModel::random(7, 5, 3, Activation::Tanh, 0.7, 8);
  const std::string path = test::temp_path("model.bin");
  save_model(m, path);
  const IgnnModel back = load_model(path);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  EXPECT_EQ(back.activation, Activation::Tanh);
  EXPECT_EQ(back.kappa, 0.7);
  std::ofstream(path, std::ios::binary) << "not a checkpoint";
  EXPECT_THROW(load_model(path), ParseError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), IoError);
}

TEST(Model, ThetaFingerprintIgnoresReadout) {
  IgnnModel m = IgnnModel::random(3, 4, 2, Activation::Relu, 0.9, 2);
  const auto theta = m.theta_fingerprint(), all = m.fingerprint();
  m.readout_w(0, 0) += 1.0;
  EXPECT_EQ(m.theta_fingerprint(), theta);
  EXPECT_NE(m.fingerprint(), all);
  m.omega_w(0, 0) += 1.0;
  EXPECT_NE(m.theta_fingerprint(), theta);
}
