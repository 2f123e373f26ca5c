#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ignn/autodiff.hpp"
#include "ignn/graph.hpp"
#include "ignn/tensor.hpp"

namespace ignn {

enum class Activation { Relu, Tanh };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

/// Implicit layer parameters theta = {W, Omega} plus the classification head.
struct IgnnModel {
  Matrix w;        // d' x d'
  Matrix omega_w;  // d x d'
  Matrix omega_b;  // 1 x d'
  Matrix readout_w;  // d' x classes
  Matrix readout_b;  // 1 x classes
  Activation activation = Activation::Relu;
  double kappa = 0.95;

  /// Glorot-initialised model with W already projected to kappa.
  static IgnnModel random(std::size_t d, std::size_t hidden, std::size_t classes,
                          Activation activation, double kappa, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return omega_w.rows(); }
  std::size_t hidden_dim() const noexcept { return w.rows(); }
  std::size_t num_classes() const noexcept { return readout_w.cols(); }
  std::size_t parameter_count() const noexcept;
  /// Hash of {W, Omega}; the equilibrium depends on nothing else.
  std::uint64_t theta_fingerprint() const;
  /// Hash of every parameter.
  std::uint64_t fingerprint() const;
};

/// Rescales W to spectral norm kappa when it exceeds it.
void project_weights(IgnnModel& model);

/// Z -> sigma(A_hat Z W + b_Omega(X)). Holds references: the model, graph and
/// features must outlive the problem.
class FixedPointProblem {
 public:
  FixedPointProblem(const IgnnModel& model, const SparseGraph& a_hat, const Matrix& x);

  const IgnnModel& model() const noexcept { return *model_; }
  const SparseGraph& graph() const noexcept { return *a_hat_; }
  const Matrix& features() const noexcept { return *x_; }
  std::size_t rows() const noexcept { return a_hat_->n(); }
  std::size_t cols() const noexcept { return model_->hidden_dim(); }

  /// Recomputes b_Omega(X) if Omega changed since the last call.
  void sync() const;
  const Matrix& injection() const;

  /// A_hat Z W + b_Omega(X), using the cached injection.
  Matrix pre_activation(const Matrix& z) const;
  Matrix evaluate(const Matrix& z) const;
  /// sigma'(pre) elementwise.
  Matrix activation_derivative(const Matrix& pre) const;

 private:
  const IgnnModel* model_;
  const SparseGraph* a_hat_;
  const Matrix* x_;
  mutable Matrix injection_;
  mutable std::optional<std::uint64_t> omega_key_;
};

/// Syncs the injection cache, then applies the layer once.
Matrix layer_forward(const Matrix& z, const FixedPointProblem& problem);

struct ModelGradients {
  Matrix w;
  Matrix omega_w;
  Matrix omega_b;
  Matrix x;  // empty unless requested
  std::size_t adjoint_iterations = 0;
  double adjoint_residual = 0.0;
};

/// Gradients of a loss through the equilibrium Z* = f(Z*) given dL/dZ*.
/// Solves u = D .* (A_hat^T u W^T + grad_z) by Picard from u = 0, where u is
/// dL/d(pre-activation).
ModelGradients implicit_backward(const FixedPointProblem& problem, const Matrix& z_star,
                                 const Matrix& grad_z, double tol = 1e-10,
                                 std::size_t max_iter = 1000, bool with_x = false);

struct ReadoutResult {
  double loss = 0.0;
  Matrix grad_z;
  Matrix grad_w;
  Matrix grad_b;
};

/// Mean softmax cross-entropy of Z R_w + R_b over the split nodes.
ReadoutResult readout_loss(const IgnnModel& model, const Matrix& z,
                           const std::vector<std::size_t>& labels,
                           const std::vector<std::size_t>& split);

/// Arg-max class per node.
std::vector<std::size_t> predict(const IgnnModel& model, const Matrix& z);
double accuracy(const IgnnModel& model, const Matrix& z, const std::vector<std::size_t>& labels,
                const std::vector<std::size_t>& split);

void save_model(const IgnnModel& model, const std::string& path);
IgnnModel load_model(const std::string& path);

namespace ad {
/// f(Z) with theta held fixed; gradients flow to Z only.
Var layer(Tape& t, const FixedPointProblem& problem, Var z);
}  // namespace ad

}  // namespace ignn
