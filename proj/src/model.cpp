#include "ignn/model.hpp"

#include <algorithm>
#include <cmath>

#include "ignn/checkpoint.hpp"
#include "ignn/error.hpp"
#include "ignn/rng.hpp"

namespace ignn {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

IgnnModel IgnnModel::random(std::size_t d, std::size_t hidden, std::size_t classes,
                            Activation activation, double kappa, std::uint64_t seed) {
  if (d == 0 || hidden == 0 || classes == 0) throw DomainError("IgnnModel: zero dimension");
  if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("IgnnModel: kappa must lie in (0, 1)");
  Rng rng(seed);
  IgnnModel m;
  m.w = rng.glorot(hidden, hidden);
  m.omega_w = rng.glorot(d, hidden);
  m.omega_b = Matrix(1, hidden);
  m.readout_w = rng.glorot(hidden, classes);
  m.readout_b = Matrix(1, classes);
  m.activation = activation;
  m.kappa = kappa;
  project_weights(m);
  return m;
}

std::size_t IgnnModel::parameter_count() const noexcept {
  return w.size() + omega_w.size() + omega_b.size() + readout_w.size() + readout_b.size();
}

std::uint64_t IgnnModel::theta_fingerprint() const {
  return ignn::fingerprint(omega_b, ignn::fingerprint(omega_w, ignn::fingerprint(w)));
}

std::uint64_t IgnnModel::fingerprint() const {
  return ignn::fingerprint(readout_b, ignn::fingerprint(readout_w, theta_fingerprint()));
}

void project_weights(IgnnModel& model) {
  const double s = spectral_norm(model.w);
  if (s > model.kappa) model.w *= model.kappa / s;
}

FixedPointProblem::FixedPointProblem(const IgnnModel& model, const SparseGraph& a_hat, const Matrix& x)
    : model_(&model), a_hat_(&a_hat), x_(&x) {
  if (x.rows() != a_hat.n()) {
    throw ShapeError("FixedPointProblem: features " + x.shape_string() + " for " +
                     std::to_string(a_hat.n()) + " nodes");
  }
  if (x.cols() != model.input_dim()) {
    throw ShapeError("FixedPointProblem: features " + x.shape_string() + " vs Omega " +
                     model.omega_w.shape_string());
  }
  sync();
}

void FixedPointProblem::sync() const {
  const std::uint64_t key = fingerprint(model_->omega_b, fingerprint(model_->omega_w));
  if (omega_key_ && *omega_key_ == key) return;
  injection_ = affine(*x_, model_->omega_w, model_->omega_b);
  omega_key_ = key;
}

const Matrix& FixedPointProblem::injection() const { return injection_; }

Matrix FixedPointProblem::pre_activation(const Matrix& z) const {
  if (z.rows() != rows() || z.cols() != cols()) {
    throw ShapeError("layer: Z " + z.shape_string() + ", expected " + std::to_string(rows()) + "x" +
                     std::to_string(cols()));
  }
  Matrix pre = matmul(spmm(*a_hat_, z), model_->w);
  pre += injection_;
  return pre;
}

Matrix FixedPointProblem::evaluate(const Matrix& z) const {
  Matrix pre = pre_activation(z);
  return model_->activation == Activation::Relu ? relu(pre) : tanh(pre);
}

Matrix FixedPointProblem::activation_derivative(const Matrix& pre) const {
  Matrix d(pre.rows(), pre.cols());
  if (model_->activation == Activation::Relu) {
    for (std::size_t i = 0; i < pre.size(); ++i) d[i] = pre[i] > 0.0 ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const double t = std::tanh(pre[i]);
      d[i] = 1.0 - t * t;
    }
  }
  return d;
}

Matrix layer_forward(const Matrix& z, const FixedPointProblem& problem) {
  problem.sync();
  return problem.evaluate(z);
}

ModelGradients implicit_backward(const FixedPointProblem& problem, const Matrix& z_star,
                                 const Matrix& grad_z, double tol, std::size_t max_iter, bool with_x) {
  require_same_shape(z_star, grad_z, "implicit_backward");
  problem.sync();
  const IgnnModel& model = problem.model();
  const SparseGraph& a = problem.graph();
  const Matrix d = problem.activation_derivative(problem.pre_activation(z_star));

  Matrix u(z_star.rows(), z_star.cols());
  ModelGradients out;
  bool converged = false;
  double residual = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Matrix next = matmul_nt(spmm_transposed(a, u), model.w);
    next += grad_z;
    next = hadamard(d, next);
    require_finite(next, "implicit_backward adjoint");
    Matrix diff = next - u;
    residual = frobenius_norm(diff) / std::max(frobenius_norm(next), 1e-12);
    u = std::move(next);
    out.adjoint_iterations = it;
    if (residual <= tol) {
      converged = true;
      break;
    }
  }
  out.adjoint_residual = residual;
  if (!converged) {
    throw ConvergenceError("implicit_backward: adjoint not converged in " + std::to_string(max_iter) +
                               " iterations",
                           residual);
  }
  out.w = matmul_tn(spmm(a, z_star), u);
  out.omega_w = matmul_tn(problem.features(), u);
  out.omega_b = column_sums(u);
  if (with_x) out.x = matmul_nt(u, model.omega_w);
  return out;
}

ReadoutResult readout_loss(const IgnnModel& model, const Matrix& z,
                           const std::vector<std::size_t>& labels,
                           const std::vector<std::size_t>& split) {
  if (split.empty()) throw DomainError("readout_loss: empty split");
  if (z.cols() != model.readout_w.rows()) {
    throw ShapeError("readout_loss: Z " + z.shape_string() + " vs readout " + model.readout_w.shape_string());
  }
  const std::size_t c = model.num_classes();
  ReadoutResult r;
  r.grad_z = Matrix(z.rows(), z.cols());
  r.grad_w = Matrix(z.cols(), c);
  r.grad_b = Matrix(1, c);
  const double scale = 1.0 / static_cast<double>(split.size());
  std::vector<double> logits(c);
  Matrix dlogit(1, c);
  for (std::size_t node : split) {
    if (node >= z.rows() || node >= labels.size()) throw DomainError("readout_loss: split index out of range");
    if (labels[node] >= c) throw DomainError("readout_loss: label out of range");
    const auto zr = z.row(node);
    for (std::size_t j = 0; j < c; ++j) {
      double s = model.readout_b[j];
      for (std::size_t h = 0; h < zr.size(); ++h) s += zr[h] * model.readout_w(h, j);
      logits[j] = s;
    }
    const auto p = softmax(logits);
    r.loss -= std::log(std::max(p[labels[node]], 1e-300)) * scale;
    for (std::size_t j = 0; j < c; ++j) dlogit[j] = (p[j] - (j == labels[node] ? 1.0 : 0.0)) * scale;
    auto gz = r.grad_z.row(node);
    for (std::size_t h = 0; h < zr.size(); ++h) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        s += dlogit[j] * model.readout_w(h, j);
        r.grad_w(h, j) += zr[h] * dlogit[j];
      }
      gz[h] += s;
    }
    r.grad_b += dlogit;
  }
  return r;
}

std::vector<std::size_t> predict(const IgnnModel& model, const Matrix& z) {
  const Matrix logits = affine(z, model.readout_w, model.readout_b);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const IgnnModel& model, const Matrix& z, const std::vector<std::size_t>& labels,
                const std::vector<std::size_t>& split) {
  if (split.empty()) return 0.0;
  const auto pred = predict(model, z);
  std::size_t hits = 0;
  for (std::size_t i : split) hits += pred.at(i) == labels.at(i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

void save_model(const IgnnModel& model, const std::string& path) {
  write_checkpoint(path, {
                             scalar_tensor("meta.kind", 0.0),
                             scalar_tensor("meta.kappa", model.kappa),
                             scalar_tensor("meta.activation", model.activation == Activation::Relu ? 0.0 : 1.0),
                             tensor_from("W", model.w),
                             tensor_from("Omega.weight", model.omega_w),
                             tensor_from("Omega.bias", model.omega_b),
                             tensor_from("readout.weight", model.readout_w),
                             tensor_from("readout.bias", model.readout_b),
                         });
}

IgnnModel load_model(const std::string& path) {
  const auto t = read_checkpoint(path);
  if (scalar_from(t, "meta.kind") != 0.0) throw ParseError(path + ": not a model checkpoint");
  IgnnModel m;
  m.kappa = scalar_from(t, "meta.kappa");
  m.activation = scalar_from(t, "meta.activation") == 0.0 ? Activation::Relu : Activation::Tanh;
  m.w = matrix_from(t, "W");
  m.omega_w = matrix_from(t, "Omega.weight");
  m.omega_b = matrix_from(t, "Omega.bias");
  m.readout_w = matrix_from(t, "readout.weight");
  m.readout_b = matrix_from(t, "readout.bias");
  const std::size_t h = m.w.rows();
  if (m.w.cols() != h || m.omega_w.cols() != h || m.omega_b.cols() != h || m.readout_w.rows() != h ||
      m.readout_b.cols() != m.readout_w.cols()) {
    throw ParseError(path + ": inconsistent model tensor shapes");
  }
  return m;
}

namespace ad {

Var layer(Tape& t, const FixedPointProblem& problem, Var z) {
  Matrix pre = problem.pre_activation(t.value(z));
  Matrix deriv = problem.activation_derivative(pre);
  Matrix out = problem.model().activation == Activation::Relu ? relu(pre) : ignn::tanh(pre);
  const FixedPointProblem* p = &problem;
  return t.record(std::move(out), {z}, [p, z, deriv = std::move(deriv)](Tape& tp, Var, const Matrix& g) {
    const Matrix dpre = hadamard(g, deriv);
    tp.accumulate(z, spmm_transposed(p->graph(), matmul_nt(dpre, p->model().w)));
  });
}

}  // namespace ad

}  // namespace ignn
