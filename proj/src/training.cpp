#include "ignn/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "ignn/error.hpp"
#include "ignn/rng.hpp"

namespace ignn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

Lambda1Schedule parse_lambda1_schedule(const std::string& name) {
  if (name == "constant") return Lambda1Schedule::ConstantPerStep;
  if (name == "last_step") return Lambda1Schedule::LastStepOnly;
  if (name == "linear_increasing") return Lambda1Schedule::LinearIncreasing;
  throw ConfigError("unknown lambda1_schedule '" + name +
                    "' (expected constant, last_step or linear_increasing)");
}

std::vector<double> reconstruction_weights(const SolverLossWeights& w, std::size_t K, std::size_t t,
                                           std::size_t T) {
  const double ramp = w.lambda1_warmup && T > 0 ? static_cast<double>(t) / static_cast<double>(T) : 1.0;
  std::vector<double> out(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double base = 0.0;
    switch (w.lambda1_schedule) {
      case Lambda1Schedule::ConstantPerStep:
        base = w.lambda1;
        break;
      case Lambda1Schedule::LastStepOnly:
        base = k + 1 == K ? w.lambda1 : 0.0;
        break;
      case Lambda1Schedule::LinearIncreasing:
        base = w.lambda1 * static_cast<double>(k + 1) / static_cast<double>(K);
        break;
    }
    out[k] = base * ramp;
  }
  return out;
}

double alpha_loss_weight(const SolverLossWeights& w, std::size_t t, std::size_t T) {
  if (!w.lambda3_decay || T == 0) return w.lambda3;
  return w.lambda3 * (1.0 - static_cast<double>(t) / static_cast<double>(T));
}

SolverLoss solver_loss(ad::Tape& tape, const Unrolled& run, const Matrix& z_star,
                       const SolverLossWeights& weights, std::size_t t, std::size_t T) {
  require_same_shape(tape.value(run.z0), z_star, "solver_loss");
  const std::size_t K = run.iterates.size();
  const auto w = reconstruction_weights(weights, K, t, T);
  const double l3 = alpha_loss_weight(weights, t, T);
  const ad::Var target = tape.constant(z_star);

  SolverLoss out;
  const ad::Var init_norm = ad::frobenius_norm(tape, ad::sub(tape, run.z0, target));
  out.init = weights.lambda2 * tape.value(init_norm)[0];
  ad::Var total = ad::scale(tape, init_norm, weights.lambda2);
  for (std::size_t k = 0; k < K; ++k) {
    const ad::Var norm = ad::frobenius_norm(tape, ad::sub(tape, run.iterates[k], target));
    out.step_norms.push_back(norm);
    out.reconstruction += w[k] * tape.value(norm)[0];
    total = ad::add(tape, total, ad::scale(tape, norm, w[k]));
  }
  for (const ad::Var mixed : run.mixed_residuals) {
    const ad::Var norm = ad::frobenius_norm(tape, mixed);
    out.alpha += l3 * tape.value(norm)[0];
    total = ad::add(tape, total, ad::scale(tape, norm, l3));
  }
  out.total = total;
  return out;
}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    require_same_shape(p, g, "Adam");
    require_same_shape(p, m_[i], "Adam");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
    }
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += dot(g, g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    for (Matrix& g : grads) g *= max_norm / norm;
  }
  return norm;
}

void TrainingLog::meta(std::size_t solver_params, std::size_t model_params) {
  if (!out_) return;
  nlohmann::json j{{"phase", "meta"}, {"solver_params", solver_params}, {"model_params", model_params}};
  *out_ << j.dump() << '\n';
}

void TrainingLog::record(const std::string& phase, std::size_t step, double loss, double reconstruction,
                         double init, double alpha, double residual, double accuracy, double wall_time_s,
                         bool clipped) {
  if (!out_) return;
  nlohmann::json j{{"phase", phase},
                   {"step", step},
                   {"loss", loss},
                   {"loss_rec", reconstruction},
                   {"loss_init", init},
                   {"loss_alpha", alpha},
                   {"residual", residual},
                   {"accuracy", accuracy},
                   {"wall_time_s", wall_time_s}};
  if (clipped) j["clipped"] = true;
  *out_ << j.dump() << '\n';
  out_->flush();
}

ZStarCache ZStarCache::compute(const FixedPointProblem& problem, double tol, std::size_t max_iter) {
  const SolveTrace trace = anderson_solve(problem, Matrix(problem.rows(), problem.cols()), 5, 1.0, tol, max_iter);
  if (!trace.converged) {
    throw ConvergenceError("Z* target solve did not reach " + std::to_string(tol), trace.final_residual());
  }
  ZStarCache c;
  c.theta_key = problem.model().theta_fingerprint();
  c.z_star = trace.final_z;
  c.residual = trace.final_residual();
  c.f_evals = trace.f_evals;
  return c;
}

std::vector<SolverStepRecord> train_solver(const FixedPointProblem& problem, NeuralSolver& solver,
                                           const ZStarCache& cache, const SolverTrainOptions& options,
                                           Adam& adam, std::size_t step_offset, std::size_t total_steps,
                                           TrainingLog* log, const std::string& phase) {
  if (!cache.fresh_for(problem.model())) {
    throw PreconditionError("train_solver: Z* was computed for different model parameters");
  }
  require_same_shape(cache.z_star, Matrix(problem.rows(), problem.cols()), "train_solver Z*");
  std::vector<SolverStepRecord> history;
  if (options.steps == 0) return history;
  const SparseGraph a_s = solver.predictor_graph(problem.graph());
  auto params = solver.parameters();
  std::vector<Matrix*> ptrs;
  for (auto& [name, m] : params) ptrs.push_back(m);

  for (std::size_t s = 0; s < options.steps; ++s) {
    const auto start = Clock::now();
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (Matrix* m : ptrs) vars.push_back(tape.leaf(*m));
    const Unrolled run = solver.unroll(tape, vars, problem, a_s, solver.options().K);
    const SolverLoss loss = solver_loss(tape, run, cache.z_star, options.weights, step_offset + s, total_steps);
    tape.backward(loss.total);
    std::vector<Matrix> grads;
    for (ad::Var v : vars) grads.push_back(tape.grad(v));

    SolverStepRecord rec;
    rec.loss = tape.value(loss.total)[0];
    rec.reconstruction = loss.reconstruction;
    rec.init = loss.init;
    rec.alpha = loss.alpha;
    rec.grad_norm = clip_global_norm(grads, options.clip_norm);
    rec.clipped = options.clip_norm > 0.0 && rec.grad_norm > options.clip_norm;
    adam.step(ptrs, grads);
    rec.wall_time_s = seconds_since(start);
    const double last_err =
        run.iterates.empty() ? 0.0 : frobenius_norm(tape.value(run.iterates.back()) - cache.z_star);
    if (log) {
      log->record(phase, step_offset + s, rec.loss, rec.reconstruction, rec.init, rec.alpha,
                  last_err / std::max(frobenius_norm(cache.z_star), 1e-12), -1.0, rec.wall_time_s, rec.clipped);
    }
    history.push_back(rec);
  }
  return history;
}

std::vector<SolverStepRecord> train_solver(const FixedPointProblem& problem, NeuralSolver& solver,
                                           const ZStarCache& cache, const SolverTrainOptions& options) {
  Adam adam(options.lr);
  return train_solver(problem, solver, cache, options, adam, 0, options.steps);
}

std::vector<EpochRecord> train_ignn(IgnnModel& model, const Dataset& data, const SparseGraph& a_hat,
                                    const FixedPointSolver& solver, const TaskOptions& options, Adam& adam,
                                    std::size_t epoch_offset, TrainingLog* log, const std::string& phase) {
  if (!(options.dropout >= 0.0 && options.dropout < 1.0)) throw DomainError("train_ignn: dropout must lie in [0, 1)");
  std::vector<EpochRecord> history;
  if (options.epochs == 0) return history;
  FixedPointProblem problem(model, a_hat, data.features);
  std::vector<Matrix*> params{&model.w, &model.omega_w, &model.omega_b, &model.readout_w, &model.readout_b};

  for (std::size_t e = 0; e < options.epochs; ++e) {
    const auto start = Clock::now();
    problem.sync();
    const SolveTrace trace = solver.solve(problem, Matrix{}, options.tol, options.max_iter);
    if (!trace.converged) {
      throw ConvergenceError("train_ignn: forward solve with " + solver.name() + " did not converge at epoch " +
                                 std::to_string(epoch_offset + e),
                             trace.final_residual());
    }
    const Matrix& z = trace.final_z;
    EpochRecord rec;
    rec.residual = trace.final_residual();
    rec.f_evals = trace.f_evals;
    rec.train_accuracy = accuracy(model, z, data.labels, data.splits.train);
    rec.val_accuracy = accuracy(model, z, data.labels, data.splits.val);

    Matrix mask(z.rows(), z.cols(), 1.0);
    if (options.dropout > 0.0) {
      Rng rng(options.seed * 1000003ULL + epoch_offset + e);
      const double keep = 1.0 / (1.0 - options.dropout);
      for (double& v : mask.values()) v = rng.uniform() >= options.dropout ? keep : 0.0;
    }
    const ReadoutResult r = readout_loss(model, hadamard(z, mask), data.labels, data.splits.train);
    rec.loss = r.loss;
    const ModelGradients g =
        implicit_backward(problem, z, hadamard(r.grad_z, mask), options.adjoint_tol, 20 * options.max_iter);
    adam.step(params, {g.w, g.omega_w, g.omega_b, r.grad_w, r.grad_b});
    project_weights(model);
    rec.wall_time_s = seconds_since(start);
    if (log) log->record(phase, epoch_offset + e, rec.loss, 0, 0, 0, rec.residual, rec.val_accuracy, rec.wall_time_s);
    history.push_back(rec);
  }
  return history;
}

std::vector<EpochRecord> train_ignn(IgnnModel& model, const Dataset& data, const SparseGraph& a_hat,
                                    const FixedPointSolver& solver, const TaskOptions& options) {
  Adam adam(options.lr);
  return train_ignn(model, data, a_hat, solver, options, adam);
}

void AlternateSchedule::validate() const {
  if (T1 < 1 || T2 < 1) throw ConfigError("alternating schedule needs T1 >= 1 and T2 >= 1");
  if (epoch_max == 0 || epoch_max % T2 != 0) {
    throw ConfigError("epoch_max (" + std::to_string(epoch_max) + ") must be a positive multiple of T2 (" +
                      std::to_string(T2) + ")");
  }
}

std::size_t default_t1(std::size_t t2) {
  return static_cast<std::size_t>(std::ceil(0.07 * static_cast<double>(t2) - 1e-9));
}

AlternateResult alternate_train(IgnnModel& model, NeuralSolver& solver, const Dataset& data,
                                const SparseGraph& a_hat, const AlternateSchedule& schedule,
                                const TaskOptions& task, const SolverTrainOptions& solver_options,
                                double z_star_tol, TrainingLog* log) {
  schedule.validate();
  AlternateResult result;
  Adam model_adam(task.lr);
  Adam solver_adam(solver_options.lr);
  const AndersonSolver anderson(5, 1.0);
  const std::size_t total_solver = schedule.total_solver_steps();
  std::size_t solver_t = 0, epoch = 0;
  FixedPointProblem problem(model, a_hat, data.features);
  if (log) log->meta(solver.parameter_count(), model.parameter_count());

  auto append = [](auto& into, const auto& from) { into.insert(into.end(), from.begin(), from.end()); };
  auto tune_solver = [&](std::size_t steps, const std::string& phase) {
    if (steps == 0) return;
    const auto start = Clock::now();
    problem.sync();
    const ZStarCache cache = ZStarCache::compute(problem, z_star_tol);
    if (log) log->record("solver_target", solver_t, 0, 0, 0, 0, cache.residual, -1.0, seconds_since(start));
    SolverTrainOptions opts = solver_options;
    opts.steps = steps;
    append(result.solver_steps,
           train_solver(problem, solver, cache, opts, solver_adam, solver_t, total_solver, log, phase));
    solver_t += steps;
  };
  auto train_model = [&](std::size_t epochs, const FixedPointSolver& with, const std::string& phase) {
    TaskOptions opts = task;
    opts.epochs = epochs;
    append(result.epochs, train_ignn(model, data, a_hat, with, opts, model_adam, epoch, log, phase));
    epoch += epochs;
  };

  train_model(schedule.warmup_epochs, anderson, "warmup_model");
  tune_solver(schedule.solver_warmup_steps, "warmup_solver");
  for (std::size_t c = 0; c < schedule.cycles(); ++c) {
    tune_solver(schedule.T1, "solver");
    train_model(schedule.T2, solver, "model");
  }
  return result;
}

SolverLossWeights loss_weights_from(const Config& c) {
  SolverLossWeights w;
  w.lambda1 = c.real("lambda1");
  w.lambda1_schedule = parse_lambda1_schedule(c.get("lambda1_schedule"));
  w.lambda1_warmup = c.flag("lambda1_warmup");
  w.lambda2 = c.real("lambda2");
  w.lambda3 = c.real("lambda3");
  w.lambda3_decay = c.flag("lambda3_decay");
  if (w.lambda1 < 0 || w.lambda2 < 0 || w.lambda3 < 0) throw ConfigError("loss weights must be non-negative");
  return w;
}

NeuralSolverOptions solver_options_from(const Config& c) {
  NeuralSolverOptions o;
  o.m = c.count("m");
  o.K = c.count("K");
  o.p = c.count("p");
  o.init_hidden = c.count("init_hidden");
  o.predictor_hidden = c.count("predictor_hidden");
  o.beta_max = c.real("beta_max");
  o.keep_fraction = c.real("keep_fraction");
  o.update_rule = parse_update_rule(c.get("update_rule"));
  if (o.m < 1) throw ConfigError("m must be >= 1");
  if (o.K < 1) throw ConfigError("K must be >= 1");
  if (!(o.keep_fraction > 0.0 && o.keep_fraction <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");
  if (!(o.beta_max > 0.0)) throw ConfigError("beta_max must be positive");
  return o;
}

TaskOptions task_options_from(const Config& c) {
  TaskOptions o;
  o.epochs = c.count("epochs");
  o.lr = c.real("lr");
  o.dropout = c.real("dropout");
  o.tol = c.real("tol");
  o.adjoint_tol = c.real("adjoint_tol");
  o.max_iter = c.count("max_iter");
  o.seed = c.integer("seed");
  if (!(o.dropout >= 0.0 && o.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(o.lr > 0.0)) throw ConfigError("lr must be positive");
  return o;
}

SolverTrainOptions solver_train_options_from(const Config& c) {
  SolverTrainOptions o;
  o.weights = loss_weights_from(c);
  o.steps = c.count("solver_steps");
  o.lr = c.real("solver_lr");
  o.clip_norm = c.real("clip_norm");
  if (!(o.lr > 0.0)) throw ConfigError("solver_lr must be positive");
  return o;
}

AlternateSchedule schedule_from(const Config& c) {
  AlternateSchedule s;
  s.warmup_epochs = c.count("warmup_epochs");
  s.solver_warmup_steps = c.count("solver_warmup_steps");
  s.T2 = c.count("T2");
  s.T1 = c.get("T1") == "auto" ? default_t1(s.T2) : c.count("T1");
  s.epoch_max = c.count("epoch_max");
  s.validate();
  return s;
}

}  // namespace ignn
