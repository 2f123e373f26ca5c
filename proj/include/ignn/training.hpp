#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ignn/autodiff.hpp"
#include "ignn/config.hpp"
#include "ignn/dataset.hpp"
#include "ignn/model.hpp"
#include "ignn/neural_solver.hpp"
#include "ignn/solvers.hpp"

namespace ignn {

enum class Lambda1Schedule { ConstantPerStep, LastStepOnly, LinearIncreasing };

Lambda1Schedule parse_lambda1_schedule(const std::string& name);

struct SolverLossWeights {
  double lambda1 = 0.1;
  Lambda1Schedule lambda1_schedule = Lambda1Schedule::LinearIncreasing;
  bool lambda1_warmup = true;
  double lambda2 = 5.0;
  double lambda3 = 1e-4;
  bool lambda3_decay = true;
};

/// Weight of ||Z^[k+1] - Z*|| for k = 0 .. K-1 at solver step t of T, with
/// the warm-up ramp t/T applied on top of the schedule.
std::vector<double> reconstruction_weights(const SolverLossWeights& w, std::size_t K, std::size_t t,
                                           std::size_t T);
double alpha_loss_weight(const SolverLossWeights& w, std::size_t t, std::size_t T);

struct SolverLoss {
  ad::Var total;
  /// ||Z^[k+1] - Z*|| before weighting, one per unrolled step.
  std::vector<ad::Var> step_norms;
  double reconstruction = 0.0;
  double init = 0.0;
  double alpha = 0.0;
};

/// Builds the three-part solver loss on the tape that holds `run`.
SolverLoss solver_loss(ad::Tape& tape, const Unrolled& run, const Matrix& z_star,
                       const SolverLossWeights& weights, std::size_t t, std::size_t T);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One bias-corrected update; `params` and `grads` must keep the same
  /// order and shapes across calls.
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);
  std::size_t steps() const noexcept { return t_; }
  double lr() const noexcept { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Rescales the gradients so their joint norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

/// One JSON object per line. Each record carries its phase, step, loss
/// components, residual, accuracy and the step's own wall time.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(std::ostream* out) : out_(out) {}
  void meta(std::size_t solver_params, std::size_t model_params);
  void record(const std::string& phase, std::size_t step, double loss, double reconstruction, double init,
              double alpha, double residual, double accuracy, double wall_time_s, bool clipped = false);

 private:
  std::ostream* out_ = nullptr;
};

/// Equilibrium used as the solver's training target, tagged with the model
/// parameters it was computed for.
struct ZStarCache {
  std::uint64_t theta_key = 0;
  Matrix z_star;
  double residual = 0.0;
  std::size_t f_evals = 0;

  /// Anderson (m = 5, beta = 1) from zero to `tol`.
  static ZStarCache compute(const FixedPointProblem& problem, double tol = 1e-6, std::size_t max_iter = 5000);
  bool fresh_for(const IgnnModel& model) const { return theta_key == model.theta_fingerprint(); }
};

struct SolverTrainOptions {
  SolverLossWeights weights;
  std::size_t steps = 200;
  double lr = 0.002;
  double clip_norm = 5.0;
};

struct SolverStepRecord {
  double loss = 0.0;
  double reconstruction = 0.0;
  double init = 0.0;
  double alpha = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
  double wall_time_s = 0.0;
};

/// Adam on the solver's parameters against a fixed Z*. The model is only
/// read. `step_offset` / `total_steps` place these steps on the global
/// warm-up and decay schedules.
std::vector<SolverStepRecord> train_solver(const FixedPointProblem& problem, NeuralSolver& solver,
                                           const ZStarCache& cache, const SolverTrainOptions& options,
                                           Adam& adam, std::size_t step_offset, std::size_t total_steps,
                                           TrainingLog* log = nullptr, const std::string& phase = "solver");
/// Convenience overload with a fresh optimizer and its own schedule.
std::vector<SolverStepRecord> train_solver(const FixedPointProblem& problem, NeuralSolver& solver,
                                           const ZStarCache& cache, const SolverTrainOptions& options);

struct TaskOptions {
  std::size_t epochs = 100;
  double lr = 0.002;
  double dropout = 0.5;
  double tol = 3e-6;
  double adjoint_tol = 1e-6;
  std::size_t max_iter = 300;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double residual = 0.0;
  std::size_t f_evals = 0;
  double wall_time_s = 0.0;
};

/// Task training with the solver frozen: solve, readout loss on the train
/// split, implicit backward, Adam, projection.
std::vector<EpochRecord> train_ignn(IgnnModel& model, const Dataset& data, const SparseGraph& a_hat,
                                    const FixedPointSolver& solver, const TaskOptions& options, Adam& adam,
                                    std::size_t epoch_offset = 0, TrainingLog* log = nullptr,
                                    const std::string& phase = "model");
std::vector<EpochRecord> train_ignn(IgnnModel& model, const Dataset& data, const SparseGraph& a_hat,
                                    const FixedPointSolver& solver, const TaskOptions& options);

struct AlternateSchedule {
  std::size_t warmup_epochs = 0;
  std::size_t solver_warmup_steps = 100;
  std::size_t T1 = 2;
  std::size_t T2 = 20;
  std::size_t epoch_max = 100;

  /// Requires T1, T2 >= 1 and epoch_max a positive multiple of T2.
  void validate() const;
  std::size_t cycles() const { return epoch_max / T2; }
  std::size_t total_solver_steps() const { return solver_warmup_steps + cycles() * T1; }
};

/// ceil(0.07 T2).
std::size_t default_t1(std::size_t t2);

struct AlternateResult {
  std::vector<EpochRecord> epochs;
  std::vector<SolverStepRecord> solver_steps;
};

AlternateResult alternate_train(IgnnModel& model, NeuralSolver& solver, const Dataset& data,
                                const SparseGraph& a_hat, const AlternateSchedule& schedule,
                                const TaskOptions& task, const SolverTrainOptions& solver_options,
                                double z_star_tol = 1e-6, TrainingLog* log = nullptr);

SolverLossWeights loss_weights_from(const Config& c);
NeuralSolverOptions solver_options_from(const Config& c);
TaskOptions task_options_from(const Config& c);
SolverTrainOptions solver_train_options_from(const Config& c);
AlternateSchedule schedule_from(const Config& c);

}  // namespace ignn
