#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ignn/model.hpp"
#include "ignn/tensor.hpp"

namespace ignn {

using FixedPointMap = std::function<Matrix(const Matrix&)>;

/// One solver step: the residual of iterate Z^[k] and the coefficients used
/// to form Z^[k+1] from it (empty when the solver stopped at k).
struct TraceStep {
  std::size_t k = 0;
  double residual = 0.0;
  double wall_time_s = 0.0;
  std::size_t f_evals = 0;
  std::optional<double> beta;
  std::vector<double> alpha;
  bool fallback = false;
};

struct SolveTrace {
  std::vector<TraceStep> steps;
  Matrix final_z;
  bool converged = false;
  std::size_t f_evals = 0;
  /// True when any least-squares solve fell back to uniform weights.
  bool fallback_used = false;

  double final_residual() const { return steps.empty() ? 0.0 : steps.back().residual; }
};

/// ||f(Z) - Z||_F / max(||Z||_F, 1e-12).
double relative_residual(const Matrix& fz, const Matrix& z);

/// Z^[k+1] = f(Z^[k]) until the relative residual drops to tol. `max_iter`
/// bounds the number of updates, so at most max_iter + 1 evaluations run.
SolveTrace picard_solve(const FixedPointMap& f, const Matrix& z0, double tol, std::size_t max_iter);
SolveTrace picard_solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                        std::size_t max_iter);

struct AaWeights {
  std::vector<double> alpha;
  bool fallback = false;
};

/// argmin ||G^T a|| subject to sum(a) = 1 for the residual rows of G, with
/// Tikhonov damping 1e-8 * trace(G G^T) / rows.
AaWeights aa_weights(const Matrix& g);
/// Same, given the Gram matrix G G^T directly.
AaWeights aa_weights_from_gram(const Matrix& gram);

SolveTrace anderson_solve(const FixedPointMap& f, const Matrix& z0, std::size_t m, double beta,
                          double tol, std::size_t max_iter);
SolveTrace anderson_solve(const FixedPointProblem& problem, const Matrix& z0, std::size_t m,
                          double beta, double tol, std::size_t max_iter);

/// Common interface for classic and learned solvers.
class FixedPointSolver {
 public:
  virtual ~FixedPointSolver() = default;
  virtual std::string name() const = 0;
  /// `z0` may be empty, in which case the solver picks its own start.
  virtual SolveTrace solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                           std::size_t max_iter) const = 0;
};

class PicardSolver final : public FixedPointSolver {
 public:
  std::string name() const override { return "picard"; }
  SolveTrace solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                   std::size_t max_iter) const override;
};

class AndersonSolver final : public FixedPointSolver {
 public:
  explicit AndersonSolver(std::size_t m = 5, double beta = 1.0) : m_(m), beta_(beta) {}
  std::string name() const override { return "anderson"; }
  SolveTrace solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                   std::size_t max_iter) const override;

 private:
  std::size_t m_;
  double beta_;
};

/// CSV with header "k,residual,wall_time_s,f_evals,beta,alpha_json".
void write_trace_csv(std::ostream& out, const SolveTrace& trace);
std::vector<TraceStep> read_trace_csv(std::istream& in);

/// JSON array text for a coefficient vector, full precision.
std::string alpha_json(const std::vector<double>& alpha);

}  // namespace ignn
