#include "ignn/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "csv.hpp"
#include "ignn/error.hpp"

namespace ignn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_finite_iterate(const Matrix& z, std::size_t k, const char* solver) {
  if (!z.all_finite()) {
    throw NumericError(std::string(solver) + ": non-finite iterate at step " + std::to_string(k));
  }
}

const char* kTraceHeader = "k,residual,wall_time_s,f_evals,beta,alpha_json";

}  // namespace

double relative_residual(const Matrix& fz, const Matrix& z) {
  require_same_shape(fz, z, "relative_residual");
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = fz[i] - z[i];
    diff += d * d;
    norm += z[i] * z[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

SolveTrace picard_solve(const FixedPointMap& f, const Matrix& z0, double tol, std::size_t max_iter) {
  const auto start = Clock::now();
  SolveTrace trace;
  Matrix z = z0;
  require_finite_iterate(z, 0, "picard_solve");
  for (std::size_t k = 0;; ++k) {
    Matrix fz = f(z);
    ++trace.f_evals;
    require_finite_iterate(fz, k + 1, "picard_solve");
    TraceStep step;
    step.k = k;
    step.residual = relative_residual(fz, z);
    step.f_evals = trace.f_evals;
    const bool done = step.residual <= tol;
    if (!done && k < max_iter) {
      step.alpha = {1.0};
      step.beta = 1.0;
    }
    step.wall_time_s = seconds_since(start);
    trace.steps.push_back(std::move(step));
    if (done) {
      trace.converged = true;
      break;
    }
    if (k == max_iter) break;
    z = std::move(fz);
  }
  trace.final_z = std::move(z);
  return trace;
}

SolveTrace picard_solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                        std::size_t max_iter) {
  problem.sync();
  return picard_solve([&problem](const Matrix& z) { return problem.evaluate(z); }, z0, tol, max_iter);
}

AaWeights aa_weights_from_gram(const Matrix& gram) {
  const std::size_t r = gram.rows();
  if (r == 0 || gram.cols() != r) throw ShapeError("aa_weights: Gram matrix " + gram.shape_string());
  require_finite(gram, "aa_weights");
  AaWeights out;
  if (r == 1) {
    out.alpha = {1.0};
    return out;
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < r; ++i) trace += gram(i, i);
  const double lambda = 1e-8 * trace / static_cast<double>(r);

  // Cholesky of H = G G^T + lambda I, then H y = 1 and alpha = y / sum(y).
  Matrix l(r, r);
  bool ok = true;
  for (std::size_t i = 0; i < r && ok; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = gram(i, j) + (i == j ? lambda : 0.0);
      for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) {
          ok = false;
          break;
        }
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  std::vector<double> y(r, 1.0);
  if (ok) {
    for (std::size_t i = 0; i < r; ++i) {
      double s = y[i];
      for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * y[p];
      y[i] = s / l(i, i);
    }
    for (std::size_t i = r; i-- > 0;) {
      double s = y[i];
      for (std::size_t p = i + 1; p < r; ++p) s -= l(p, i) * y[p];
      y[i] = s / l(i, i);
    }
    double total = 0.0;
    for (double v : y) total += v;
    ok = std::isfinite(total) && total != 0.0;
    if (ok) {
      for (double& v : y) v /= total;
      ok = std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
    }
  }
  if (!ok) {
    out.alpha.assign(r, 1.0 / static_cast<double>(r));
    out.fallback = true;
    return out;
  }
  out.alpha = std::move(y);
  return out;
}

AaWeights aa_weights(const Matrix& g) {
  if (g.rows() == 0) throw ShapeError("aa_weights: empty residual window");
  return aa_weights_from_gram(matmul_nt(g, g));
}

SolveTrace anderson_solve(const FixedPointMap& f, const Matrix& z0, std::size_t m, double beta,
                          double tol, std::size_t max_iter) {
  if (m < 1) throw DomainError("anderson_solve: window m must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("anderson_solve: beta must lie in (0, 1]");
  const auto start = Clock::now();
  SolveTrace trace;

  struct Slot {
    Matrix z, fz, g;
  };
  std::deque<Slot> window;
  // Gram entries of the residuals in window order.
  std::deque<std::deque<double>> gram;

  Matrix z = z0;
  require_finite_iterate(z, 0, "anderson_solve");
  for (std::size_t k = 0;; ++k) {
    Matrix fz = f(z);
    ++trace.f_evals;
    require_finite_iterate(fz, k, "anderson_solve");
    TraceStep step;
    step.k = k;
    step.residual = relative_residual(fz, z);
    step.f_evals = trace.f_evals;
    if (step.residual <= tol || k == max_iter) {
      step.wall_time_s = seconds_since(start);
      trace.converged = step.residual <= tol;
      trace.steps.push_back(std::move(step));
      break;
    }

    Matrix g = fz - z;
    if (window.size() == m + 1) {
      window.pop_front();
      gram.pop_front();
      for (auto& row : gram) row.pop_front();
    }
    std::deque<double> new_row;
    for (std::size_t i = 0; i < window.size(); ++i) {
      const double v = dot(window[i].g, g);
      gram[i].push_back(v);
      new_row.push_back(v);
    }
    new_row.push_back(dot(g, g));
    gram.push_back(std::move(new_row));
    window.push_back(Slot{std::move(z), std::move(fz), std::move(g)});

    const std::size_t r = window.size();
    Matrix h(r, r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j) h(i, j) = gram[i][j];
    AaWeights w = aa_weights_from_gram(h);

    Matrix next(window.back().z.rows(), window.back().z.cols());
    for (std::size_t i = 0; i < r; ++i) {
      axpy(beta * w.alpha[i], window[i].fz, next);
      if (beta < 1.0) axpy((1.0 - beta) * w.alpha[i], window[i].z, next);
    }
    require_finite_iterate(next, k + 1, "anderson_solve");

    step.alpha = std::move(w.alpha);
    step.beta = beta;
    step.fallback = w.fallback;
    trace.fallback_used = trace.fallback_used || w.fallback;
    step.wall_time_s = seconds_since(start);
    trace.steps.push_back(std::move(step));
    z = std::move(next);
  }
  trace.final_z = std::move(z);
  return trace;
}

SolveTrace anderson_solve(const FixedPointProblem& problem, const Matrix& z0, std::size_t m,
                          double beta, double tol, std::size_t max_iter) {
  problem.sync();
  return anderson_solve([&problem](const Matrix& z) { return problem.evaluate(z); }, z0, m, beta, tol,
                        max_iter);
}

SolveTrace PicardSolver::solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                               std::size_t max_iter) const {
  return picard_solve(problem, z0.empty() ? Matrix(problem.rows(), problem.cols()) : z0, tol, max_iter);
}

SolveTrace AndersonSolver::solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                                 std::size_t max_iter) const {
  return anderson_solve(problem, z0.empty() ? Matrix(problem.rows(), problem.cols()) : z0, m_, beta_,
                        tol, max_iter);
}

std::string alpha_json(const std::vector<double>& alpha) {
  std::string s = "[";
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (i) s += ',';
    s += detail::format_real(alpha[i]);
  }
  return s + "]";
}

void write_trace_csv(std::ostream& out, const SolveTrace& trace) {
  out << kTraceHeader << '\n';
  for (const TraceStep& s : trace.steps) {
    out << s.k << ',' << detail::format_real(s.residual) << ',' << detail::format_real(s.wall_time_s) << ','
        << s.f_evals << ',' << (s.beta ? detail::format_real(*s.beta) : "") << ",\"" << alpha_json(s.alpha)
        << "\"\n";
  }
}

std::vector<TraceStep> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != detail::split_csv_line(kTraceHeader)) {
    throw ParseError("trace CSV: missing or unexpected header");
  }
  std::vector<TraceStep> steps;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw ParseError("trace CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      TraceStep s;
      s.k = std::stoull(f[0]);
      s.residual = std::stod(f[1]);
      s.wall_time_s = std::stod(f[2]);
      s.f_evals = std::stoull(f[3]);
      if (!f[4].empty()) s.beta = std::stod(f[4]);
      for (const auto& v : nlohmann::json::parse(f[5])) s.alpha.push_back(v.get<double>());
      steps.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError("trace CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return steps;
}

}  // namespace ignn
