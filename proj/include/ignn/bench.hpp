#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ignn/dataset.hpp"
#include "ignn/model.hpp"
#include "ignn/neural_solver.hpp"
#include "ignn/solvers.hpp"

namespace ignn {

struct ReportHeader {
  std::uint64_t seed = 0;
  std::string dataset;
  std::string config_hash;
};

struct ParetoRow {
  std::string solver;
  std::size_t budget = 0;
  std::size_t f_evals = 0;
  double wall_time_s = 0.0;
  double residual = 0.0;
  double accuracy = 0.0;
};

struct BenchmarkReport {
  ReportHeader header;
  std::vector<ParetoRow> rows;

  void sort_rows();
};

struct ParetoOptions {
  std::size_t max_budget = 20;
  /// Timed runs per point after one untimed warm-up; the median is reported.
  std::size_t repeats = 5;
};

/// Runs picard and anderson from zero and the neural solver from h(X) with
/// exactly `budget` updates for every budget in 0 .. max_budget, and scores
/// the readout on the test split.
BenchmarkReport run_pareto(const IgnnModel& model, const NeuralSolver& solver, const Dataset& data,
                           const SparseGraph& a_hat, const ParetoOptions& options, ReportHeader header);

/// "# seed=..,dataset=..,config_hash=.." then
/// "solver,budget,f_evals,wall_time_s,residual,accuracy".
void write_report_csv(std::ostream& out, const BenchmarkReport& report);
BenchmarkReport read_report_csv(std::istream& in);

struct NamedTrace {
  std::string solver;
  SolveTrace trace;
};

/// Traces of the three solvers to `tol`, at most `max_iter` updates each.
std::vector<NamedTrace> run_traces(const IgnnModel& model, const NeuralSolver& solver, const Dataset& data,
                                   const SparseGraph& a_hat, double tol, std::size_t max_iter);

/// "solver,k,residual,wall_time_s,f_evals,beta,alpha_json".
void write_traces_csv(std::ostream& out, const std::vector<NamedTrace>& traces);
std::vector<std::pair<std::string, TraceStep>> read_traces_csv(std::istream& in);

struct OverheadSummary {
  double solver_train_time = 0.0;
  double model_train_time = 0.0;
  /// solver / model time, 0 when there is no solver entry.
  double ratio = 0.0;
  std::size_t solver_params = 0;
  std::size_t model_params = 0;
  std::size_t solver_entries = 0;
  std::size_t model_entries = 0;
};

/// Sums the per-step wall times of a JSONL training log by phase.
OverheadSummary summarize_overhead(std::istream& log);
std::string overhead_json(const OverheadSummary& s);

}  // namespace ignn
