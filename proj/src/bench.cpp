#include "ignn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "ignn/error.hpp"
#include "json.hpp"

namespace ignn {
namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kReportHeader = "solver,budget,f_evals,wall_time_s,residual,accuracy";
constexpr const char* kTracesHeader = "solver,k,residual,wall_time_s,f_evals,beta,alpha_json";

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string line_error(std::size_t lineno, const std::string& what) {
  return "line " + std::to_string(lineno) + ": " + what;
}

}  // namespace

void BenchmarkReport::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const ParetoRow& a, const ParetoRow& b) {
    return a.solver != b.solver ? a.solver < b.solver : a.budget < b.budget;
  });
}

BenchmarkReport run_pareto(const IgnnModel& model, const NeuralSolver& solver, const Dataset& data,
                           const SparseGraph& a_hat, const ParetoOptions& options, ReportHeader header) {
  if (options.repeats == 0) throw DomainError("pareto: repeats must be positive");
  const FixedPointProblem problem(model, a_hat, data.features);
  const PicardSolver picard;
  const AndersonSolver anderson(5, 1.0);
  const std::vector<std::pair<const FixedPointSolver*, bool>> solvers{
      {&anderson, true}, {&solver, false}, {&picard, true}};
  const Matrix zeros(problem.rows(), problem.cols());

  BenchmarkReport report;
  report.header = std::move(header);
  for (const auto& [s, from_zero] : solvers) {
    const Matrix& z0 = from_zero ? zeros : Matrix{};
    for (std::size_t budget = 0; budget <= options.max_budget; ++budget) {
      SolveTrace trace = s->solve(problem, z0, 0.0, budget);
      std::vector<double> times;
      for (std::size_t r = 0; r < options.repeats; ++r) {
        const auto start = Clock::now();
        trace = s->solve(problem, z0, 0.0, budget);
        times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
      }
      ParetoRow row;
      row.solver = s->name();
      row.budget = budget;
      row.f_evals = trace.f_evals;
      row.wall_time_s = median(times);
      row.residual = trace.final_residual();
      row.accuracy = accuracy(model, trace.final_z, data.labels, data.splits.test);
      report.rows.push_back(std::move(row));
    }
  }
  report.sort_rows();
  return report;
}

void write_report_csv(std::ostream& out, const BenchmarkReport& report) {
  out << "# seed=" << report.header.seed << ",dataset=" << report.header.dataset
      << ",config_hash=" << report.header.config_hash << '\n';
  out << kReportHeader << '\n';
  for (const ParetoRow& r : report.rows) {
    out << r.solver << ',' << r.budget << ',' << r.f_evals << ',' << detail::format_real(r.wall_time_s) << ','
        << detail::format_real(r.residual) << ',' << detail::format_real(r.accuracy) << '\n';
  }
}

BenchmarkReport read_report_csv(std::istream& in) {
  BenchmarkReport report;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ParseError("report CSV: missing header comment");
  {
    std::istringstream fields(line.substr(2));
    std::string item;
    while (std::getline(fields, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ParseError(line_error(1, "malformed header field '" + item + "'"));
      const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
      if (key == "seed") {
        report.header.seed = std::stoull(value);
      } else if (key == "dataset") {
        report.header.dataset = value;
      } else if (key == "config_hash") {
        report.header.config_hash = value;
      } else {
        throw ParseError(line_error(1, "unknown header field '" + key + "'"));
      }
    }
  }
  if (!std::getline(in, line) || line != kReportHeader) throw ParseError(line_error(2, "unexpected column header"));
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw ParseError(line_error(lineno, "expected 6 fields"));
    try {
      ParetoRow r;
      r.solver = f[0];
      r.budget = std::stoull(f[1]);
      r.f_evals = std::stoull(f[2]);
      r.wall_time_s = std::stod(f[3]);
      r.residual = std::stod(f[4]);
      r.accuracy = std::stod(f[5]);
      report.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(line_error(lineno, e.what()));
    }
  }
  return report;
}

std::vector<NamedTrace> run_traces(const IgnnModel& model, const NeuralSolver& solver, const Dataset& data,
                                   const SparseGraph& a_hat, double tol, std::size_t max_iter) {
  const FixedPointProblem problem(model, a_hat, data.features);
  const Matrix zeros(problem.rows(), problem.cols());
  std::vector<NamedTrace> out;
  out.push_back({"anderson", AndersonSolver(5, 1.0).solve(problem, zeros, tol, max_iter)});
  out.push_back({"neural", solver.solve(problem, Matrix{}, tol, max_iter)});
  out.push_back({"picard", PicardSolver().solve(problem, zeros, tol, max_iter)});
  return out;
}

void write_traces_csv(std::ostream& out, const std::vector<NamedTrace>& traces) {
  out << kTracesHeader << '\n';
  for (const NamedTrace& t : traces) {
    for (const TraceStep& s : t.trace.steps) {
      out << t.solver << ',' << s.k << ',' << detail::format_real(s.residual) << ','
          << detail::format_real(s.wall_time_s) << ',' << s.f_evals << ','
          << (s.beta ? detail::format_real(*s.beta) : "") << ",\"" << alpha_json(s.alpha) << "\"\n";
    }
  }
}

std::vector<std::pair<std::string, TraceStep>> read_traces_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTracesHeader) throw ParseError(line_error(1, "unexpected traces header"));
  std::vector<std::pair<std::string, TraceStep>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw ParseError(line_error(lineno, "expected 7 fields"));
    try {
      TraceStep s;
      s.k = std::stoull(f[1]);
      s.residual = std::stod(f[2]);
      s.wall_time_s = std::stod(f[3]);
      s.f_evals = std::stoull(f[4]);
      if (!f[5].empty()) s.beta = std::stod(f[5]);
      for (const auto& v : nlohmann::json::parse(f[6])) s.alpha.push_back(v.get<double>());
      rows.emplace_back(f[0], std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(line_error(lineno, e.what()));
    }
  }
  return rows;
}

OverheadSummary summarize_overhead(std::istream& log) {
  OverheadSummary s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(log, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception&) {
      throw ParseError(line_error(lineno, "malformed JSON"));
    }
    if (!j.is_object() || !j.contains("phase") || !j["phase"].is_string()) {
      throw ParseError(line_error(lineno, "record without a phase"));
    }
    const std::string phase = j["phase"];
    try {
      if (phase == "meta") {
        s.solver_params = j.at("solver_params").get<std::size_t>();
        s.model_params = j.at("model_params").get<std::size_t>();
        continue;
      }
      const double t = j.at("wall_time_s").get<double>();
      if (phase == "solver" || phase == "warmup_solver" || phase == "solver_target") {
        s.solver_train_time += t;
        ++s.solver_entries;
      } else if (phase == "model" || phase == "warmup_model") {
        s.model_train_time += t;
        ++s.model_entries;
      } else {
        throw ParseError("unknown phase '" + phase + "'");
      }
    } catch (const ParseError& e) {
      throw ParseError(line_error(lineno, e.what()));
    } catch (const std::exception& e) {
      throw ParseError(line_error(lineno, std::string("bad field: ") + e.what()));
    }
  }
  if (s.solver_entries > 0 && s.model_train_time > 0.0) s.ratio = s.solver_train_time / s.model_train_time;
  return s;
}

std::string overhead_json(const OverheadSummary& s) {
  nlohmann::json j{{"solver_train_time", s.solver_train_time},
                   {"model_train_time", s.model_train_time},
                   {"ratio", s.ratio},
                   {"solver_params", s.solver_params},
                   {"model_params", s.model_params},
                   {"param_ratio", s.model_params ? static_cast<double>(s.solver_params) / s.model_params : 0.0}};
  return j.dump(2);
}

}  // namespace ignn
