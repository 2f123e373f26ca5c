#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ignn/bench.hpp"
#include "ignn/error.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace ignn;

namespace {

struct Fixture {
  Dataset data = synth_chain(3, 5, 6, 2);
  SparseGraph a_hat = normalize_adjacency(data.graph);
  IgnnModel model = IgnnModel::random(6, 8, 2, Activation::Relu, 0.9, 2);
  NeuralSolver solver = NeuralSolver::random(6, 8, NeuralSolverOptions{}, 2);
};

}  // namespace

TEST(Report, CsvRoundTripIsLossless) {
  BenchmarkReport r;
  r.header = {42, "synth:chain", "0123456789abcdef"};
  r.rows = {{"anderson", 3, 4, 0.125, 1.0 / 3.0, 0.75}, {"neural", 0, 0, 1e-7, 0.1, 0.5}};
  std::stringstream buf;
  write_report_csv(buf, r);
  const BenchmarkReport back = read_report_csv(buf);
  EXPECT_EQ(back.header.seed, 42u);
  EXPECT_EQ(back.header.dataset, "synth:chain");
  EXPECT_EQ(back.header.config_hash, "0123456789abcdef");
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].solver, r.rows[i].solver);
    EXPECT_EQ(back.rows[i].budget, r.rows[i].budget);
    EXPECT_EQ(back.rows[i].f_evals, r.rows[i].f_evals);
    EXPECT_EQ(back.rows[i].wall_time_s, r.rows[i].wall_time_s);
    EXPECT_EQ(back.rows[i].residual, r.rows[i].residual);
    EXPECT_EQ(back.rows[i].accuracy, r.rows[i].accuracy);
  }
}

TEST(Report, ParseErrorNamesTheLine) {
  std::stringstream buf("# seed=1,dataset=x,config_hash=y\nsolver,budget,f_evals,wall_time_s,residual,accuracy\n"
                        "picard,1,2,0.1,0.2,0.5\npicard,two,2,0.1,0.2,0.5\n");
  try {
    read_report_csv(buf);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Pareto, DeterministicSortedAndAnchoredAtInitializer) {
  const Fixture f;
  ParetoOptions o;
  o.max_budget = 6;
  o.repeats = 1;
  const BenchmarkReport a = run_pareto(f.model, f.solver, f.data, f.a_hat, o, {7, "chain", "h"});
  const BenchmarkReport b = run_pareto(f.model, f.solver, f.data, f.a_hat, o, {7, "chain", "h"});
  ASSERT_EQ(a.rows.size(), 3u * 7u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].f_evals, b.rows[i].f_evals);
    EXPECT_EQ(a.rows[i].residual, b.rows[i].residual);
    EXPECT_EQ(a.rows[i].accuracy, b.rows[i].accuracy);
    EXPECT_GE(a.rows[i].accuracy, 0.0);
    EXPECT_LE(a.rows[i].accuracy, 1.0);
    if (i > 0) {
      const auto& p = a.rows[i - 1];
      const auto& q = a.rows[i];
      EXPECT_TRUE(p.solver < q.solver || (p.solver == q.solver && p.budget < q.budget));
    }
  }
  for (const ParetoRow& r : a.rows) {
    if (r.solver == "neural" && r.budget == 0) {
      const Matrix z0 = f.solver.init_estimate(f.data.features);
      EXPECT_EQ(r.accuracy, accuracy(f.model, z0, f.data.labels, f.data.splits.test));
    }
  }
}

TEST(Traces, PicardContractsAndResidualsArePositive) {
  const Fixture f;
  const auto traces = run_traces(f.model, f.solver, f.data, f.a_hat, 1e-8, 200);
  ASSERT_EQ(traces.size(), 3u);
  for (const NamedTrace& t : traces) {
    for (const TraceStep& s : t.trace.steps) {
      EXPECT_TRUE(std::isfinite(s.residual));
      EXPECT_GT(s.residual, 0.0);
    }
    if (t.solver != "picard") continue;
    const auto& st = t.trace.steps;
    for (std::size_t k = 4; k < st.size(); ++k) EXPECT_LE(st[k].residual / st[k - 1].residual, 0.9 + 0.05) << k;
  }
  std::stringstream buf;
  write_traces_csv(buf, traces);
  const auto rows = read_traces_csv(buf);
  std::size_t total = 0;
  for (const NamedTrace& t : traces) total += t.trace.steps.size();
  EXPECT_EQ(rows.size(), total);
}

TEST(Overhead, NoSolverEntriesGivesZeroRatio) {
  std::stringstream log(R"({"phase":"meta","solver_params":10,"model_params":1000}
{"phase":"model","step":0,"wall_time_s":2.0}
)");
  const OverheadSummary s = summarize_overhead(log);
  EXPECT_EQ(s.ratio, 0.0);
  EXPECT_EQ(s.model_train_time, 2.0);
  EXPECT_EQ(s.solver_params, 10u);
}

TEST(Overhead, HandBuiltLogGivesExactRatio) {
  std::stringstream log(R"({"phase":"meta","solver_params":50,"model_params":1000}
{"phase":"warmup_model","step":0,"wall_time_s":1.5}
{"phase":"warmup_solver","step":0,"wall_time_s":0.25}

{"phase":"solver_target","step":1,"wall_time_s":0.25}
{"phase":"solver","step":1,"wall_time_s":0.5}
{"phase":"model","step":1,"wall_time_s":2.5}
)");
  const OverheadSummary s = summarize_overhead(log);
  EXPECT_EQ(s.solver_train_time, 1.0);
  EXPECT_EQ(s.model_train_time, 4.0);
  EXPECT_EQ(s.ratio, 0.25);
  EXPECT_EQ(s.solver_entries, 3u);
  EXPECT_EQ(s.model_entries, 2u);
  const auto j = nlohmann::json::parse(overhead_json(s));
  EXPECT_EQ(j["ratio"].get<double>(), 0.25);
  EXPECT_EQ(j["param_ratio"].get<double>(), 0.05);
}

TEST(Overhead, MalformedLineIsParseErrorWithLineNumber) {
  std::stringstream log("{\"phase\":\"model\",\"step\":0,\"wall_time_s\":1}\n{\"phase\":\n");
  try {
    summarize_overhead(log);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::stringstream unknown("{\"phase\":\"lunch\",\"step\":0,\"wall_time_s\":1}\n");
  EXPECT_THROW(summarize_overhead(unknown), ParseError);
}
