#include "ignn/ignn.h"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "ignn/bench.hpp"
#include "ignn/config.hpp"
#include "ignn/dataset.hpp"
#include "ignn/error.hpp"
#include "ignn/graph.hpp"
#include "ignn/model.hpp"
#include "ignn/neural_solver.hpp"
#include "ignn/training.hpp"

struct ignn_config {
  ignn::Config config;
};

struct ignn_dataset {
  std::string name;
  ignn::Dataset data;
  ignn::SparseGraph a_hat;
};

struct ignn_model {
  ignn::IgnnModel model;
};

struct ignn_solver {
  ignn::NeuralSolver solver;
};

namespace {

thread_local std::string last_error;

ignn_status status_for(ignn::ErrorKind kind) {
  switch (kind) {
    case ignn::ErrorKind::Shape: return IGNN_ERR_SHAPE;
    case ignn::ErrorKind::Domain: return IGNN_ERR_DOMAIN;
    case ignn::ErrorKind::Numeric: return IGNN_ERR_NUMERIC;
    case ignn::ErrorKind::Parse: return IGNN_ERR_PARSE;
    case ignn::ErrorKind::Io: return IGNN_ERR_IO;
    case ignn::ErrorKind::Config: return IGNN_ERR_CONFIG;
    case ignn::ErrorKind::Convergence: return IGNN_ERR_CONVERGENCE;
    case ignn::ErrorKind::Precondition: return IGNN_ERR_PRECONDITION;
  }
  return IGNN_ERR_GENERIC;
}

struct InvalidArgument {
  std::string what;
};

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument{what};
}

template <class F>
ignn_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return IGNN_OK;
  } catch (const InvalidArgument& e) {
    last_error = e.what;
    return IGNN_ERR_INVALID_ARGUMENT;
  } catch (const ignn::Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return IGNN_ERR_GENERIC;
  } catch (const std::exception& e) {
    last_error = e.what();
    return IGNN_ERR_GENERIC;
  } catch (...) {
    last_error = "unknown error";
    return IGNN_ERR_GENERIC;
  }
}

/// Log stream that exists only when a path was given.
class OptionalLog {
 public:
  explicit OptionalLog(const char* path) {
    if (!path) return;
    file_.open(path);
    if (!file_) throw ignn::IoError(std::string("cannot write log ") + path);
    log_.emplace(&file_);
  }
  ignn::TrainingLog* get() { return log_ ? &*log_ : nullptr; }

 private:
  std::ofstream file_;
  std::optional<ignn::TrainingLog> log_;
};

std::ofstream open_output(const char* path) {
  std::ofstream out(path);
  if (!out) throw ignn::IoError(std::string("cannot write ") + path);
  return out;
}

double test_accuracy_of(const ignn::IgnnModel& model, const ignn_dataset& d, const ignn::FixedPointSolver& solver,
                        const ignn::Config& c) {
  const ignn::FixedPointProblem problem(model, d.a_hat, d.data.features);
  // Classic solvers start from zero, the neural one from its initializer.
  const ignn::Matrix z0 = solver.name() == "neural" ? ignn::Matrix{} : ignn::Matrix(problem.rows(), problem.cols());
  const ignn::SolveTrace t = solver.solve(problem, z0, c.real("tol"), c.count("max_iter"));
  return ignn::accuracy(model, t.final_z, d.data.labels, d.data.splits.test);
}

}  // namespace

extern "C" {

const char* ignn_last_error(void) { return last_error.c_str(); }

const char* ignn_status_name(ignn_status status) {
  switch (status) {
    case IGNN_OK: return "ok";
    case IGNN_ERR_GENERIC: return "error";
    case IGNN_ERR_CONFIG: return "config error";
    case IGNN_ERR_CONVERGENCE: return "convergence failure";
    case IGNN_ERR_IO: return "i/o error";
    case IGNN_ERR_SHAPE: return "shape error";
    case IGNN_ERR_DOMAIN: return "domain error";
    case IGNN_ERR_NUMERIC: return "numeric error";
    case IGNN_ERR_PARSE: return "parse error";
    case IGNN_ERR_PRECONDITION: return "precondition error";
    case IGNN_ERR_INVALID_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

ignn_status ignn_config_default(ignn_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new ignn_config{};
  });
}

ignn_status ignn_config_load(const char* path, ignn_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new ignn_config{ignn::Config::load(path)};
  });
}

ignn_status ignn_config_set(ignn_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    config->config.set(key, value);
  });
}

ignn_status ignn_config_get(const ignn_config* config, const char* key, char* buf, size_t size) {
  return guarded([&] {
    require(config && key && buf && size > 0, "null argument or empty buffer");
    const std::string v = config->config.get(key);
    if (v.size() >= size) throw InvalidArgument{"buffer too small for '" + std::string(key) + "'"};
    std::memcpy(buf, v.data(), v.size());
    buf[v.size()] = '\0';
  });
}

ignn_status ignn_config_hash(const ignn_config* config, char out[17]) {
  return guarded([&] {
    require(config && out, "null argument");
    const std::string h = config->config.hash();
    std::memcpy(out, h.c_str(), 17);
  });
}

void ignn_config_destroy(ignn_config* config) { delete config; }

ignn_status ignn_dataset_open(const char* spec, uint64_t seed, ignn_dataset** out) {
  return guarded([&] {
    require(spec && out, "null argument");
    auto d = std::make_unique<ignn_dataset>();
    d->name = spec;
    d->data = ignn::open_dataset(spec, seed);
    d->a_hat = ignn::normalize_adjacency(d->data.graph);
    *out = d.release();
  });
}

ignn_status ignn_dataset_info(const ignn_dataset* data, size_t* nodes, size_t* features, size_t* classes,
                              size_t* edges) {
  return guarded([&] {
    require(data, "null dataset");
    if (nodes) *nodes = data->data.num_nodes();
    if (features) *features = data->data.num_features();
    if (classes) *classes = data->data.num_classes;
    if (edges) *edges = data->data.num_edges();
  });
}

void ignn_dataset_destroy(ignn_dataset* data) { delete data; }

ignn_status ignn_model_create(const ignn_config* config, const ignn_dataset* data, uint64_t seed,
                              ignn_model** out) {
  return guarded([&] {
    require(config && data && out, "null argument");
    const ignn::Config& c = config->config;
    *out = new ignn_model{ignn::IgnnModel::random(data->data.num_features(), c.count("nhid"),
                                                  data->data.num_classes, ignn::parse_activation(c.get("activation")),
                                                  c.real("kappa"), seed)};
  });
}

ignn_status ignn_model_load(const char* path, ignn_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new ignn_model{ignn::load_model(path)};
  });
}

ignn_status ignn_model_save(const ignn_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    ignn::save_model(model->model, path);
  });
}

ignn_status ignn_model_param_count(const ignn_model* model, size_t* out) {
  return guarded([&] {
    require(model && out, "null argument");
    *out = model->model.parameter_count();
  });
}

void ignn_model_destroy(ignn_model* model) { delete model; }

ignn_status ignn_solver_create(const ignn_config* config, const ignn_model* model, uint64_t seed,
                               ignn_solver** out) {
  return guarded([&] {
    require(config && model && out, "null argument");
    *out = new ignn_solver{ignn::NeuralSolver::random(model->model.input_dim(), model->model.hidden_dim(),
                                                      ignn::solver_options_from(config->config), seed)};
  });
}

ignn_status ignn_solver_load(const char* path, ignn_solver** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new ignn_solver{ignn::NeuralSolver::load(path)};
  });
}

ignn_status ignn_solver_save(const ignn_solver* solver, const char* path) {
  return guarded([&] {
    require(solver && path, "null argument");
    solver->solver.save(path);
  });
}

ignn_status ignn_solver_param_count(const ignn_solver* solver, size_t* out) {
  return guarded([&] {
    require(solver && out, "null argument");
    *out = solver->solver.parameter_count();
  });
}

void ignn_solver_destroy(ignn_solver* solver) { delete solver; }

ignn_status ignn_train_model(ignn_model* model, const ignn_dataset* data, const ignn_config* config,
                             const char* log_path, double* test_accuracy) {
  return guarded([&] {
    require(model && data && config, "null argument");
    const ignn::Config& c = config->config;
    OptionalLog log(log_path);
    if (log.get()) log.get()->meta(0, model->model.parameter_count());
    const ignn::AndersonSolver anderson(c.count("m"), 1.0);
    ignn::Adam adam(c.real("lr"));
    ignn::train_ignn(model->model, data->data, data->a_hat, anderson, ignn::task_options_from(c), adam, 0,
                     log.get(), "model");
    if (test_accuracy) *test_accuracy = test_accuracy_of(model->model, *data, anderson, c);
  });
}

ignn_status ignn_train_solver(ignn_solver* solver, const ignn_model* model, const ignn_dataset* data,
                              const ignn_config* config, const char* log_path) {
  return guarded([&] {
    require(solver && model && data && config, "null argument");
    const ignn::Config& c = config->config;
    OptionalLog log(log_path);
    if (log.get()) log.get()->meta(solver->solver.parameter_count(), model->model.parameter_count());
    const ignn::FixedPointProblem problem(model->model, data->a_hat, data->data.features);
    const auto start = std::chrono::steady_clock::now();
    const ignn::ZStarCache cache = ignn::ZStarCache::compute(problem, c.real("solver_tol"));
    if (log.get()) {
      log.get()->record("solver_target", 0, 0, 0, 0, 0, cache.residual, -1.0,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    const ignn::SolverTrainOptions opts = ignn::solver_train_options_from(c);
    ignn::Adam adam(opts.lr);
    ignn::train_solver(problem, solver->solver, cache, opts, adam, 0, opts.steps, log.get(), "solver");
  });
}

ignn_status ignn_alternate_train(ignn_model* model, ignn_solver* solver, const ignn_dataset* data,
                                 const ignn_config* config, const char* log_path, double* test_accuracy) {
  return guarded([&] {
    require(model && solver && data && config, "null argument");
    const ignn::Config& c = config->config;
    OptionalLog log(log_path);
    ignn::alternate_train(model->model, solver->solver, data->data, data->a_hat, ignn::schedule_from(c),
                          ignn::task_options_from(c), ignn::solver_train_options_from(c), c.real("solver_tol"),
                          log.get());
    if (test_accuracy) *test_accuracy = test_accuracy_of(model->model, *data, solver->solver, c);
  });
}

ignn_status ignn_solve(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                       const char* solver_name, double tol, size_t max_iter, size_t* f_evals, double* residual,
                       double* test_accuracy) {
  return guarded([&] {
    require(model && data && solver_name, "null argument");
    const std::string name = solver_name;
    const ignn::FixedPointProblem problem(model->model, data->a_hat, data->data.features);
    const ignn::Matrix zeros(problem.rows(), problem.cols());
    ignn::SolveTrace t;
    if (name == "picard") {
      t = ignn::PicardSolver().solve(problem, zeros, tol, max_iter);
    } else if (name == "anderson") {
      t = ignn::AndersonSolver(5, 1.0).solve(problem, zeros, tol, max_iter);
    } else if (name == "neural") {
      require(solver, "neural solve needs a solver handle");
      t = solver->solver.solve(problem, ignn::Matrix{}, tol, max_iter);
    } else {
      throw InvalidArgument{"unknown solver '" + name + "'"};
    }
    if (f_evals) *f_evals = t.f_evals;
    if (residual) *residual = t.final_residual();
    if (test_accuracy) *test_accuracy = ignn::accuracy(model->model, t.final_z, data->data.labels, data->data.splits.test);
  });
}

ignn_status ignn_bench_pareto(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                              const ignn_config* config, const char* dataset_name, const char* csv_path) {
  return guarded([&] {
    require(model && solver && data && config && csv_path, "null argument");
    const ignn::Config& c = config->config;
    ignn::ParetoOptions opts;
    opts.max_budget = 2 * solver->solver.options().K;
    opts.repeats = c.count("bench_repeats");
    const ignn::ReportHeader header{c.integer("seed"), dataset_name ? dataset_name : data->name, c.hash()};
    const auto report = ignn::run_pareto(model->model, solver->solver, data->data, data->a_hat, opts, header);
    auto out = open_output(csv_path);
    ignn::write_report_csv(out, report);
  });
}

ignn_status ignn_bench_trace(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                             const ignn_config* config, const char* csv_path) {
  return guarded([&] {
    require(model && solver && data && config && csv_path, "null argument");
    const auto traces = ignn::run_traces(model->model, solver->solver, data->data, data->a_hat,
                                         config->config.real("tol"), 2 * solver->solver.options().K);
    auto out = open_output(csv_path);
    ignn::write_traces_csv(out, traces);
  });
}

ignn_status ignn_bench_overhead(const char* log_path, const char* json_path, double* ratio_out) {
  return guarded([&] {
    require(log_path && json_path, "null argument");
    std::ifstream in(log_path);
    if (!in) throw ignn::IoError(std::string("cannot open log ") + log_path);
    const auto summary = ignn::summarize_overhead(in);
    auto out = open_output(json_path);
    out << ignn::overhead_json(summary) << '\n';
    if (ratio_out) *ratio_out = summary.ratio;
  });
}

}  // extern "C"
