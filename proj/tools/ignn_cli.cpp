// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ignn/ignn.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Failure {
  ignn_status status;
};

void check(ignn_status s) {
  if (s != IGNN_OK) throw Failure{s};
}

int exit_code(ignn_status s) {
  switch (s) {
    case IGNN_ERR_CONFIG: return 2;
    case IGNN_ERR_CONVERGENCE: return 3;
    case IGNN_ERR_IO:
    case IGNN_ERR_PARSE: return 4;
    default: return 1;
  }
}

template <class T, void (*Destroy)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Destroy(p); }
};

using ConfigHandle = Handle<ignn_config, ignn_config_destroy>;
using DatasetHandle = Handle<ignn_dataset, ignn_dataset_destroy>;
using ModelHandle = Handle<ignn_model, ignn_model_destroy>;
using SolverHandle = Handle<ignn_solver, ignn_solver_destroy>;

struct Options {
  std::string command;
  std::string config;
  std::string data;
  std::string out = ".";
  std::string model;
  std::string solver;
  std::string log;
  long long seed = -1;
};

class Run {
 public:
  explicit Run(const Options& o) : o_(o) {
    if (o.config.empty()) {
      check(ignn_config_default(&config_.p));
    } else {
      check(ignn_config_load(o.config.c_str(), &config_.p));
    }
    if (o.seed >= 0) check(ignn_config_set(config_.p, "seed", std::to_string(o.seed).c_str()));
    char buf[64];
    check(ignn_config_get(config_.p, "seed", buf, sizeof buf));
    seed_ = std::stoull(buf);
    char hash[17];
    check(ignn_config_hash(config_.p, hash));
    hash_ = hash;
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec || !fs::is_directory(o.out)) {
      std::fprintf(stderr, "ignn: cannot create output directory %s\n", o.out.c_str());
      throw Failure{IGNN_ERR_IO};
    }
  }

  std::string out_path(const std::string& name) {
    files_.push_back(name);
    return (fs::path(o_.out) / name).string();
  }

  void open_data() {
    if (o_.data.empty()) {
      std::fprintf(stderr, "ignn: --data is required for %s\n", o_.command.c_str());
      throw Failure{IGNN_ERR_CONFIG};
    }
    check(ignn_dataset_open(o_.data.c_str(), seed_, &data_.p));
  }

  void load_model() {
    if (o_.model.empty()) {
      check(ignn_model_create(config_.p, data_.p, seed_, &model_.p));
    } else {
      check(ignn_model_load(o_.model.c_str(), &model_.p));
    }
  }

  void load_solver(bool required) {
    if (o_.solver.empty()) {
      if (required) {
        std::fprintf(stderr, "ignn: --solver is required for %s\n", o_.command.c_str());
        throw Failure{IGNN_ERR_CONFIG};
      }
      check(ignn_solver_create(config_.p, model_.p, seed_, &solver_.p));
    } else {
      check(ignn_solver_load(o_.solver.c_str(), &solver_.p));
    }
  }

  void execute() {
    const std::string& c = o_.command;
    if (c == "overhead") {
      const std::string log = o_.log.empty() ? (fs::path(o_.out) / "train_log.jsonl").string() : o_.log;
      double ratio = 0.0;
      check(ignn_bench_overhead(log.c_str(), out_path("overhead.json").c_str(), &ratio));
      std::printf("solver/model training time ratio: %.6f\n", ratio);
      summary_["ratio"] = ratio;
      write_manifest();
      return;
    }
    open_data();
    if (c == "train") {
      load_model();
      double acc = 0.0;
      check(ignn_train_model(model_.p, data_.p, config_.p, out_path("train_log.jsonl").c_str(), &acc));
      check(ignn_model_save(model_.p, out_path("model.bin").c_str()));
      std::printf("test accuracy: %.4f\n", acc);
      summary_["test_accuracy"] = acc;
    } else if (c == "train-solver") {
      if (o_.model.empty()) {
        std::fprintf(stderr, "ignn: --model is required for train-solver\n");
        throw Failure{IGNN_ERR_CONFIG};
      }
      load_model();
      load_solver(false);
      check(ignn_train_solver(solver_.p, model_.p, data_.p, config_.p, out_path("solver_log.jsonl").c_str()));
      check(ignn_solver_save(solver_.p, out_path("solver.bin").c_str()));
      report_solve();
    } else if (c == "alternate") {
      load_model();
      load_solver(false);
      double acc = 0.0;
      check(ignn_alternate_train(model_.p, solver_.p, data_.p, config_.p, out_path("train_log.jsonl").c_str(),
                                 &acc));
      check(ignn_model_save(model_.p, out_path("model.bin").c_str()));
      check(ignn_solver_save(solver_.p, out_path("solver.bin").c_str()));
      std::printf("test accuracy: %.4f\n", acc);
      summary_["test_accuracy"] = acc;
    } else if (c == "pareto" || c == "trace") {
      if (o_.model.empty()) {
        std::fprintf(stderr, "ignn: --model is required for %s\n", c.c_str());
        throw Failure{IGNN_ERR_CONFIG};
      }
      load_model();
      load_solver(true);
      if (c == "pareto") {
        check(ignn_bench_pareto(model_.p, solver_.p, data_.p, config_.p, o_.data.c_str(),
                                out_path("pareto.csv").c_str()));
      } else {
        check(ignn_bench_trace(model_.p, solver_.p, data_.p, config_.p, out_path("trace.csv").c_str()));
      }
    }
    write_manifest();
  }

 private:
  void report_solve() {
    for (const char* name : {"anderson", "neural"}) {
      std::size_t evals = 0;
      double residual = 0.0;
      check(ignn_solve(model_.p, solver_.p, data_.p, name, 1e-3, 1000, &evals, &residual, nullptr));
      std::printf("%-8s f_evals to 1e-3: %zu\n", name, evals);
      summary_[std::string(name) + "_f_evals_1e-3"] = evals;
    }
  }

  void write_manifest() {
    nlohmann::json m{{"command", o_.command}, {"config_hash", hash_}, {"seed", seed_}, {"files", files_}};
    if (!o_.data.empty()) m["dataset"] = o_.data;
    if (!summary_.empty()) m["summary"] = summary_;
    std::ofstream out(fs::path(o_.out) / "manifest.json");
    if (!out) throw Failure{IGNN_ERR_IO};
    out << m.dump(2) << '\n';
  }

  const Options& o_;
  ConfigHandle config_;
  DatasetHandle data_;
  ModelHandle model_;
  SolverHandle solver_;
  unsigned long long seed_ = 0;
  std::string hash_;
  std::vector<std::string> files_;
  nlohmann::json summary_ = nlohmann::json::object();
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit graph networks with learned fixed-point solvers"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train an IGNN with classic Anderson as the solver"},
      {"train-solver", "train the neural solver against a frozen model"},
      {"alternate", "alternate solver tuning and model training"},
      {"pareto", "accuracy and time against iteration budget for every solver"},
      {"trace", "residual per step for every solver"},
      {"overhead", "solver versus model training time from a log"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "key=value config file");
    sub->add_option("--data", o.data, "dataset directory or synth:citeseer / synth:chain[:c:l:d]");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "overrides the config seed");
    sub->add_option("--model", o.model, "model checkpoint");
    sub->add_option("--solver", o.solver, "solver checkpoint");
    sub->add_option("--log", o.log, "training log (overhead)");
    sub->callback([&o, name = name] { o.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    Run run(o);
    run.execute();
    return 0;
  } catch (const Failure& f) {
    if (f.status != IGNN_OK && *ignn_last_error()) {
      std::fprintf(stderr, "ignn: %s: %s\n", ignn_status_name(f.status), ignn_last_error());
    }
    return exit_code(f.status);
  }
}
