// Links only the shared library, the same way the CLI does.
#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "ignn/ignn.h"

namespace {

std::string scratch(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ignn_capi_" + std::to_string(::getpid()) + "_" + name)).string();
}

}  // namespace

TEST(CApi, ConfigErrorsMapToStatusCodes) {
  ignn_config* c = nullptr;
  ASSERT_EQ(ignn_config_default(&c), IGNN_OK);
  EXPECT_EQ(ignn_config_set(c, "no_such_key", "1"), IGNN_ERR_CONFIG);
  EXPECT_NE(std::strstr(ignn_last_error(), "no_such_key"), nullptr);
  EXPECT_EQ(ignn_config_set(c, "lr", "0.01"), IGNN_OK);
  char buf[32];
  ASSERT_EQ(ignn_config_get(c, "lr", buf, sizeof buf), IGNN_OK);
  EXPECT_STREQ(buf, "0.01");
  char tiny[2];
  EXPECT_EQ(ignn_config_get(c, "lr", tiny, sizeof tiny), IGNN_ERR_INVALID_ARGUMENT);
  char hash[17];
  ASSERT_EQ(ignn_config_hash(c, hash), IGNN_OK);
  EXPECT_EQ(std::strlen(hash), 16u);
  ignn_config_destroy(c);

  ignn_config* missing = nullptr;
  EXPECT_EQ(ignn_config_load("/nonexistent/ignn.cfg", &missing), IGNN_ERR_IO);
  EXPECT_EQ(missing, nullptr);
  EXPECT_EQ(ignn_config_default(nullptr), IGNN_ERR_INVALID_ARGUMENT);
  EXPECT_STREQ(ignn_status_name(IGNN_ERR_CONVERGENCE), "convergence failure");
}

TEST(CApi, EndToEndOnChain) {
  ignn_config* c = nullptr;
  ignn_dataset* d = nullptr;
  ignn_model* m = nullptr;
  ignn_solver* s = nullptr;
  ASSERT_EQ(ignn_config_default(&c), IGNN_OK);
  ASSERT_EQ(ignn_config_set(c, "nhid", "8"), IGNN_OK);
  ASSERT_EQ(ignn_dataset_open("synth:chain:2:4:5", 1, &d), IGNN_OK);
  size_t nodes = 0, features = 0, classes = 0, edges = 0;
  ASSERT_EQ(ignn_dataset_info(d, &nodes, &features, &classes, &edges), IGNN_OK);
  EXPECT_EQ(nodes, 8u);
  EXPECT_EQ(features, 5u);
  EXPECT_EQ(edges, 6u);
  ASSERT_EQ(ignn_model_create(c, d, 1, &m), IGNN_OK);
  ASSERT_EQ(ignn_solver_create(c, m, 1, &s), IGNN_OK);
  size_t mp = 0, sp = 0;
  ASSERT_EQ(ignn_model_param_count(m, &mp), IGNN_OK);
  ASSERT_EQ(ignn_solver_param_count(s, &sp), IGNN_OK);
  EXPECT_GT(mp, 0u);
  EXPECT_GT(sp, 0u);

  size_t evals = 0;
  double residual = 0.0, acc = -1.0;
  ASSERT_EQ(ignn_solve(m, s, d, "anderson", 1e-8, 500, &evals, &residual, &acc), IGNN_OK);
  EXPECT_LE(residual, 1e-8);
  EXPECT_GE(acc, 0.0);
  EXPECT_EQ(ignn_solve(m, s, d, "bogus", 1e-8, 500, &evals, &residual, &acc), IGNN_ERR_INVALID_ARGUMENT);
  // An exhausted budget is a result, not an error.
  ASSERT_EQ(ignn_solve(m, s, d, "picard", 1e-14, 1, &evals, &residual, nullptr), IGNN_OK);
  EXPECT_EQ(evals, 2u);
  EXPECT_GT(residual, 1e-14);

  const std::string path = scratch("model.bin");
  ASSERT_EQ(ignn_model_save(m, path.c_str()), IGNN_OK);
  ignn_model* back = nullptr;
  ASSERT_EQ(ignn_model_load(path.c_str(), &back), IGNN_OK);
  size_t back_params = 0;
  ignn_model_param_count(back, &back_params);
  EXPECT_EQ(back_params, mp);
  ignn_solver* wrong = nullptr;
  EXPECT_EQ(ignn_solver_load(path.c_str(), &wrong), IGNN_ERR_PARSE);
  std::remove(path.c_str());

  ignn_model_destroy(back);
  ignn_solver_destroy(s);
  ignn_model_destroy(m);
  ignn_dataset_destroy(d);
  ignn_config_destroy(c);
  // Destroying null is a no-op.
  ignn_model_destroy(nullptr);
}

TEST(CApi, OverheadOnMissingLogIsIoError) {
  double ratio = 0.0;
  EXPECT_EQ(ignn_bench_overhead("/nonexistent/log.jsonl", scratch("o.json").c_str(), &ratio), IGNN_ERR_IO);
}
