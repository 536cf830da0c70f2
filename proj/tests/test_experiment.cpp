#include "mforce/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mforce;
using nlohmann::json;

namespace {

json smallest() {
  return json::parse(R"({
    "name": "tiny",
    "system": {"topology": "chain", "n_sites": 4, "n_system": 2, "coupling": 1.0, "field": 0.3},
    "beta_grid": {"values": [1.0]},
    "sampler": {"n_v": 1, "k": 30, "seed": 1},
    "oracle": "dense",
    "repeats": 1
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mforce_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesGrids) {
  json j = smallest();
  j["beta_grid"] = json::parse(R"({"log_range": {"min": 0.1, "max": 10, "points": 3}})");
  j["alpha_grid"] = json::parse(R"([0, 1, "inf"])");
  j["h_grid"] = json::parse(R"({"linear_range": {"min": 0, "max": 2.2, "points": 23}})");
  const auto cfg = parse_experiment_config(j);
  ASSERT_EQ(cfg.betas.size(), 3u);
  EXPECT_NEAR(cfg.betas[1], 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(cfg.alpha_grid->back()));
  EXPECT_EQ(cfg.h_grid->size(), 23u);
  EXPECT_NEAR(cfg.h_grid->at(22), 2.2, 1e-15);
  EXPECT_EQ(grid_points(cfg).size(), 3u * 23u);
}

TEST(Config, RejectsInvalid) {
  json j = smallest();
  j["repeats"] = 0;
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
  j = smallest();
  j["beta_grid"] = json::parse(R"({"values": [-1]})");
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
  j = smallest();
  j["oracle"] = "magic";
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
  j = smallest();
  j.erase("system");
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
  j = smallest();
  j["sampler"]["n_v"] = 0;
  EXPECT_THROW(parse_experiment_config(j), std::invalid_argument);
}

TEST(Config, ShippedConfigsParse) {
  const std::filesystem::path dir = std::filesystem::path(MFORCE_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    const auto cfg = load_experiment_config(e.path());
    for (const auto& p : grid_points(cfg)) EXPECT_NO_THROW(make_spec(cfg.system, p)) << e.path();
    ++n;
  }
  EXPECT_GT(n, 5);
}

TEST(Sweep, SmallestRunHasEstimatorAndOracle) {
  const auto res = run_sweep(parse_experiment_config(smallest()));
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_TRUE(res.rows[0].ok);
  ASSERT_TRUE(res.rows[0].oracle.has_value());
  std::ostringstream csv;
  write_csv(csv, res, parse_experiment_config(smallest()).sampler);
  std::istringstream lines(csv.str());
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_FALSE(std::getline(lines, extra) && !extra.empty());
  EXPECT_EQ(header.rfind("beta,h,alpha,epsilon,repeat,rho_eig_1", 0), 0u);
  EXPECT_NE(header.find("oracle_H_eig_4"), std::string::npos);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(row.find(",,"), std::string::npos);
}

TEST(Sweep, CartesianOrderAndRepeats) {
  json j = smallest();
  j["oracle"] = "none";
  j["beta_grid"] = json::parse("[0.5, 2.0]");
  j["epsilon_grid"] = json::parse("[0, 1]");
  j["h_grid"] = json::parse("[0.1, 0.2, 0.3]");
  j["repeats"] = 2;
  const auto res = run_sweep(parse_experiment_config(j));
  ASSERT_EQ(res.rows.size(), 3u * 2u * 2u * 2u);
  EXPECT_EQ(res.rows[0].point.h, 0.1);
  EXPECT_EQ(res.rows[1].beta, 2.0);
  EXPECT_EQ(res.rows[2].repeat, 1);
  EXPECT_EQ(res.rows[4].point.epsilon, 1.0);
  EXPECT_NE(res.rows[0].seed, res.rows[2].seed);
  EXPECT_FALSE(res.rows[0].oracle.has_value());
}

TEST(Sweep, SolvableOracleRequiresChain) {
  json j = smallest();
  j["oracle"] = "solvable";
  j["system"]["n_sites"] = 6;
  const auto res = run_sweep(parse_experiment_config(j));
  const auto d = dense_reduced(make_chain(6, 2, 1.0, 0.3), 1.0);
  EXPECT_LT((res.rows[0].oracle->h_eigenvalues - d.h_eigenvalues).cwiseAbs().maxCoeff(), 1e-9);
  j["system"]["topology"] = "ladder";
  EXPECT_THROW(run_sweep(parse_experiment_config(j)), ConfigError);
}

TEST(Sweep, DenseOracleInfeasibleIsHardError) {
  json j = smallest();
  j["system"]["n_sites"] = 13;
  j["oracle"] = "dense";
  EXPECT_THROW(run_sweep(parse_experiment_config(j)), DimensionError);
  j["oracle"] = "dense_if_feasible";
  j["sampler"]["k"] = 2;
  const auto res = run_sweep(parse_experiment_config(j));
  EXPECT_TRUE(res.oracle_skipped);
  EXPECT_FALSE(res.rows[0].oracle.has_value());
}

TEST(Run, ByteIdenticalCsvAndManifest) {
  json j = smallest();
  j["system"]["n_sites"] = 6;
  j["beta_grid"] = json::parse("[0.5, 1, 4]");
  j["sampler"]["n_v"] = 6;
  j["repeats"] = 2;
  const auto cfg = parse_experiment_config(j);
  const auto a = scratch("a");
  const auto b = scratch("b");
  RunOptions oa{a.string(), 1, std::nullopt};
  RunOptions ob{b.string(), 2, std::nullopt};
  run_experiment(cfg, oa);
  run_experiment(cfg, ob);
  EXPECT_EQ(slurp(a / "tiny.csv"), slurp(b / "tiny.csv"));
  const json man = json::parse(slurp(a / "tiny_manifest.json"));
  EXPECT_EQ(man.at("schema_version").get<int>(), kCsvSchemaVersion);
  EXPECT_EQ(man.at("seed").get<std::uint64_t>(), 1u);
  EXPECT_EQ(man.at("git_describe").get<std::string>(), MFORCE_GIT_DESCRIBE);
  EXPECT_GE(man.at("wall_time_seconds").get<double>(), 0.0);
  EXPECT_EQ(man.at("rows").get<int>(), 6);
  RunOptions oc{a.string(), 1, 99};
  run_experiment(cfg, oc);
  EXPECT_NE(slurp(a / "tiny.csv"), slurp(b / "tiny.csv"));
}

TEST(Run, OutputDirectoryPrecedence) {
  const auto cfg = parse_experiment_config(smallest());
  EXPECT_EQ(resolve_output_dir(cfg, RunOptions{"x", std::nullopt, std::nullopt}), std::filesystem::path("x"));
  ::setenv("MFORCE_OUT_DIR", "from_env", 1);
  EXPECT_EQ(resolve_output_dir(cfg, RunOptions{}), std::filesystem::path("from_env"));
  ::unsetenv("MFORCE_OUT_DIR");
  EXPECT_EQ(resolve_output_dir(cfg, RunOptions{}), std::filesystem::path("out"));
}

TEST(Verify, PassCase) {
  const auto rep = verify_experiment(load_experiment_config(std::filesystem::path(MFORCE_SOURCE_DIR) / "configs/verify_chain8.json"));
  for (const auto& l : rep.lines) std::cout << l << "\n";
  EXPECT_TRUE(rep.passed);
}

TEST(Verify, EpsilonZeroIsExact) {
  const auto rep =
      verify_experiment(load_experiment_config(std::filesystem::path(MFORCE_SOURCE_DIR) / "configs/verify_epsilon0.json"));
  for (const auto& l : rep.lines) std::cout << l << "\n";
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_h_error, 1e-10);
}

TEST(Verify, TinySampleCountFails) {
  const auto rep =
      verify_experiment(load_experiment_config(std::filesystem::path(MFORCE_SOURCE_DIR) / "configs/verify_tiny_nv.json"));
  EXPECT_FALSE(rep.passed);
}
