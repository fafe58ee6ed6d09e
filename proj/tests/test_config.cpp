#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomdpgrad/config.hpp"

#include "test_util.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace pomdpgrad;

namespace {

const char* kFullConfig = R"(# experiment description
[model]
path = models/demo.pomdp
format = pomdp

[policy]
n_internal = 2
tie_mode = TIED_MEMORY
checkpoint = theta0.json

[estimator]
tag = B-TD
beta = 0.95
lambda = 0.8
T = 50000
seeds = 7
critic = discounted
center = false
eta_mode = ratio
step_a = 2.0
step_b = 500

[run]
mode = compare
iterations = 100
step = 0.005
seed = 321
out = out_dir
near_minimum = yes

[posmdp]
sojourn = twopoint 1.0 3.0 0.25
cost_mode = proportional
)";

int run_cli(const std::string& args) {
  std::string cmd = std::string(POMDPGRAD_CLI_PATH) + " " + args +
                    " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "pomdpgrad_cfg_test";
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("full config file parses into every field") {
  ExperimentConfig c = parse_config_text(kFullConfig);
  CHECK(c.model_path == "models/demo.pomdp");
  CHECK(c.model_format == "pomdp");
  CHECK(c.n_internal == 2);
  CHECK(c.tie_mode == TieMode::TIED_MEMORY);
  CHECK(c.checkpoint == "theta0.json");
  CHECK(c.tag == EstimatorTag::BTD);
  CHECK(c.beta == 0.95);
  CHECK(c.lambda == 0.8);
  CHECK(c.T == 50000);
  CHECK(c.seeds == 7);
  CHECK(c.critic_average == false);
  CHECK(c.center == false);
  CHECK(c.eta_mode == EtaMode::RATIO);
  CHECK(c.schedule.a == 2.0);
  CHECK(c.schedule.b == 500.0);
  CHECK(c.mode == "compare");
  CHECK(c.iterations == 100);
  CHECK(c.step == 0.005);
  CHECK(c.seed == 321);
  CHECK(c.out_dir == "out_dir");
  CHECK(c.near_minimum == true);
  CHECK(c.sojourn.family == SojournFamily::TWO_POINT);
  CHECK(c.sojourn.a == 1.0);
  CHECK(c.sojourn.b == 3.0);
  CHECK(c.sojourn.p == 0.25);
  CHECK(c.cost_mode == PosmdpCostMode::PROPORTIONAL);
}

TEST_CASE("config hash is stable and content sensitive") {
  ExperimentConfig a = parse_config_text(kFullConfig);
  ExperimentConfig b = parse_config_text(kFullConfig);
  CHECK(a.hash == b.hash);
  ExperimentConfig c = parse_config_text(std::string(kFullConfig) + "\n# x\n");
  CHECK(a.hash != c.hash);
}

TEST_CASE("unknown keys and bad values are rejected with context") {
  CHECK_THROWS_AS(parse_config_text("[run]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[estimator]\nbeta = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[estimator]\ntag = SARSA\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[posmdp]\nsojourn = weibull 1\n"),
                  ConfigError);
  try {
    parse_config_text("[model]\npath = x\nnot a key value line\n");
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_config_text("[model\npath = x\n");
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("comments and blank lines are ignored") {
  ExperimentConfig c = parse_config_text(
      "\n# comment\n; other comment\n[run]\n\nseed = 5\n");
  CHECK(c.seed == 5);
}

TEST_CASE("load_config reports missing files") {
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("cli exits 0 on a valid exact run") {
  auto dir = temp_dir();
  int rc = run_cli("--model " + testutil::asset("toy2.pomdp") + " --out " +
                   (dir / "ok").string() + " exact");
  CHECK(rc == 0);
}

TEST_CASE("cli exact output matches the frozen golden run") {
  auto dir = temp_dir() / "golden_check";
  std::filesystem::remove_all(dir);
  int rc = run_cli("--config " + testutil::asset("toy2_exact.ini") +
                   " --model " + testutil::asset("toy2.pomdp") + " --out " +
                   dir.string() + " exact");
  REQUIRE(rc == 0);
  for (const char* name : {"solution_states.csv", "solution_values.csv",
                           "conditional_means.csv", "gradient.csv"})
    CHECK(slurp(dir / name) == slurp(testutil::asset(std::string("golden/") +
                                                     name)));
}

TEST_CASE("cli exits 2 on config errors") {
  auto dir = temp_dir();
  std::ofstream(dir / "bad.ini") << "[run]\nbogus = 1\n";
  CHECK(run_cli("--config " + (dir / "bad.ini").string() + " exact") == 2);
  CHECK(run_cli("exact") == 2);  // no model given
}

TEST_CASE("cli exits 3 on model violations") {
  auto dir = temp_dir();
  // malformed file: transition row does not sum to one
  std::ofstream(dir / "bad.pomdp")
      << "discount: 0.9\nvalues: reward\nstates: a b\nactions: u\n"
         "observations: o\nT: u\n0.5 0.4\n0.5 0.5\nO: u : * uniform\n"
         "R: u : * : * : * 0.0\n";
  CHECK(run_cli("--model " + (dir / "bad.pomdp").string() + " exact") == 3);
  // multichain model: two absorbing states under the only action
  std::ofstream(dir / "multi.pomdp")
      << "discount: 0.9\nvalues: reward\nstates: a b\nactions: u\n"
         "observations: o\nT: u identity\nO: u : * uniform\n"
         "R: u : * : * : * 0.0\n";
  CHECK(run_cli("--model " + (dir / "multi.pomdp").string() + " exact") == 3);
}
