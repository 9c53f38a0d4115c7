#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "bidsim/config.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() : dir(fs::temp_directory_path() / ("bidsim_cfg_" + std::to_string(::getpid()))) {
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string write(const std::string& name, const std::string& content) const {
    const auto p = (dir / name).string();
    std::ofstream f(p);
    f << content;
    return p;
  }
};

}  // namespace

TEST_CASE("defaults are self-consistent") {
  const auto cfg = bidsim::default_experiment_config();
  CHECK_NOTHROW(bidsim::validate_experiment_config(cfg));
  CHECK(cfg.run.sac.gamma == 0.98);
  CHECK(cfg.run.sac.alpha == 1e-4);
  CHECK(cfg.run.network.hidden_layers == 6);
  CHECK(cfg.run.battery.energy_capacity == 1029.0);
  CHECK(cfg.run.battery.max_charge == 300.0);
  CHECK(cfg.stack.size() == 10);
  CHECK(cfg.stack.front().marginal_cost == 10.0);
  CHECK(cfg.stack.back().marginal_cost == 100.0);
}

TEST_CASE("an empty document resolves to the defaults") {
  TempDir tmp;
  const auto cfg = bidsim::load_experiment_config(tmp.write("empty.json", "{}"));
  const auto defaults = bidsim::default_experiment_config();
  CHECK(bidsim::effective_config_json(cfg).dump() ==
        bidsim::effective_config_json(defaults).dump());
}

TEST_CASE("fields override defaults and invalid values name their path") {
  TempDir tmp;
  const auto ok = tmp.write("ok.json", R"({"sac": {"gamma": 0.9}, "mpc": {"grid_levels": 50}})");
  const auto cfg = bidsim::load_experiment_config(ok);
  CHECK(cfg.run.sac.gamma == 0.9);
  CHECK(cfg.run.mpc_grid_levels == 50);

  const auto bad_gamma = tmp.write("g.json", R"({"sac": {"gamma": 1.5}})");
  try {
    bidsim::load_experiment_config(bad_gamma);
    FAIL("expected ConfigError");
  } catch (const bidsim::ConfigError& e) {
    CHECK(std::string(e.what()).find("sac.gamma") != std::string::npos);
  }

  const auto bad_floor = tmp.write("f.json",
                                   R"({"battery": {"soe_floor": 2000.0, "energy_capacity": 1029.0}})");
  try {
    bidsim::load_experiment_config(bad_floor);
    FAIL("expected ConfigError");
  } catch (const bidsim::ConfigError& e) {
    CHECK(std::string(e.what()).find("battery.soe_floor") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected") {
  TempDir tmp;
  CHECK_THROWS_AS(bidsim::load_experiment_config(tmp.write("u.json", R"({"sacc": {}})")),
                  bidsim::ConfigError);
  CHECK_THROWS_AS(bidsim::load_experiment_config(tmp.write("u2.json", R"({"sac": {"gama": 0.9}})")),
                  bidsim::ConfigError);
}

TEST_CASE("missing or malformed files fail with the path in the message") {
  try {
    bidsim::load_experiment_config("/nonexistent/config.json");
    FAIL("expected ConfigError");
  } catch (const bidsim::ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/config.json") != std::string::npos);
  }
  TempDir tmp;
  CHECK_THROWS_AS(bidsim::load_experiment_config(tmp.write("bad.json", "{not json")),
                  bidsim::ConfigError);
}

TEST_CASE("stack accepts both an explicit list and a generator pattern") {
  TempDir tmp;
  const auto explicit_path = tmp.write("s1.json", R"({
    "stack": [
      {"agent_id": "coal", "marginal_cost": 15.0, "capacity": 2500.0},
      {"agent_id": "gas", "marginal_cost": 60.0, "capacity": 2500.0}
    ]})");
  const auto cfg1 = bidsim::load_experiment_config(explicit_path);
  REQUIRE(cfg1.stack.size() == 2);
  CHECK(cfg1.stack[1].agent_id == "gas");

  const auto pattern_path = tmp.write("s2.json",
                                      R"({"stack": {"generators": 4, "cost_start": 5, "cost_step": 20, "capacity_each": 1500}})");
  const auto cfg2 = bidsim::load_experiment_config(pattern_path);
  REQUIRE(cfg2.stack.size() == 4);
  CHECK(cfg2.stack[3].marginal_cost == 65.0);

  CHECK_THROWS_AS(bidsim::load_experiment_config(tmp.write("s3.json",
                                                           R"({"stack": [{"agent_id": "battery", "marginal_cost": 1, "capacity": 10}]})")),
                  bidsim::ConfigError);
}

TEST_CASE("synthetic demand must fit under the stack capacity") {
  TempDir tmp;
  const auto p = tmp.write("d.json", R"({"demand": {"base": 4500.0, "amplitude": 1200.0}})");
  CHECK_THROWS_AS(bidsim::load_experiment_config(p), bidsim::ConfigError);
}

TEST_CASE("environment variables override file values") {
  TempDir tmp;
  const auto p = tmp.write("e.json", R"({"sac": {"gamma": 0.9}})");
  ::setenv("BIDSIM_SAC_GAMMA", "0.7", 1);
  ::setenv("BIDSIM_SEED", "42", 1);
  ::setenv("BIDSIM_SCHEDULE_FINAL_SUPERVISOR_WEIGHT", "1.0", 1);
  ::setenv("BIDSIM_FORECAST_MODE", "perfect", 1);
  const auto cfg = bidsim::load_experiment_config(p);
  ::unsetenv("BIDSIM_SAC_GAMMA");
  ::unsetenv("BIDSIM_SEED");
  ::unsetenv("BIDSIM_SCHEDULE_FINAL_SUPERVISOR_WEIGHT");
  ::unsetenv("BIDSIM_FORECAST_MODE");
  CHECK(cfg.run.sac.gamma == 0.7);
  CHECK(cfg.seed == 42);
  CHECK(cfg.run.sac.schedule.final_supervisor_weight == 1.0);
  CHECK(cfg.run.forecast.mode == bidsim::ForecastConfig::Mode::perfect);
}

TEST_CASE("csv demand source round-trips through make_demand") {
  TempDir tmp;
  const auto series = bidsim::synth_demand(2, 48, 2500.0, 1000.0, 0.0, 9);
  const auto csv = (tmp.dir / "demand.csv").string();
  bidsim::save_demand_csv(series, csv);
  const auto p = tmp.write("c.json",
                           std::string(R"({"demand": {"source": "csv", "csv_path": ")") + csv +
                               R"("}})");
  const auto cfg = bidsim::load_experiment_config(p);
  const auto loaded = bidsim::make_demand(cfg);
  CHECK(loaded.demand == series.demand);
}
