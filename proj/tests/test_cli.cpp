#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = std::string(BIDSIM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Two days, coarse grid, tiny network: fast enough for spawned-binary tests.
const char* kSmallConfig = R"({
  "mpc": {"horizon": 24, "grid_levels": 24},
  "network": {"hidden_layers": 2, "hidden_width": 8},
  "schedule": {"hold_steps": 8, "ramp_steps": 16},
  "demand": {"days": 2, "steps_per_day": 24, "noise_std": 100.0}
})";

struct TempDir {
  fs::path dir;
  TempDir() : dir(fs::temp_directory_path() / ("bidsim_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("missing config exits 2 and names the path") {
  TempDir tmp;
  const auto r = run_cli("run --config /no/such/config.json --out " + (tmp.dir / "o").string(),
                         tmp.dir);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("/no/such/config.json") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  TempDir tmp;
  CHECK(run_cli("run", tmp.dir).exit_code == 2);             // --config required
  CHECK(run_cli("frobnicate", tmp.dir).exit_code == 2);      // unknown subcommand
  const auto cfg = tmp.dir / "c.json";
  std::ofstream(cfg) << kSmallConfig;
  CHECK(run_cli("run --config " + cfg.string() + " --policy dqn", tmp.dir).exit_code == 2);
}

TEST_CASE("validate accepts the defaults and rejects bad fields by path") {
  TempDir tmp;
  const auto good = tmp.dir / "good.json";
  std::ofstream(good) << "{}";
  const auto ok = run_cli("validate --config " + good.string(), tmp.dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("\"gamma\": 0.98") != std::string::npos);
  CHECK(ok.output.find("\"grid_levels\": 172") != std::string::npos);

  const auto bad = tmp.dir / "bad.json";
  std::ofstream(bad) << R"({"sac": {"gamma": 1.5}})";
  const auto rej = run_cli("validate --config " + bad.string(), tmp.dir);
  CHECK(rej.exit_code == 2);
  CHECK(rej.output.find("sac.gamma") != std::string::npos);

  const auto floor = tmp.dir / "floor.json";
  std::ofstream(floor) << R"({"battery": {"soe_floor": 1029.0}})";
  const auto rej2 = run_cli("validate --config " + floor.string(), tmp.dir);
  CHECK(rej2.exit_code == 2);
  CHECK(rej2.output.find("battery.soe_floor") != std::string::npos);
}

TEST_CASE("run writes the metrics document and the series files") {
  TempDir tmp;
  const auto cfg = tmp.dir / "c.json";
  std::ofstream(cfg) << kSmallConfig;
  const auto out = tmp.dir / "out";
  const auto r = run_cli("run --config " + cfg.string() + " --policy mpc --out " + out.string(),
                         tmp.dir);
  REQUIRE(r.exit_code == 0);
  const auto metrics = slurp(out / "metrics.json");
  CHECK(metrics.find("avg_revenue_per_day") != std::string::npos);
  CHECK(metrics.find("pct_bid_capacity_cleared") != std::string::npos);
  CHECK(metrics.find("pct_preshield_violations") != std::string::npos);
  CHECK(metrics.find("pct_generator_bids") != std::string::npos);
  for (const char* f : {"trace.csv", "cumulative_revenue.csv", "clearing_prices.csv", "soe.csv",
                        "bids.csv"}) {
    INFO(f);
    CHECK(fs::exists(out / f));
  }
}

TEST_CASE("identical config and seed reproduce outputs byte for byte") {
  TempDir tmp;
  const auto cfg = tmp.dir / "c.json";
  std::ofstream(cfg) << kSmallConfig;
  const auto o1 = tmp.dir / "o1";
  const auto o2 = tmp.dir / "o2";
  REQUIRE(run_cli("run --config " + cfg.string() + " --policy sac --seed 5 --out " + o1.string(),
                  tmp.dir).exit_code == 0);
  REQUIRE(run_cli("run --config " + cfg.string() + " --policy sac --seed 5 --out " + o2.string(),
                  tmp.dir).exit_code == 0);
  CHECK(slurp(o1 / "metrics.json") == slurp(o2 / "metrics.json"));
  CHECK(slurp(o1 / "trace.csv") == slurp(o2 / "trace.csv"));
  CHECK(slurp(o1 / "cumulative_revenue.csv") == slurp(o2 / "cumulative_revenue.csv"));
}

TEST_CASE("compare reports both policies and their revenue ratio") {
  TempDir tmp;
  const auto cfg = tmp.dir / "c.json";
  std::ofstream(cfg) << kSmallConfig;
  const auto out = tmp.dir / "cmp";
  const auto r = run_cli("compare --config " + cfg.string() + " --out " + out.string(), tmp.dir);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(out / "compare.json"));
  const auto doc = slurp(out / "compare.json");
  CHECK(doc.find("median_revenue_ratio") != std::string::npos);
  // the compare mpc leg equals a standalone mpc run on the same inputs
  const auto solo = tmp.dir / "solo";
  REQUIRE(run_cli("run --config " + cfg.string() + " --policy mpc --out " + solo.string(),
                  tmp.dir).exit_code == 0);
  CHECK(slurp(out / "mpc" / "metrics.json") == slurp(solo / "metrics.json"));
}

TEST_CASE("a pure-supervisor compare has ratio exactly one") {
  TempDir tmp;
  const auto cfg = tmp.dir / "c.json";
  std::ofstream(cfg) << R"({
    "mpc": {"horizon": 24, "grid_levels": 24},
    "network": {"hidden_layers": 2, "hidden_width": 8},
    "schedule": {"final_supervisor_weight": 1.0},
    "demand": {"days": 2, "steps_per_day": 24, "noise_std": 100.0}
  })";
  const auto out = tmp.dir / "cmp";
  const auto r = run_cli("compare --config " + cfg.string() + " --out " + out.string(), tmp.dir);
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(out / "compare.json").find("\"median_revenue_ratio\": 1.0") != std::string::npos);
  CHECK(slurp(out / "mpc" / "metrics.json") == slurp(out / "sac" / "metrics.json"));
}
