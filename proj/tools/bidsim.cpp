// Command-line front end: configure, run, and compare bidding experiments.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bidsim/config.hpp"
#include "bidsim/report.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

bidsim::Policy parse_policy(const std::string& s) {
  return s == "sac" ? bidsim::Policy::sac : bidsim::Policy::mpc_only;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void print_metrics_line(const std::string& label, const bidsim::RunMetrics& m) {
  std::printf("%-6s revenue/day %10.2f $  capacity cleared %6.2f %%  pre-shield violations %6.2f %%  generator bids %6.2f %%\n",
              label.c_str(), m.avg_revenue_per_day, m.pct_bid_capacity_cleared,
              m.pct_preshield_violations, m.pct_generator_bids);
}

int cmd_run(const std::string& config_path, const std::string& policy_str,
            std::optional<std::uint64_t> seed, const std::string& out_dir) {
  bidsim::ExperimentConfig cfg = bidsim::load_experiment_config(config_path);
  if (seed) cfg.seed = *seed;
  const bidsim::DemandSeries demand = bidsim::make_demand(cfg);
  const auto run = bidsim::run_experiment(cfg, demand, parse_policy(policy_str), cfg.seed);
  bidsim::write_run_outputs(run, out_dir);
  print_metrics_line(policy_str, run.metrics);
  std::printf("wrote %s/{metrics.json,trace.csv,cumulative_revenue.csv,clearing_prices.csv,soe.csv,bids.csv}\n",
              out_dir.c_str());
  return 0;
}

int cmd_compare(const std::string& config_path, std::optional<std::uint64_t> seed, int seeds,
                const std::string& out_dir) {
  bidsim::ExperimentConfig cfg = bidsim::load_experiment_config(config_path);
  if (seed) cfg.seed = *seed;
  const bidsim::DemandSeries demand = bidsim::make_demand(cfg);

  // The MPC supervisor is deterministic given the demand series, so one run
  // covers every seed.
  const auto mpc = bidsim::run_experiment(cfg, demand, bidsim::Policy::mpc_only, cfg.seed);
  bidsim::write_run_outputs(mpc, out_dir + "/mpc");

  nlohmann::ordered_json doc;
  doc["mpc"] = bidsim::metrics_json(mpc.metrics);
  doc["sac_runs"] = nlohmann::ordered_json::array();
  std::vector<double> ratios;
  print_metrics_line("mpc", mpc.metrics);
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(k);
    const auto sac = bidsim::run_experiment(cfg, demand, bidsim::Policy::sac, s);
    const std::string dir = seeds == 1 ? out_dir + "/sac" : out_dir + "/sac_seed" + std::to_string(s);
    bidsim::write_run_outputs(sac, dir);
    const double ratio = sac.metrics.avg_revenue_per_day / mpc.metrics.avg_revenue_per_day;
    ratios.push_back(ratio);
    nlohmann::ordered_json entry;
    entry["seed"] = s;
    entry["metrics"] = bidsim::metrics_json(sac.metrics);
    entry["revenue_ratio_vs_mpc"] = ratio;
    doc["sac_runs"].push_back(entry);
    print_metrics_line("sac", sac.metrics);
  }
  const double med = median(ratios);
  doc["median_revenue_ratio"] = med;
  std::filesystem::create_directories(out_dir);
  bidsim::write_text(out_dir + "/compare.json", doc.dump(2) + "\n");

  std::printf("\n%-32s %12s %12s\n", "", "SAC", "MPC");
  const auto& sm = doc["sac_runs"].back()["metrics"];
  std::printf("%-32s %12.2f %12.2f\n", "Average revenue per day ($)",
              sm["avg_revenue_per_day"].get<double>(), mpc.metrics.avg_revenue_per_day);
  std::printf("%-32s %12.2f %12.2f\n", "Bid capacity cleared (%)",
              sm["pct_bid_capacity_cleared"].get<double>(), mpc.metrics.pct_bid_capacity_cleared);
  std::printf("%-32s %12.2f %12.2f\n", "Pre-shield violations (%)",
              sm["pct_preshield_violations"].get<double>(), mpc.metrics.pct_preshield_violations);
  std::printf("%-32s %12.2f %12.2f\n", "Generator bids (%)",
              sm["pct_generator_bids"].get<double>(), mpc.metrics.pct_generator_bids);
  std::printf("%-32s %12.3f\n", seeds == 1 ? "Revenue ratio (SAC/MPC)" : "Median revenue ratio",
              med);
  std::printf("wrote %s/compare.json\n", out_dir.c_str());
  return 0;
}

int cmd_validate(const std::string& config_path) {
  bidsim::ExperimentConfig cfg = bidsim::load_experiment_config(config_path);
  if (cfg.demand.source == bidsim::ExperimentConfig::Demand::Source::csv) {
    bidsim::make_demand(cfg);  // cross-validate the referenced series
  }
  std::cout << bidsim::effective_config_json(cfg).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidsim: grid-battery bidding simulator (uniform-price market, MPC and SAC policies)"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", policy = "mpc";
  std::optional<std::uint64_t> seed;
  int seeds = 1;

  auto* run = app.add_subcommand("run", "Run one policy and write metrics, trace, and series files");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--policy", policy, "bidding policy")->check(CLI::IsMember({"mpc", "sac"}));
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory");

  auto* compare = app.add_subcommand("compare", "Run MPC and SAC on identical inputs and tabulate");
  compare->add_option("--config", config_path, "experiment config JSON")->required();
  compare->add_option("--seed", seed, "override the config seed");
  compare->add_option("--seeds", seeds, "number of consecutive SAC seeds")->check(CLI::PositiveNumber);
  compare->add_option("--out", out_dir, "output directory");

  auto* validate = app.add_subcommand("validate", "Check a config and print its resolved values");
  validate->add_option("--config", config_path, "experiment config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, policy, seed, out_dir);
    if (compare->parsed()) return cmd_compare(config_path, seed, seeds, out_dir);
    return cmd_validate(config_path);
  } catch (const bidsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bidsim::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bidsim::NonUniformStep& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
