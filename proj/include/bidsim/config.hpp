#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bidsim/env.hpp"

extern char** environ;

namespace bidsim {

/// Configuration problem, carrying the offending field path in the message.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, as one validated document.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  RunConfig run;
  std::vector<BackgroundAgent> stack;

  struct Demand {
    enum class Source { synthetic, csv };
    Source source = Source::synthetic;
    int days = 153;  // five months of 30-minute steps
    int steps_per_day = 48;
    double base = 2500.0;
    double amplitude = 1200.0;
    double noise_std = 150.0;
    double phase = 1.5707963267948966;
    std::uint64_t demand_seed = 7;
    std::string csv_path;
  } demand;
};

inline std::vector<BackgroundAgent> make_stack(int generators, double cost_start, double cost_step,
                                               double capacity_each) {
  std::vector<BackgroundAgent> stack;
  stack.reserve(generators);
  for (int i = 0; i < generators; ++i) {
    stack.push_back({"gen" + std::to_string(i + 1), cost_start + i * cost_step, capacity_each});
  }
  return stack;
}

inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.stack = make_stack(10, 10.0, 10.0, 500.0);
  return cfg;
}

namespace detail {

using json = nlohmann::ordered_json;

inline void fail(const std::string& path, const std::string& why) {
  throw ConfigError(path + ": " + why);
}

template <typename T>
T get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<T>();
}

inline void apply_known_keys(const json& obj, const std::string& path,
                             const std::vector<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) fail(path + "." + key, "unknown field");
  }
}

inline void parse_into(ExperimentConfig& cfg, const json& doc) {
  apply_known_keys(doc, "$",
                   {"seed", "battery", "mpc", "network", "sac", "schedule", "scales", "forecast",
                    "stack", "demand"});
  if (doc.contains("seed")) cfg.seed = get_number<std::uint64_t>(doc["seed"], "seed");

  if (doc.contains("battery")) {
    const auto& b = doc["battery"];
    apply_known_keys(b, "battery",
                     {"energy_capacity", "soe_floor", "max_charge", "max_discharge", "eta_charge",
                      "eta_discharge", "initial_soe"});
    auto& p = cfg.run.battery;
    if (b.contains("energy_capacity")) p.energy_capacity = get_number<double>(b["energy_capacity"], "battery.energy_capacity");
    if (b.contains("soe_floor")) p.soe_floor = get_number<double>(b["soe_floor"], "battery.soe_floor");
    if (b.contains("max_charge")) p.max_charge = get_number<double>(b["max_charge"], "battery.max_charge");
    if (b.contains("max_discharge")) p.max_discharge = get_number<double>(b["max_discharge"], "battery.max_discharge");
    if (b.contains("eta_charge")) p.eta_charge = get_number<double>(b["eta_charge"], "battery.eta_charge");
    if (b.contains("eta_discharge")) p.eta_discharge = get_number<double>(b["eta_discharge"], "battery.eta_discharge");
    if (b.contains("initial_soe")) cfg.run.initial_soe = get_number<double>(b["initial_soe"], "battery.initial_soe");
  }
  if (doc.contains("mpc")) {
    const auto& m = doc["mpc"];
    apply_known_keys(m, "mpc", {"horizon", "grid_levels"});
    if (m.contains("horizon")) cfg.run.mpc_horizon = get_number<int>(m["horizon"], "mpc.horizon");
    if (m.contains("grid_levels")) cfg.run.mpc_grid_levels = get_number<int>(m["grid_levels"], "mpc.grid_levels");
  }
  if (doc.contains("network")) {
    const auto& nn = doc["network"];
    apply_known_keys(nn, "network", {"hidden_layers", "hidden_width", "leak"});
    if (nn.contains("hidden_layers")) cfg.run.network.hidden_layers = get_number<int>(nn["hidden_layers"], "network.hidden_layers");
    if (nn.contains("hidden_width")) cfg.run.network.hidden_width = get_number<int>(nn["hidden_width"], "network.hidden_width");
    if (nn.contains("leak")) cfg.run.network.leak = get_number<double>(nn["leak"], "network.leak");
  }
  if (doc.contains("sac")) {
    const auto& s = doc["sac"];
    apply_known_keys(s, "sac",
                     {"gamma", "sigma_explore", "sigma_policy", "alpha", "beta1", "beta2", "mu",
                      "literal_reward"});
    auto& a = cfg.run.sac;
    if (s.contains("gamma")) a.gamma = get_number<double>(s["gamma"], "sac.gamma");
    if (s.contains("sigma_explore")) a.sigma_explore = get_number<double>(s["sigma_explore"], "sac.sigma_explore");
    if (s.contains("sigma_policy")) a.sigma_policy = get_number<double>(s["sigma_policy"], "sac.sigma_policy");
    if (s.contains("alpha")) a.alpha = get_number<double>(s["alpha"], "sac.alpha");
    if (s.contains("beta1")) a.beta1 = get_number<double>(s["beta1"], "sac.beta1");
    if (s.contains("beta2")) a.beta2 = get_number<double>(s["beta2"], "sac.beta2");
    if (s.contains("literal_reward")) {
      if (!s["literal_reward"].is_boolean()) fail("sac.literal_reward", "expected a boolean");
      a.literal_reward = s["literal_reward"].get<bool>();
    }
    if (s.contains("mu")) {
      if (!s["mu"].is_array() || s["mu"].size() != 4) fail("sac.mu", "expected an array of 4 numbers");
      for (int i = 0; i < 4; ++i) a.mu[i] = get_number<double>(s["mu"][i], "sac.mu[" + std::to_string(i) + "]");
    }
  }
  if (doc.contains("schedule")) {
    const auto& s = doc["schedule"];
    apply_known_keys(s, "schedule", {"hold_steps", "ramp_steps", "final_supervisor_weight"});
    auto& r = cfg.run.sac.schedule;
    if (s.contains("hold_steps")) r.hold_steps = get_number<long>(s["hold_steps"], "schedule.hold_steps");
    if (s.contains("ramp_steps")) r.ramp_steps = get_number<long>(s["ramp_steps"], "schedule.ramp_steps");
    if (s.contains("final_supervisor_weight")) r.final_supervisor_weight = get_number<double>(s["final_supervisor_weight"], "schedule.final_supervisor_weight");
  }
  if (doc.contains("scales")) {
    const auto& s = doc["scales"];
    apply_known_keys(s, "scales", {"price_scale", "demand_scale"});
    if (s.contains("price_scale")) cfg.run.scales.price_scale = get_number<double>(s["price_scale"], "scales.price_scale");
    if (s.contains("demand_scale")) cfg.run.scales.demand_scale = get_number<double>(s["demand_scale"], "scales.demand_scale");
  }
  if (doc.contains("forecast")) {
    const auto& f = doc["forecast"];
    apply_known_keys(f, "forecast", {"mode", "prior_price"});
    if (f.contains("mode")) {
      const std::string mode = f["mode"].is_string() ? f["mode"].get<std::string>() : "";
      if (mode == "persistence") cfg.run.forecast.mode = ForecastConfig::Mode::persistence;
      else if (mode == "perfect") cfg.run.forecast.mode = ForecastConfig::Mode::perfect;
      else fail("forecast.mode", "expected 'persistence' or 'perfect'");
    }
    if (f.contains("prior_price")) cfg.run.forecast.prior_price = get_number<double>(f["prior_price"], "forecast.prior_price");
  }
  if (doc.contains("stack")) {
    const auto& s = doc["stack"];
    if (s.is_array()) {
      cfg.stack.clear();
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string path = "stack[" + std::to_string(i) + "]";
        const auto& g = s[i];
        if (!g.is_object()) fail(path, "expected an object");
        apply_known_keys(g, path, {"agent_id", "marginal_cost", "capacity"});
        BackgroundAgent agent;
        if (!g.contains("agent_id") || !g["agent_id"].is_string()) fail(path + ".agent_id", "required string");
        agent.agent_id = g["agent_id"].get<std::string>();
        agent.marginal_cost = get_number<double>(g.value("marginal_cost", json(0.0)), path + ".marginal_cost");
        agent.capacity = get_number<double>(g.value("capacity", json(0.0)), path + ".capacity");
        cfg.stack.push_back(agent);
      }
    } else if (s.is_object()) {
      apply_known_keys(s, "stack", {"generators", "cost_start", "cost_step", "capacity_each"});
      const int count = get_number<int>(s.value("generators", json(10)), "stack.generators");
      if (count < 1) fail("stack.generators", "must be >= 1");
      cfg.stack = make_stack(count, get_number<double>(s.value("cost_start", json(10.0)), "stack.cost_start"),
                             get_number<double>(s.value("cost_step", json(10.0)), "stack.cost_step"),
                             get_number<double>(s.value("capacity_each", json(500.0)), "stack.capacity_each"));
    } else {
      fail("stack", "expected an array of agents or a generator pattern object");
    }
  }
  if (doc.contains("demand")) {
    const auto& d = doc["demand"];
    apply_known_keys(d, "demand",
                     {"source", "days", "steps_per_day", "base", "amplitude", "noise_std", "phase",
                      "seed", "csv_path"});
    auto& dm = cfg.demand;
    if (d.contains("source")) {
      const std::string src = d["source"].is_string() ? d["source"].get<std::string>() : "";
      if (src == "synthetic") dm.source = ExperimentConfig::Demand::Source::synthetic;
      else if (src == "csv") dm.source = ExperimentConfig::Demand::Source::csv;
      else fail("demand.source", "expected 'synthetic' or 'csv'");
    }
    if (d.contains("days")) dm.days = get_number<int>(d["days"], "demand.days");
    if (d.contains("steps_per_day")) dm.steps_per_day = get_number<int>(d["steps_per_day"], "demand.steps_per_day");
    if (d.contains("base")) dm.base = get_number<double>(d["base"], "demand.base");
    if (d.contains("amplitude")) dm.amplitude = get_number<double>(d["amplitude"], "demand.amplitude");
    if (d.contains("noise_std")) dm.noise_std = get_number<double>(d["noise_std"], "demand.noise_std");
    if (d.contains("phase")) dm.phase = get_number<double>(d["phase"], "demand.phase");
    if (d.contains("seed")) dm.demand_seed = get_number<std::uint64_t>(d["seed"], "demand.seed");
    if (d.contains("csv_path")) {
      if (!d["csv_path"].is_string()) fail("demand.csv_path", "expected a string");
      dm.csv_path = d["csv_path"].get<std::string>();
    }
  }
}

// BIDSIM_<SECTION>_<FIELD>=value overrides; values parse as JSON first,
// falling back to plain strings.
inline void apply_env_overrides(json& doc) {
  static const std::vector<std::string> sections = {"battery", "mpc", "network", "sac",
                                                    "schedule", "scales", "forecast", "stack",
                                                    "demand"};
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    if (entry.rfind("BIDSIM_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(7, eq - 7);
    const std::string raw = entry.substr(eq + 1);
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }

    if (key == "seed") {
      doc["seed"] = value;
      continue;
    }
    bool matched = false;
    for (const auto& s : sections) {
      if (key == s) {
        doc[s] = value;
        matched = true;
        break;
      }
      if (key.rfind(s + "_", 0) == 0) {
        doc[s][key.substr(s.size() + 1)] = value;
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("environment override BIDSIM_" + key + ": unknown section");
  }
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& cfg) {
  using detail::fail;
  const auto& b = cfg.run.battery;
  if (!(b.energy_capacity > 0.0) || !std::isfinite(b.energy_capacity)) fail("battery.energy_capacity", "must be finite and > 0");
  if (!(b.soe_floor >= 0.0) || !(b.soe_floor < b.energy_capacity)) fail("battery.soe_floor", "must satisfy 0 <= soe_floor < energy_capacity");
  if (!(b.max_charge > 0.0)) fail("battery.max_charge", "must be > 0");
  if (!(b.max_discharge > 0.0)) fail("battery.max_discharge", "must be > 0");
  if (!(b.eta_charge > 0.0 && b.eta_charge <= 1.0)) fail("battery.eta_charge", "must be in (0, 1]");
  if (!(b.eta_discharge > 0.0 && b.eta_discharge <= 1.0)) fail("battery.eta_discharge", "must be in (0, 1]");
  if (!(cfg.run.initial_soe >= b.soe_floor && cfg.run.initial_soe <= b.energy_capacity)) {
    fail("battery.initial_soe", "must lie within [soe_floor, energy_capacity]");
  }
  if (cfg.run.mpc_horizon < 1) fail("mpc.horizon", "must be >= 1");
  if (cfg.run.mpc_grid_levels < 2) fail("mpc.grid_levels", "must be >= 2");
  if (cfg.run.network.hidden_layers < 1) fail("network.hidden_layers", "must be >= 1");
  if (cfg.run.network.hidden_width < 1) fail("network.hidden_width", "must be >= 1");
  if (!(cfg.run.network.leak >= 0.0 && cfg.run.network.leak < 1.0)) fail("network.leak", "must be in [0, 1)");
  const auto& s = cfg.run.sac;
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) fail("sac.gamma", "must be in [0, 1]");
  if (!(s.sigma_explore > 0.0)) fail("sac.sigma_explore", "must be > 0");
  if (!(s.sigma_policy > 0.0)) fail("sac.sigma_policy", "must be > 0");
  if (!(s.alpha > 0.0)) fail("sac.alpha", "must be > 0");
  if (!(s.beta1 > 0.0)) fail("sac.beta1", "must be > 0");
  if (!(s.beta2 > 0.0)) fail("sac.beta2", "must be > 0");
  for (int i = 0; i < 4; ++i) {
    if (!(s.mu[i] <= 0.0)) fail("sac.mu[" + std::to_string(i) + "]", "penalty weights must be <= 0");
  }
  if (s.schedule.hold_steps < 0) fail("schedule.hold_steps", "must be >= 0");
  if (s.schedule.ramp_steps < 1) fail("schedule.ramp_steps", "must be >= 1");
  if (!(s.schedule.final_supervisor_weight >= 0.5 && s.schedule.final_supervisor_weight <= 1.0)) {
    fail("schedule.final_supervisor_weight", "must be in [0.5, 1]");
  }
  if (!(cfg.run.scales.price_scale > 0.0)) fail("scales.price_scale", "must be > 0");
  if (!(cfg.run.scales.demand_scale > 0.0)) fail("scales.demand_scale", "must be > 0");
  if (!(cfg.run.forecast.prior_price >= 0.0)) fail("forecast.prior_price", "must be >= 0");

  if (cfg.stack.empty()) fail("stack", "must contain at least one agent");
  double total_capacity = 0.0;
  for (std::size_t i = 0; i < cfg.stack.size(); ++i) {
    const auto& g = cfg.stack[i];
    const std::string path = "stack[" + std::to_string(i) + "]";
    if (g.agent_id.empty()) fail(path + ".agent_id", "must be non-empty");
    if (g.agent_id == "battery") fail(path + ".agent_id", "'battery' is reserved");
    if (!(g.marginal_cost >= 0.0) || !std::isfinite(g.marginal_cost)) fail(path + ".marginal_cost", "must be finite and >= 0");
    if (!(g.capacity > 0.0) || !std::isfinite(g.capacity)) fail(path + ".capacity", "must be finite and > 0");
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.stack[j].agent_id == g.agent_id) fail(path + ".agent_id", "duplicate id '" + g.agent_id + "'");
    }
    total_capacity += g.capacity;
  }

  const auto& d = cfg.demand;
  if (d.source == ExperimentConfig::Demand::Source::synthetic) {
    if (d.days < 1) fail("demand.days", "must be >= 1");
    if (d.steps_per_day < 1 || 86400 % d.steps_per_day != 0) fail("demand.steps_per_day", "must divide 86400 seconds");
    if (!(d.base > 0.0)) fail("demand.base", "must be > 0");
    if (!(d.amplitude >= 0.0)) fail("demand.amplitude", "must be >= 0");
    if (!(d.noise_std >= 0.0)) fail("demand.noise_std", "must be >= 0");
    const double worst = d.base + d.amplitude + 6.0 * d.noise_std + b.max_charge;
    if (worst > total_capacity) {
      fail("demand", "stack capacity " + std::to_string(total_capacity) +
                         " MWh cannot cover worst-case demand plus battery load (" +
                         std::to_string(worst) + " MWh)");
    }
  } else if (d.csv_path.empty()) {
    fail("demand.csv_path", "required when demand.source is 'csv'");
  }
}

/// Loads, applies BIDSIM_* environment overrides, and validates.
inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  detail::json doc;
  try {
    doc = detail::json::parse(f);
  } catch (const detail::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config " + path + " must be a JSON object");
  detail::apply_env_overrides(doc);
  ExperimentConfig cfg = default_experiment_config();
  detail::parse_into(cfg, doc);
  validate_experiment_config(cfg);
  return cfg;
}

/// Builds the demand series the config describes (synthesized or loaded),
/// cross-checking supply adequacy against the stack.
inline DemandSeries make_demand(const ExperimentConfig& cfg) {
  DemandSeries series;
  if (cfg.demand.source == ExperimentConfig::Demand::Source::synthetic) {
    series = synth_demand(cfg.demand.days, cfg.demand.steps_per_day, cfg.demand.base,
                          cfg.demand.amplitude, cfg.demand.noise_std, cfg.demand.demand_seed,
                          cfg.demand.phase);
  } else {
    series = load_demand_csv(cfg.demand.csv_path);
    if (series.size() % series.steps_per_day != 0) {
      throw ConfigError("demand.csv_path: series must cover whole days (" +
                        std::to_string(series.size()) + " rows, " +
                        std::to_string(series.steps_per_day) + " steps/day)");
    }
    double total_capacity = 0.0;
    for (const auto& g : cfg.stack) total_capacity += g.capacity;
    for (double v : series.demand) {
      if (v + cfg.run.battery.max_charge > total_capacity) {
        throw ConfigError("demand.csv_path: demand " + std::to_string(v) +
                          " MWh plus battery load exceeds stack capacity");
      }
    }
  }
  return series;
}

/// The fully-resolved configuration, serialized back out as JSON.
inline nlohmann::ordered_json effective_config_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["battery"] = {{"energy_capacity", cfg.run.battery.energy_capacity},
                  {"soe_floor", cfg.run.battery.soe_floor},
                  {"max_charge", cfg.run.battery.max_charge},
                  {"max_discharge", cfg.run.battery.max_discharge},
                  {"eta_charge", cfg.run.battery.eta_charge},
                  {"eta_discharge", cfg.run.battery.eta_discharge},
                  {"initial_soe", cfg.run.initial_soe}};
  j["mpc"] = {{"horizon", cfg.run.mpc_horizon}, {"grid_levels", cfg.run.mpc_grid_levels}};
  j["network"] = {{"hidden_layers", cfg.run.network.hidden_layers},
                  {"hidden_width", cfg.run.network.hidden_width},
                  {"leak", cfg.run.network.leak}};
  j["sac"] = {{"gamma", cfg.run.sac.gamma},
              {"sigma_explore", cfg.run.sac.sigma_explore},
              {"sigma_policy", cfg.run.sac.sigma_policy},
              {"alpha", cfg.run.sac.alpha},
              {"beta1", cfg.run.sac.beta1},
              {"beta2", cfg.run.sac.beta2},
              {"mu", cfg.run.sac.mu},
              {"literal_reward", cfg.run.sac.literal_reward}};
  j["schedule"] = {{"hold_steps", cfg.run.sac.schedule.hold_steps},
                   {"ramp_steps", cfg.run.sac.schedule.ramp_steps},
                   {"final_supervisor_weight", cfg.run.sac.schedule.final_supervisor_weight}};
  j["scales"] = {{"price_scale", cfg.run.scales.price_scale},
                 {"demand_scale", cfg.run.scales.demand_scale}};
  j["forecast"] = {{"mode", cfg.run.forecast.mode == ForecastConfig::Mode::perfect ? "perfect"
                                                                                   : "persistence"},
                   {"prior_price", cfg.run.forecast.prior_price}};
  j["stack"] = nlohmann::ordered_json::array();
  for (const auto& g : cfg.stack) {
    j["stack"].push_back({{"agent_id", g.agent_id},
                          {"marginal_cost", g.marginal_cost},
                          {"capacity", g.capacity}});
  }
  j["demand"] = {{"source", cfg.demand.source == ExperimentConfig::Demand::Source::csv ? "csv"
                                                                                       : "synthetic"},
                 {"days", cfg.demand.days},
                 {"steps_per_day", cfg.demand.steps_per_day},
                 {"base", cfg.demand.base},
                 {"amplitude", cfg.demand.amplitude},
                 {"noise_std", cfg.demand.noise_std},
                 {"phase", cfg.demand.phase},
                 {"seed", cfg.demand.demand_seed},
                 {"csv_path", cfg.demand.csv_path}};
  return j;
}

}  // namespace bidsim
