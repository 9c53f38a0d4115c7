#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bidsim/agent.hpp"
#include "bidsim/battery.hpp"
#include "bidsim/market.hpp"
#include "bidsim/mpc.hpp"

namespace bidsim {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonUniformStep : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A deterministic competitor: bids its full capacity at its marginal cost
/// every step.
struct BackgroundAgent {
  std::string agent_id;
  double marginal_cost = 0.0;  // $/MWh
  double capacity = 0.0;       // MWh per step
};

struct DemandSeries {
  std::vector<std::int64_t> timestamps;  // unix seconds, uniform spacing
  std::vector<double> demand;            // MWh per step
  int steps_per_day = 48;

  std::size_t size() const { return demand.size(); }
};

namespace detail {

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yr + (m <= 2));
}

inline std::string iso8601(std::int64_t t) {
  const std::int64_t days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
  const int secs = static_cast<int>(t - days * 86400);
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d, secs / 3600,
                (secs / 60) % 60, secs % 60);
  return buf;
}

inline bool parse_iso8601(const std::string& s, std::int64_t& out) {
  int y, mo, d, h, mi, se;
  char z;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &z) != 7) return false;
  if (z != 'Z') return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60) {
    return false;
  }
  out = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
        h * 3600 + mi * 60 + se;
  return true;
}

}  // namespace detail

/// Sinusoidal daily demand with seeded Gaussian noise, clamped non-negative.
/// Stand-in for a real system-demand export.
inline DemandSeries synth_demand(int days, int steps_per_day, double base, double daily_amplitude,
                                 double noise_std, std::uint64_t seed, double phase = 1.5707963267948966) {
  if (days < 1 || steps_per_day < 1 || base <= 0.0 || daily_amplitude < 0.0 || noise_std < 0.0) {
    throw std::invalid_argument("synth_demand: days, steps_per_day, base must be positive; amplitude, noise >= 0");
  }
  if (86400 % steps_per_day != 0) {
    throw std::invalid_argument("synth_demand: steps_per_day must divide 86400 seconds");
  }
  DemandSeries out;
  out.steps_per_day = steps_per_day;
  const std::int64_t start = detail::days_from_civil(2018, 6, 1) * 86400;
  const std::int64_t step_secs = 86400 / steps_per_day;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std);
  const double two_pi = 6.283185307179586;
  const long n = static_cast<long>(days) * steps_per_day;
  out.timestamps.reserve(n);
  out.demand.reserve(n);
  for (long t = 0; t < n; ++t) {
    const int tod = static_cast<int>(t % steps_per_day);
    double d = base + daily_amplitude * std::sin(two_pi * tod / steps_per_day - phase);
    if (noise_std > 0.0) d += noise(rng);
    out.timestamps.push_back(start + t * step_secs);
    out.demand.push_back(std::max(0.0, d));
  }
  return out;
}

/// Reads `timestamp,demand_mwh` rows (ISO-8601 UTC timestamps). Timestamps
/// must be strictly increasing with one uniform step.
inline DemandSeries load_demand_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("load_demand_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,demand_mwh") {
    throw ParseError(path + ":1: expected header 'timestamp,demand_mwh', got '" + line + "'");
  }
  DemandSeries out;
  long lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing comma");
    }
    std::int64_t ts = 0;
    if (!detail::parse_iso8601(line.substr(0, comma), ts)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad timestamp '" +
                       line.substr(0, comma) + "'");
    }
    char* end = nullptr;
    const std::string num = line.substr(comma + 1);
    const double d = std::strtod(num.c_str(), &end);
    if (end == num.c_str() || *end != '\0' || !std::isfinite(d)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad demand value '" + num + "'");
    }
    if (d < 0.0) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": negative demand " + num);
    }
    if (!out.timestamps.empty() && ts <= out.timestamps.back()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": timestamps not increasing");
    }
    out.timestamps.push_back(ts);
    out.demand.push_back(d);
  }
  if (out.size() < 2) throw ParseError(path + ": need at least two rows");
  const std::int64_t step = out.timestamps[1] - out.timestamps[0];
  for (std::size_t i = 2; i < out.timestamps.size(); ++i) {
    if (out.timestamps[i] - out.timestamps[i - 1] != step) {
      throw NonUniformStep(path + ": step changes at row " + std::to_string(i + 2));
    }
  }
  if (step <= 0 || 86400 % step != 0) {
    throw NonUniformStep(path + ": step of " + std::to_string(step) + "s does not divide one day");
  }
  out.steps_per_day = static_cast<int>(86400 / step);
  return out;
}

inline void save_demand_csv(const DemandSeries& series, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_demand_csv: cannot open " + path);
  f << "timestamp,demand_mwh\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", series.demand[i]);
    f << detail::iso8601(series.timestamps[i]) << ',' << buf << '\n';
  }
}

/// Persistence forecast: the clearing price observed at the same time of day
/// one day earlier; before a full day of history, a configured prior.
/// `history` holds every realized price so far, so the forecast origin is
/// history.size().
inline PriceForecast forecast_prices(const std::vector<double>& history, int steps_per_day,
                                     int horizon, double prior_price) {
  if (horizon < 1) throw std::invalid_argument("forecast_prices: horizon must be >= 1");
  PriceForecast fc;
  fc.prices.reserve(horizon);
  const long now = static_cast<long>(history.size());
  for (int j = 0; j < horizon; ++j) {
    long idx = now + j - steps_per_day;
    while (idx >= now) idx -= steps_per_day;
    fc.prices.push_back(idx >= 0 ? history[idx] : prior_price);
  }
  return fc;
}

enum class Policy { mpc_only, sac, idle };

struct ForecastConfig {
  enum class Mode { persistence, perfect };
  Mode mode = Mode::persistence;
  double prior_price = 55.0;  // $/MWh used before any history exists
};

struct RunConfig {
  BatteryParams battery;
  double initial_soe = 514.5;
  int mpc_horizon = 48;
  // 6 MWh resolution; fine enough for 300 MWh actions and ~4x cheaper per
  // solve than the 3 MWh grid.
  int mpc_grid_levels = 172;
  SacConfig sac;
  NetworkConfig network;
  ObservationScales scales;
  ForecastConfig forecast;
};

struct StepTrace {
  long step = 0;
  int time_of_day = 0;
  double supervisor_weight = 1.0;
  double pre_price = 0.0, pre_quantity = 0.0;    // proposed, before the shield
  double post_price = 0.0, post_quantity = 0.0;  // executed bid
  bool intervened = false;
  double delta = 0.0;
  double reward = 0.0;
  double soe = 0.0;  // after the step
  double clearing_price = 0.0;
  double forecast_price = 0.0;  // the step's clearing-price forecast
  double demand = 0.0;      // base demand, before any battery load
  double dispatched = 0.0;  // +MWh generation dispatched, -MWh load served
};

struct RunMetrics {
  long steps = 0;
  double days = 0.0;
  double total_revenue = 0.0;
  double avg_revenue_per_day = 0.0;
  double pct_bid_capacity_cleared = 0.0;
  double pct_preshield_violations = 0.0;
  double pct_generator_bids = 0.0;
  long shield_interventions = 0;
  long post_shield_violations = 0;  // shield guarantee: always 0
  std::vector<double> cumulative_revenue_series;
  std::vector<double> clearing_price_series;
  std::vector<double> soe_series;
  std::vector<AgentAction> bid_series;  // executed bids
};

/// Runs the full observe -> supervise -> blend -> shield -> clear -> settle
/// -> learn loop over the demand series and accumulates run statistics.
/// Deterministic for a fixed (inputs, seed) pair.
inline RunMetrics run_simulation(Policy policy, const DemandSeries& demand,
                                 const std::vector<BackgroundAgent>& stack, const RunConfig& cfg,
                                 std::uint64_t seed, std::vector<StepTrace>* trace = nullptr) {
  if (demand.size() == 0) throw std::invalid_argument("run_simulation: empty demand series");
  if (demand.size() % demand.steps_per_day != 0) {
    throw std::invalid_argument("run_simulation: demand length must be a whole number of days");
  }
  for (double d : demand.demand) {
    if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("run_simulation: invalid demand value");
  }
  if (stack.empty()) throw std::invalid_argument("run_simulation: empty background stack");
  if (!cfg.battery.valid()) throw std::invalid_argument("run_simulation: invalid battery parameters");

  const long n = static_cast<long>(demand.size());
  const int spd = demand.steps_per_day;
  const int horizon = cfg.mpc_horizon;

  std::vector<SupplyBid> background;
  background.reserve(stack.size());
  for (const auto& g : stack) {
    if (g.marginal_cost < 0.0 || g.capacity < 0.0 || !std::isfinite(g.marginal_cost) ||
        !std::isfinite(g.capacity)) {
      throw std::invalid_argument("run_simulation: invalid background agent " + g.agent_id);
    }
    background.push_back({g.agent_id, g.marginal_cost, g.capacity});
  }
  const std::string battery_id = "battery";

  // Baseline prices for the perfect-foresight forecast: the stack cleared
  // against raw demand, battery absent.
  std::vector<double> baseline;
  if (cfg.forecast.mode == ForecastConfig::Mode::perfect) {
    baseline.reserve(n);
    for (long t = 0; t < n; ++t) {
      baseline.push_back(clear_market(background, demand.demand[t]).clearing_price);
    }
  }
  auto make_forecast = [&](long t, const std::vector<double>& history) {
    if (cfg.forecast.mode == ForecastConfig::Mode::perfect) {
      PriceForecast fc;
      fc.prices.reserve(horizon);
      for (int j = 0; j < horizon; ++j) {
        const long idx = std::min(t + j, n - 1);
        fc.prices.push_back(baseline[idx]);
      }
      return fc;
    }
    return forecast_prices(history, spd, horizon, cfg.forecast.prior_price);
  };

  ObservationScales scales = cfg.scales;
  scales.steps_per_day = spd;
  std::optional<SacAgent> agent;
  if (policy == Policy::sac) agent.emplace(cfg.sac, cfg.battery, scales, cfg.network, seed);

  BatteryState state{cfg.initial_soe, cfg.battery};
  if (state.soe < cfg.battery.soe_floor || state.soe > cfg.battery.energy_capacity) {
    throw InfeasibleStart("run_simulation: initial_soe outside battery bounds");
  }

  std::vector<double> price_history;
  price_history.reserve(n);

  RunMetrics m;
  m.steps = n;
  m.days = static_cast<double>(n) / spd;
  m.cumulative_revenue_series.reserve(n);
  m.clearing_price_series.reserve(n);
  m.soe_series.reserve(n);
  m.bid_series.reserve(n);

  long bid_steps = 0, generator_steps = 0, preshield_violation_steps = 0;
  double cleared_fraction_sum = 0.0;
  double last_price = cfg.forecast.prior_price;

  for (long t = 0; t < n; ++t) {
    const int tod = static_cast<int>(t % spd);
    const PriceForecast fc = make_forecast(t, price_history);
    const MarketObservation obs{fc.prices[0], last_price, state.soe, tod, demand.demand[t]};

    AgentAction pre{0.0, 0.0}, executed{0.0, 0.0};
    bool intervened = false;
    double w = 1.0;
    std::array<double, 4> violations{0.0, 0.0, 0.0, 0.0};
    std::array<double, 2> actor_sample_n{0.0, 0.0};

    if (policy == Policy::idle) {
      pre = executed = AgentAction{0.0, 0.0};
    } else {
      const AgentAction a_sup = supervisor_action(obs, cfg.battery, fc, cfg.mpc_grid_levels);
      if (policy == Policy::mpc_only) {
        pre = executed = a_sup;
      } else {
        w = supervisor_weight(t, cfg.sac.schedule);
        agent->supervise_actor(obs, a_sup);
        const AgentAction a_actor = agent->actor_mean(obs);
        const std::array<double, 2> noise = agent->sample_noise();
        const auto na = agent->action_map().normalize(a_actor);
        actor_sample_n = {na[0] + noise[0], na[1] + noise[1]};
        pre = blend_action(a_actor, noise, a_sup, w, agent->action_map());
        violations = violation_magnitudes(state, pre);
        auto shielded = shield(state, pre, a_sup);
        executed = shielded.first;
        intervened = shielded.second;
      }
    }

    const double gen_bid = executed.generation();
    const double load_bid = executed.load();
    const double demand_eff = effective_demand(demand.demand[t], load_bid);

    ClearingOutcome outcome;
    if (gen_bid > 0.0) {
      std::vector<SupplyBid> bids = background;
      bids.push_back({battery_id, executed.bid_price, gen_bid});
      outcome = clear_market(bids, demand_eff);
    } else {
      outcome = clear_market(background, demand_eff);
    }
    const double dispatched_gen = gen_bid > 0.0 ? outcome.dispatched(battery_id) : 0.0;
    const double settlement =
        outcome.clearing_price * dispatched_gen - outcome.clearing_price * load_bid;

    if (!is_safe(state, dispatched_gen, load_bid)) ++m.post_shield_violations;
    state = step_soe(state, dispatched_gen, load_bid);
    price_history.push_back(outcome.clearing_price);

    double delta = 0.0, reward_value = settlement;
    if (policy == Policy::sac) {
      reward_value = agent->reward(executed, obs, settlement, violations);
      double value_next = 0.0;
      std::optional<MarketObservation> obs_next;
      if (t + 1 < n) {
        const PriceForecast fc_next = make_forecast(t + 1, price_history);
        obs_next = MarketObservation{fc_next.prices[0], outcome.clearing_price, state.soe,
                                     static_cast<int>((t + 1) % spd), demand.demand[t + 1]};
        value_next = agent->critic_value(*obs_next);
      }
      delta = td_error(reward_value, agent->critic_value(obs), value_next, cfg.sac.gamma);
      agent->actor_pg_update(obs, actor_sample_n, delta);
      agent->critic_update(obs, delta);
    }

    m.total_revenue += settlement;
    m.cumulative_revenue_series.push_back(m.total_revenue);
    m.clearing_price_series.push_back(outcome.clearing_price);
    m.soe_series.push_back(state.soe);
    m.bid_series.push_back(executed);
    if (executed.quantity != 0.0) {
      ++bid_steps;
      cleared_fraction_sum += (dispatched_gen + load_bid) / std::abs(executed.quantity);
    }
    if (executed.quantity > 0.0) ++generator_steps;
    bool violated = false;
    for (double v : violations) violated = violated || v > 0.0;
    if (violated) ++preshield_violation_steps;
    if (intervened) ++m.shield_interventions;

    if (trace != nullptr) {
      const double dispatched =
          dispatched_gen > 0.0 ? dispatched_gen : (load_bid > 0.0 ? -load_bid : 0.0);
      trace->push_back({t, tod, w, pre.bid_price, pre.quantity, executed.bid_price,
                        executed.quantity, intervened, delta, reward_value, state.soe,
                        outcome.clearing_price, fc.prices[0], demand.demand[t], dispatched});
    }
    last_price = outcome.clearing_price;
  }

  m.avg_revenue_per_day = m.total_revenue / m.days;
  m.pct_bid_capacity_cleared = bid_steps > 0 ? 100.0 * cleared_fraction_sum / bid_steps : 0.0;
  m.pct_preshield_violations = 100.0 * preshield_violation_steps / n;
  m.pct_generator_bids = 100.0 * generator_steps / n;
  return m;
}

}  // namespace bidsim
