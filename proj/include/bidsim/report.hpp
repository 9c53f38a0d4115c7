#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bidsim/config.hpp"
#include "bidsim/env.hpp"

namespace bidsim {

/// The Table-II-style summary of one run. Carries no policy label so that
/// runs producing identical behavior produce identical bytes.
inline nlohmann::ordered_json metrics_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["steps"] = m.steps;
  j["days"] = m.days;
  j["total_revenue"] = m.total_revenue;
  j["avg_revenue_per_day"] = m.avg_revenue_per_day;
  j["pct_bid_capacity_cleared"] = m.pct_bid_capacity_cleared;
  j["pct_preshield_violations"] = m.pct_preshield_violations;
  j["pct_generator_bids"] = m.pct_generator_bids;
  j["shield_interventions"] = m.shield_interventions;
  j["post_shield_violations"] = m.post_shield_violations;
  return j;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

inline void write_trace_csv(const std::vector<StepTrace>& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "step,time_of_day,supervisor_weight,pre_bid_price,pre_quantity,bid_price,quantity,"
       "intervened,td_error,reward,soe,clearing_price,forecast_price,demand,dispatched\n";
  for (const auto& r : trace) {
    f << r.step << ',' << r.time_of_day << ',' << detail::fmt(r.supervisor_weight) << ','
      << detail::fmt(r.pre_price) << ',' << detail::fmt(r.pre_quantity) << ','
      << detail::fmt(r.post_price) << ',' << detail::fmt(r.post_quantity) << ','
      << (r.intervened ? 1 : 0) << ',' << detail::fmt(r.delta) << ',' << detail::fmt(r.reward)
      << ',' << detail::fmt(r.soe) << ',' << detail::fmt(r.clearing_price) << ','
      << detail::fmt(r.forecast_price) << ',' << detail::fmt(r.demand) << ','
      << detail::fmt(r.dispatched) << '\n';
  }
}

/// Emits the plot-ready series: cumulative revenue, clearing prices, SOE,
/// and executed bids.
inline void write_series_csvs(const RunMetrics& m, const std::string& dir) {
  {
    std::ofstream f(dir + "/cumulative_revenue.csv", std::ios::binary);
    f << "step,cumulative_revenue\n";
    for (std::size_t i = 0; i < m.cumulative_revenue_series.size(); ++i) {
      f << i << ',' << detail::fmt(m.cumulative_revenue_series[i]) << '\n';
    }
  }
  {
    std::ofstream f(dir + "/clearing_prices.csv", std::ios::binary);
    f << "step,clearing_price\n";
    for (std::size_t i = 0; i < m.clearing_price_series.size(); ++i) {
      f << i << ',' << detail::fmt(m.clearing_price_series[i]) << '\n';
    }
  }
  {
    std::ofstream f(dir + "/soe.csv", std::ios::binary);
    f << "step,soe\n";
    for (std::size_t i = 0; i < m.soe_series.size(); ++i) {
      f << i << ',' << detail::fmt(m.soe_series[i]) << '\n';
    }
  }
  {
    std::ofstream f(dir + "/bids.csv", std::ios::binary);
    f << "step,bid_price,bid_quantity\n";
    for (std::size_t i = 0; i < m.bid_series.size(); ++i) {
      f << i << ',' << detail::fmt(m.bid_series[i].bid_price) << ','
        << detail::fmt(m.bid_series[i].quantity) << '\n';
    }
  }
}

struct RunOutput {
  RunMetrics metrics;
  std::vector<StepTrace> trace;
};

inline RunOutput run_experiment(const ExperimentConfig& cfg, const DemandSeries& demand,
                                Policy policy, std::uint64_t seed) {
  RunOutput out;
  out.metrics = run_simulation(policy, demand, cfg.stack, cfg.run, seed, &out.trace);
  return out;
}

inline void write_run_outputs(const RunOutput& run, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir + "/metrics.json", metrics_json(run.metrics).dump(2) + "\n");
  write_trace_csv(run.trace, dir + "/trace.csv");
  write_series_csvs(run.metrics, dir);
}

}  // namespace bidsim
