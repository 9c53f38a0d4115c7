#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bidsim/action.hpp"
#include "bidsim/battery.hpp"

namespace bidsim {

struct InfeasibleStart : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Clearing-price predictions for the horizon, one entry per step.
struct PriceForecast {
  std::vector<double> prices;  // $/MWh, finite and non-negative

  bool valid() const {
    for (double p : prices) {
      if (!std::isfinite(p) || p < 0.0) return false;
    }
    return !prices.empty();
  }
};

struct PlanStep {
  double p_g = 0.0;   // MWh sold
  double p_l = 0.0;   // MWh bought
  bool charging = false;
  double soe = 0.0;   // MWh stored after this step's action
};

struct HorizonPlan {
  std::vector<PlanStep> schedule;
  double objective = 0.0;  // $ cumulative revenue over the horizon
};

/// Forward evaluation of the horizon revenue over a schedule.
inline double plan_revenue(const std::vector<PlanStep>& schedule, const PriceForecast& forecast) {
  double total = 0.0;
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    total += forecast.prices[t] * (schedule[t].p_g - schedule[t].p_l);
  }
  return total;
}

namespace detail {

// Shared by the DP solver and the enumeration oracle so that a transition's
// (p_g, p_l, revenue) is the identical double no matter which route asks.
struct TransitionCtx {
  double inv_eta_charge;
  double inv_eta_discharge;
  double max_charge_tol;
  double max_discharge_tol;

  explicit TransitionCtx(const BatteryParams& bp)
      : inv_eta_charge(1.0 / bp.eta_charge),
        inv_eta_discharge(1.0 / bp.eta_discharge),
        max_charge_tol(bp.max_charge + bp.rate_tol()),
        max_discharge_tol(bp.max_discharge + bp.rate_tol()) {}
};

struct Transition {
  bool feasible = false;
  double p_g = 0.0;
  double p_l = 0.0;
  double revenue = 0.0;
};

inline Transition make_transition(double from_soe, double to_soe, double price,
                                  const TransitionCtx& cx) {
  Transition tr;
  const double delta = to_soe - from_soe;
  if (delta > 0.0) {
    tr.p_l = delta * cx.inv_eta_charge;
    if (tr.p_l > cx.max_charge_tol) return tr;
  } else if (delta < 0.0) {
    tr.p_g = -delta * cx.inv_eta_discharge;
    if (tr.p_g > cx.max_discharge_tol) return tr;
  }
  tr.feasible = true;
  tr.revenue = price * (tr.p_g - tr.p_l);
  return tr;
}

// Sub-tolerance value differences count as ties so accumulated rounding dust
// cannot out-bid idling. Both solver routes decide with this exact predicate.
inline bool value_improves(double v, double incumbent) {
  if (incumbent == -std::numeric_limits<double>::infinity()) return v > incumbent;
  return v > incumbent + 1e-9 * (1.0 + std::abs(incumbent));
}

// Candidate selection with the deterministic tie-break: within a value tie,
// the smaller |quantity| wins (idle first), then discharge before charge.
// Candidates must be offered in the same order by every route.
struct Picker {
  double value = -std::numeric_limits<double>::infinity();
  double tie_q = std::numeric_limits<double>::infinity();
  bool tie_charging = true;
  int choice = -1;

  void consider(int k, const Transition& tr, double v) {
    if (!tr.feasible || v == -std::numeric_limits<double>::infinity()) return;
    const double q = tr.p_g + tr.p_l;
    const bool charging = tr.p_l > 0.0;
    if (value_improves(v, value)) {
      value = v;
      tie_q = q;
      tie_charging = charging;
      choice = k;
    } else if (!value_improves(value, v)) {
      if (q < tie_q || (q == tie_q && tie_charging && !charging)) {
        value = v;
        tie_q = q;
        tie_charging = charging;
        choice = k;
      }
    }
  }
};

struct SoeGrid {
  double floor;
  double step;
  int levels;

  SoeGrid(const BatteryParams& bp, int grid_levels)
      : floor(bp.soe_floor),
        step((bp.energy_capacity - bp.soe_floor) / (grid_levels - 1)),
        levels(grid_levels) {}

  double level(int k) const { return floor + k * step; }
};

inline void check_horizon_inputs(double soe0, const PriceForecast& forecast,
                                 const BatteryParams& params, int grid_levels) {
  if (!params.valid()) throw std::invalid_argument("solve_horizon: invalid battery parameters");
  if (grid_levels < 2) throw std::invalid_argument("solve_horizon: grid_levels must be >= 2");
  if (!forecast.valid()) throw std::invalid_argument("solve_horizon: forecast must be non-empty, finite, >= 0");
  if (!std::isfinite(soe0) || soe0 < params.soe_floor - params.bound_tol() ||
      soe0 > params.energy_capacity + params.bound_tol()) {
    throw InfeasibleStart("solve_horizon: soe0=" + std::to_string(soe0) + " outside [" +
                          std::to_string(params.soe_floor) + ", " +
                          std::to_string(params.energy_capacity) + "]");
  }
}

// Backward-folded revenue of a schedule, shared so both routes report the
// identical objective for identical schedules.
inline double fold_objective(const std::vector<PlanStep>& schedule, const PriceForecast& fc) {
  double acc = 0.0;
  for (std::size_t t = schedule.size(); t-- > 0;) {
    acc = fc.prices[t] * (schedule[t].p_g - schedule[t].p_l) + acc;
  }
  return acc;
}

}  // namespace detail

/// Solves the price-taker horizon problem over a uniform SOE grid by backward
/// dynamic programming. Actions are moves to grid levels (plus holding the
/// start state, which may sit off-grid); each move maps to one charge or
/// discharge quantity through the storage dynamics. Plans must end with at
/// least the starting state of energy, which anchors the horizon: stored
/// energy is working inventory, not stock to liquidate, so a flat forecast
/// yields the idle plan. Ties break deterministically: idle first, then the
/// smaller |quantity|, discharge before charge.
inline HorizonPlan solve_horizon(double soe0, const PriceForecast& forecast,
                                 const BatteryParams& params, int grid_levels = 344) {
  detail::check_horizon_inputs(soe0, forecast, params, grid_levels);
  const int H = static_cast<int>(forecast.prices.size());
  const int L = grid_levels;
  const detail::SoeGrid grid(params, L);
  const detail::TransitionCtx cx(params);
  const double neg_inf = -std::numeric_limits<double>::infinity();

  // Rate limits bound how many grid levels one step can cross.
  const int up_w = static_cast<int>(std::min<double>(
      L, (params.eta_charge * params.max_charge) / grid.step + 1.0));
  const int down_w = static_cast<int>(std::min<double>(
      L, (params.eta_discharge * params.max_discharge) / grid.step + 1.0));

  // State L is the (possibly off-grid) start node, reachable only by idling.
  const int START = L;
  const double terminal_floor = soe0 - params.bound_tol();
  std::vector<double> value_next(L + 1, neg_inf), value_cur(L + 1, neg_inf);
  for (int k = 0; k < L; ++k) {
    if (grid.level(k) >= terminal_floor) value_next[k] = 0.0;
  }
  value_next[START] = 0.0;
  std::vector<int16_t> choice(static_cast<std::size_t>(H) * (L + 1), -1);

  auto soe_of = [&](int state) { return state == START ? soe0 : grid.level(state); };

  for (int t = H - 1; t >= 0; --t) {
    const double price = forecast.prices[t];
    int16_t* choice_t = choice.data() + static_cast<std::size_t>(t) * (L + 1);
    for (int j = 0; j <= L; ++j) {
      const double from = soe_of(j);
      detail::Picker pick;
      if (j == START) {
        pick.consider(START, detail::make_transition(from, from, price, cx),
                      0.0 + value_next[START]);
      }
      const int lo = j == START ? 0 : std::max(0, j - down_w);
      const int hi = j == START ? L - 1 : std::min(L - 1, j + up_w);
      for (int k = lo; k <= hi; ++k) {
        if (value_next[k] == neg_inf) continue;
        const auto tr = detail::make_transition(from, grid.level(k), price, cx);
        if (!tr.feasible) continue;
        pick.consider(k, tr, tr.revenue + value_next[k]);
      }
      value_cur[j] = pick.value;
      choice_t[j] = static_cast<int16_t>(pick.choice);
    }
    std::swap(value_cur, value_next);
  }

  HorizonPlan plan;
  plan.schedule.reserve(H);
  int state = START;
  for (int t = 0; t < H; ++t) {
    const int k = choice[static_cast<std::size_t>(t) * (L + 1) + state];
    if (k < 0) throw std::logic_error("solve_horizon: no feasible continuation");
    const auto tr = detail::make_transition(soe_of(state), soe_of(k), forecast.prices[t], cx);
    plan.schedule.push_back({tr.p_g, tr.p_l, tr.p_l > 0.0, soe_of(k)});
    state = k;
  }
  plan.objective = detail::fold_objective(plan.schedule, forecast);
  return plan;
}

/// Exhaustive search over every grid-feasible action sequence that honors the
/// terminal anchor. Test oracle: it shares only the transition arithmetic and
/// the tie predicate with solve_horizon, not the DP. Refuses instances with
/// more than 10^6 sequences.
inline HorizonPlan enumerate_oracle(double soe0, const PriceForecast& forecast,
                                    const BatteryParams& params, int grid_levels) {
  detail::check_horizon_inputs(soe0, forecast, params, grid_levels);
  const int H = static_cast<int>(forecast.prices.size());
  const int L = grid_levels;
  double sequences = 1.0;
  for (int t = 0; t < H; ++t) {
    sequences *= static_cast<double>(L);
    if (sequences > 1e6) {
      throw OracleTooLarge("enumerate_oracle: grid_levels^H exceeds 10^6");
    }
  }
  const detail::SoeGrid grid(params, L);
  const detail::TransitionCtx cx(params);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const double terminal_floor = soe0 - params.bound_tol();

  // Value of the best tail from (t, soe), folded back-to-front. Candidates
  // are offered in the same order as in the DP: stay first (start only),
  // then grid levels ascending.
  auto search = [&](auto&& self, int t, double soe, bool at_start) -> double {
    if (t == H) return soe >= terminal_floor ? 0.0 : neg_inf;
    const double price = forecast.prices[t];
    detail::Picker pick;
    if (at_start) {
      pick.consider(L, detail::make_transition(soe, soe, price, cx),
                    0.0 + self(self, t + 1, soe, true));
    }
    for (int k = 0; k < L; ++k) {
      const auto tr = detail::make_transition(soe, grid.level(k), price, cx);
      if (!tr.feasible) continue;
      pick.consider(k, tr, tr.revenue + self(self, t + 1, grid.level(k), false));
    }
    return pick.value;
  };

  HorizonPlan plan;
  double soe = soe0;
  bool at_start = true;
  for (int t = 0; t < H; ++t) {
    const double price = forecast.prices[t];
    detail::Picker pick;
    if (at_start) {
      pick.consider(L, detail::make_transition(soe, soe, price, cx),
                    0.0 + search(search, t + 1, soe, true));
    }
    for (int k = 0; k < L; ++k) {
      const auto tr = detail::make_transition(soe, grid.level(k), price, cx);
      if (!tr.feasible) continue;
      pick.consider(k, tr, tr.revenue + search(search, t + 1, grid.level(k), false));
    }
    if (pick.choice < 0) throw std::logic_error("enumerate_oracle: no feasible continuation");
    if (pick.choice == L) {
      plan.schedule.push_back({0.0, 0.0, false, soe});
    } else {
      const auto tr = detail::make_transition(soe, grid.level(pick.choice), price, cx);
      plan.schedule.push_back({tr.p_g, tr.p_l, tr.p_l > 0.0, grid.level(pick.choice)});
      soe = grid.level(pick.choice);
      at_start = false;
    }
  }
  plan.objective = detail::fold_objective(plan.schedule, forecast);
  return plan;
}

/// Re-solves the horizon from the observed state and emits the first-step
/// bid: price is the forecast clearing price, quantity the planned net
/// generation.
inline AgentAction supervisor_action(const MarketObservation& observation,
                                     const BatteryParams& params, const PriceForecast& forecast,
                                     int grid_levels = 344) {
  const HorizonPlan plan = solve_horizon(observation.soe, forecast, params, grid_levels);
  const PlanStep& first = plan.schedule.front();
  return AgentAction{forecast.prices.front(), first.p_g - first.p_l};
}

}  // namespace bidsim
