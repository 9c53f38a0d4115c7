#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "bidsim/action.hpp"

namespace bidsim {

struct InfeasibleTransition : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsafeSupervisor : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Physical parameters of the storage plant.
struct BatteryParams {
  double energy_capacity = 1029.0;  // MWh, upper SOE bound
  double soe_floor = 0.0;           // MWh, lower SOE bound
  double max_charge = 300.0;        // MWh per step bought as load
  double max_discharge = 300.0;     // MWh per step sold as generation
  double eta_charge = 1.0;          // fraction of purchased energy stored
  double eta_discharge = 1.0;       // SOE drained per MWh generated

  bool valid() const {
    return std::isfinite(energy_capacity) && std::isfinite(soe_floor) && soe_floor >= 0.0 &&
           soe_floor < energy_capacity && max_charge > 0.0 && max_discharge > 0.0 &&
           eta_charge > 0.0 && eta_charge <= 1.0 && eta_discharge > 0.0 && eta_discharge <= 1.0;
  }

  // Slack for float dust when grid-quantized plans are re-executed.
  double bound_tol() const { return 1e-9 * std::max(1.0, energy_capacity); }
  double rate_tol() const { return 1e-9 * std::max({1.0, max_charge, max_discharge}); }
};

struct BatteryState {
  double soe = 0.0;  // MWh
  BatteryParams params;
};

inline double next_soe(const BatteryState& s, double p_g, double p_l) {
  return s.soe - s.params.eta_discharge * p_g + s.params.eta_charge * p_l;
}

/// True iff executing (p_g, p_l) from this state is physically feasible:
/// non-negative rates within limits, at most one mode active, and the
/// post-step SOE inside [soe_floor, energy_capacity].
inline bool is_safe(const BatteryState& s, double p_g, double p_l) {
  const auto& p = s.params;
  if (!std::isfinite(p_g) || !std::isfinite(p_l)) return false;
  if (p_g < 0.0 || p_l < 0.0) return false;
  if (p_g > 0.0 && p_l > 0.0) return false;
  if (p_g > p.max_discharge + p.rate_tol()) return false;
  if (p_l > p.max_charge + p.rate_tol()) return false;
  const double soe1 = next_soe(s, p_g, p_l);
  return soe1 >= p.soe_floor - p.bound_tol() && soe1 <= p.energy_capacity + p.bound_tol();
}

/// Advances the SOE by one step. The action must already be shielded; a
/// bound violation here means the shield itself is broken.
inline BatteryState step_soe(const BatteryState& s, double p_g, double p_l) {
  if (!is_safe(s, p_g, p_l)) {
    throw InfeasibleTransition("step_soe: transition p_g=" + std::to_string(p_g) + " p_l=" +
                               std::to_string(p_l) + " from soe=" + std::to_string(s.soe) +
                               " leaves the feasible region");
  }
  BatteryState out = s;
  out.soe = std::clamp(next_soe(s, p_g, p_l), s.params.soe_floor, s.params.energy_capacity);
  return out;
}

/// Per-constraint violation magnitudes of an arbitrary (possibly unsafe)
/// action: {charge rate excess, discharge rate excess, SOE above capacity,
/// SOE below floor}. The penalized reward consumes these.
inline std::array<double, 4> violation_magnitudes(const BatteryState& s, double p_g, double p_l) {
  const auto& p = s.params;
  const double soe1 = next_soe(s, std::max(p_g, 0.0), std::max(p_l, 0.0));
  return {
      std::max(0.0, p_l - p.max_charge),
      std::max(0.0, p_g - p.max_discharge),
      std::max(0.0, soe1 - p.energy_capacity),
      std::max(0.0, p.soe_floor - soe1),
  };
}

inline std::array<double, 4> violation_magnitudes(const BatteryState& s, const AgentAction& a) {
  return violation_magnitudes(s, a.generation(), a.load());
}

/// A bid is admissible when its quantity decomposition is physically safe
/// and its price is a valid market bid (finite, non-negative).
inline bool action_safe(const BatteryState& s, const AgentAction& a) {
  if (!std::isfinite(a.bid_price) || a.bid_price < 0.0) return false;
  if (!std::isfinite(a.quantity)) return false;
  return is_safe(s, a.generation(), a.load());
}

/// The runtime safety shield: an admissible proposal passes through
/// untouched; anything else is replaced by the supervisor's action.
inline std::pair<AgentAction, bool> shield(const BatteryState& s, const AgentAction& proposed,
                                           const AgentAction& supervisor) {
  if (action_safe(s, proposed)) return {proposed, false};
  if (!action_safe(s, supervisor)) {
    throw UnsafeSupervisor("shield: supervisor action (price=" + std::to_string(supervisor.bid_price) +
                           ", quantity=" + std::to_string(supervisor.quantity) +
                           ") is itself unsafe at soe=" + std::to_string(s.soe));
  }
  return {supervisor, true};
}

}  // namespace bidsim
