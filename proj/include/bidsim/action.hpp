#pragma once

#include <cmath>

namespace bidsim {

/// A battery market bid: a price and a signed quantity.
/// quantity > 0 offers generation into the auction, quantity < 0 is a load
/// added to system demand. Units: $/MWh and MWh per step.
struct AgentAction {
  double bid_price = 0.0;
  double quantity = 0.0;

  double generation() const { return quantity > 0.0 ? quantity : 0.0; }
  double load() const { return quantity < 0.0 ? -quantity : 0.0; }
};

/// The 5-component state the bidding agent observes each step.
struct MarketObservation {
  double price_forecast_now = 0.0;   // $/MWh, forecast for the current step
  double last_clearing_price = 0.0;  // $/MWh, realized at the previous step
  double soe = 0.0;                  // MWh currently stored
  int time_of_day = 0;               // step index within the day
  double demand_forecast = 0.0;      // MWh, demand about to be cleared

  bool finite() const {
    return std::isfinite(price_forecast_now) && std::isfinite(last_clearing_price) &&
           std::isfinite(soe) && std::isfinite(demand_forecast);
  }
};

}  // namespace bidsim
