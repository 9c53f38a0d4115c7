#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidsim {

/// One seller's offer into the uniform-price auction.
struct SupplyBid {
  std::string agent_id;
  double price = 0.0;     // $/MWh
  double quantity = 0.0;  // MWh

  bool valid() const {
    return std::isfinite(price) && std::isfinite(quantity) && price >= 0.0 && quantity >= 0.0;
  }
};

struct InvalidBid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientSupply : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Result of clearing one auction step. All dispatched sellers are paid
/// clearing_price regardless of their own bid price.
struct ClearingOutcome {
  double clearing_price = 0.0;
  std::map<std::string, double> dispatch;  // agent_id -> MWh dispatched
  double served_demand = 0.0;

  double dispatched(const std::string& agent_id) const {
    auto it = dispatch.find(agent_id);
    return it == dispatch.end() ? 0.0 : it->second;
  }
};

/// Clears a uniform-price auction by merit order: bids are filled in
/// ascending price order until demand is met; the marginal bid may be
/// partially dispatched and sets the clearing price. Equal-price bids at
/// the margin are split pro-rata by bid quantity, so the outcome does not
/// depend on the order bids arrive in.
///
/// demand == 0 clears at price 0 with no dispatch. Throws InsufficientSupply
/// when total offered quantity cannot cover demand.
inline ClearingOutcome clear_market(std::span<const SupplyBid> bids, double demand) {
  if (!std::isfinite(demand) || demand < 0.0) {
    throw InvalidBid("clear_market: demand must be finite and non-negative");
  }
  double total = 0.0;
  for (const auto& b : bids) {
    if (!b.valid()) {
      throw InvalidBid("clear_market: bid from '" + b.agent_id + "' has negative or non-finite fields");
    }
    total += b.quantity;
  }
  if (total < demand) {
    throw InsufficientSupply("clear_market: total bid quantity " + std::to_string(total) +
                             " MWh is below demand " + std::to_string(demand) + " MWh");
  }

  ClearingOutcome out;
  out.served_demand = demand;
  for (const auto& b : bids) out.dispatch[b.agent_id] += 0.0;
  if (demand == 0.0) {
    out.clearing_price = 0.0;
    return out;
  }

  // Group into price levels so the pro-rata tie-break sees all equal-price
  // bids at once.
  std::vector<const SupplyBid*> order;
  order.reserve(bids.size());
  for (const auto& b : bids) order.push_back(&b);
  std::stable_sort(order.begin(), order.end(),
                   [](const SupplyBid* a, const SupplyBid* b) { return a->price < b->price; });

  double remaining = demand;
  double price = 0.0;
  std::size_t i = 0;
  while (i < order.size() && remaining > 0.0) {
    std::size_t j = i;
    double level_qty = 0.0;
    while (j < order.size() && order[j]->price == order[i]->price) {
      level_qty += order[j]->quantity;
      ++j;
    }
    if (level_qty > 0.0) {
      price = order[i]->price;
      if (level_qty <= remaining) {
        for (std::size_t k = i; k < j; ++k) out.dispatch[order[k]->agent_id] += order[k]->quantity;
        remaining -= level_qty;
      } else {
        // Marginal level: pro-rata shares; the largest bid absorbs the
        // rounding remainder so dispatched quantities sum to demand exactly.
        std::size_t largest = i;
        for (std::size_t k = i; k < j; ++k) {
          if (order[k]->quantity > order[largest]->quantity) largest = k;
        }
        double allotted = 0.0;
        for (std::size_t k = i; k < j; ++k) {
          if (k == largest) continue;
          double share = std::min(remaining * (order[k]->quantity / level_qty), order[k]->quantity);
          out.dispatch[order[k]->agent_id] += share;
          allotted += share;
        }
        out.dispatch[order[largest]->agent_id] += remaining - allotted;
        remaining = 0.0;
      }
    }
    i = j;
  }
  out.clearing_price = price;
  return out;
}

/// A battery load bid is not auctioned; it is added straight to demand.
inline double effective_demand(double base_demand, double battery_load_bid) {
  return base_demand + battery_load_bid;
}

}  // namespace bidsim
