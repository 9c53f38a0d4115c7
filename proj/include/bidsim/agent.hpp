#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "bidsim/action.hpp"
#include "bidsim/battery.hpp"
#include "bidsim/neural.hpp"

namespace bidsim {

/// Supervisor-weight schedule: w = 1 (pure supervisor) for the hold phase,
/// then a linear descent to the final blend weight.
struct RiskSchedule {
  long hold_steps = 400;
  long ramp_steps = 2000;
  double final_supervisor_weight = 0.5;

  bool valid() const {
    return hold_steps >= 0 && ramp_steps >= 1 && final_supervisor_weight >= 0.5 &&
           final_supervisor_weight <= 1.0;
  }
};

inline double supervisor_weight(long step, const RiskSchedule& s) {
  if (step < s.hold_steps) return 1.0;
  const long into = step - s.hold_steps;
  if (into >= s.ramp_steps) return s.final_supervisor_weight;
  return 1.0 - (1.0 - s.final_supervisor_weight) *
                   (static_cast<double>(into) / static_cast<double>(s.ramp_steps));
}

struct SacConfig {
  double gamma = 0.98;
  double sigma_explore = 1.0;        // exploration std, normalized action units
  double sigma_policy = 1.0;         // std used in the Gaussian score
  double alpha = 1e-4;               // critic step size
  double beta1 = 1e-4;               // supervision step size
  double beta2 = 1e-4;               // policy-gradient step size
  std::array<double, 4> mu = {-10.0, -10.0, -10.0, -10.0};  // penalty weights, <= 0
  RiskSchedule schedule;
  bool literal_reward = false;       // forecast-price revenue instead of settlement

  bool valid() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) return false;
    if (!(sigma_explore > 0.0 && sigma_policy > 0.0)) return false;
    if (!(alpha > 0.0 && beta1 > 0.0 && beta2 > 0.0)) return false;
    for (double m : mu) {
      if (!(m <= 0.0)) return false;
    }
    return schedule.valid();
  }
};

struct NetworkConfig {
  int hidden_layers = 6;
  int hidden_width = 64;
  double leak = 0.01;
};

struct ObservationScales {
  double price_scale = 120.0;   // $/MWh mapped to 1.0
  double demand_scale = 5000.0; // MWh mapped to 1.0
  int steps_per_day = 48;
};

/// Affine bridge between normalized actions (price in [0,1], quantity in
/// [-1,1]) and physical bids.
struct ActionMap {
  double price_scale = 120.0;
  double q_mid = 0.0;
  double q_half = 300.0;

  ActionMap() = default;
  ActionMap(double ps, const BatteryParams& bp)
      : price_scale(ps),
        q_mid((bp.max_discharge - bp.max_charge) / 2.0),
        q_half((bp.max_discharge + bp.max_charge) / 2.0) {}

  std::array<double, 2> normalize(const AgentAction& a) const {
    return {a.bid_price / price_scale, (a.quantity - q_mid) / q_half};
  }
  AgentAction to_physical(const std::array<double, 2>& n) const {
    return {n[0] * price_scale, q_mid + n[1] * q_half};
  }
};

inline double td_error(double reward, double value_s, double value_s_next, double gamma) {
  return reward + gamma * value_s_next - value_s;
}

/// Risk-weighted combination of the exploring actor and the supervisor,
/// done componentwise in normalized action space. The w=1 and noiseless w=0
/// endpoints return their input bit-for-bit.
inline AgentAction blend_action(const AgentAction& a_actor, const std::array<double, 2>& a_explore_noise,
                                const AgentAction& a_supervisor, double w, const ActionMap& map) {
  if (w == 1.0) return a_supervisor;
  if (w == 0.0 && a_explore_noise[0] == 0.0 && a_explore_noise[1] == 0.0) return a_actor;
  const auto na = map.normalize(a_actor);
  const auto ns = map.normalize(a_supervisor);
  const std::array<double, 2> blended = {
      (1.0 - w) * (na[0] + a_explore_noise[0]) + w * ns[0],
      (1.0 - w) * (na[1] + a_explore_noise[1]) + w * ns[1],
  };
  return map.to_physical(blended);
}

/// The Supervised Actor-Critic learner. Holds the actor and critic networks
/// and applies the three per-step gradient pathways: supervision toward the
/// supervisor's action, the TD critic regression, and the Gaussian-score
/// policy gradient. One instance is a strictly sequential online learner.
class SacAgent {
 public:
  SacAgent(SacConfig cfg, BatteryParams battery, ObservationScales scales, NetworkConfig net,
           std::uint64_t seed)
      : cfg_(cfg),
        battery_(battery),
        scales_(scales),
        map_(scales.price_scale, battery),
        noise_rng_(seed ^ 0x853c49e6748fea9bULL) {
    if (!cfg_.valid()) throw std::invalid_argument("SacAgent: invalid SAC configuration");
    if (!battery_.valid()) throw std::invalid_argument("SacAgent: invalid battery parameters");
    std::vector<int> actor_dims{5};
    for (int i = 0; i < net.hidden_layers; ++i) actor_dims.push_back(net.hidden_width);
    std::vector<int> critic_dims = actor_dims;
    actor_dims.push_back(2);
    critic_dims.push_back(1);
    actor_ = make_mlp(actor_dims, net.leak, seed ^ 0x9e3779b97f4a7c15ULL);
    critic_ = make_mlp(critic_dims, net.leak, seed ^ 0x2545f4914f6cdd1dULL);
  }

  std::vector<double> normalize_observation(const MarketObservation& obs) const {
    return {obs.price_forecast_now / scales_.price_scale,
            obs.last_clearing_price / scales_.price_scale,
            obs.soe / battery_.energy_capacity,
            static_cast<double>(obs.time_of_day) / scales_.steps_per_day,
            obs.demand_forecast / scales_.demand_scale};
  }

  /// Deterministic mean of the policy, in normalized action coordinates.
  std::array<double, 2> actor_mean_normalized(const MarketObservation& obs) const {
    const auto u = forward(actor_, normalize_observation(obs));
    return squash(u);
  }

  AgentAction actor_mean(const MarketObservation& obs) const {
    return map_.to_physical(actor_mean_normalized(obs));
  }

  std::array<double, 2> sample_noise() {
    std::normal_distribution<double> n(0.0, cfg_.sigma_explore);
    return {n(noise_rng_), n(noise_rng_)};
  }

  /// Gradient of F_a = 1/2 ||a_A - a_S||^2 with respect to the actor
  /// parameters, in normalized action space.
  MlpGradients supervision_gradients(const MarketObservation& obs,
                                     const AgentAction& supervisor_action) const {
    const auto s_n = normalize_observation(obs);
    const auto u = forward(actor_, s_n);
    const auto m = squash(u);
    const auto target = map_.normalize(supervisor_action);
    const std::array<double, 2> upstream = {
        (m[0] - target[0]) * squash_grad_price(m[0]),
        (m[1] - target[1]) * squash_grad_quantity(m[1]),
    };
    return backward(actor_, s_n, upstream);
  }

  /// One descent step on F_a.
  void supervise_actor(const MarketObservation& obs, const AgentAction& supervisor_action) {
    auto grads = supervision_gradients(obs, supervisor_action);
    scale(grads, -1.0);
    adagrad_step(actor_, grads, cfg_.beta1);
  }

  double supervision_loss(const MarketObservation& obs, const AgentAction& supervisor_action) const {
    const auto m = actor_mean_normalized(obs);
    const auto target = map_.normalize(supervisor_action);
    const double d0 = m[0] - target[0];
    const double d1 = m[1] - target[1];
    return 0.5 * (d0 * d0 + d1 * d1);
  }

  double critic_value(const MarketObservation& obs) const {
    return forward(critic_, normalize_observation(obs))[0];
  }

  /// Gradient of V_omega(s) with respect to the critic parameters.
  MlpGradients value_gradients(const MarketObservation& obs) const {
    const std::array<double, 1> upstream = {1.0};
    return backward(critic_, normalize_observation(obs), upstream);
  }

  /// Semi-gradient TD step: omega moves along alpha * delta * grad V(s).
  void critic_update(const MarketObservation& obs, double delta) {
    auto grads = value_gradients(obs);
    scale(grads, delta);
    adagrad_step(critic_, grads, cfg_.alpha);
  }

  /// Log-density of the Gaussian policy at a normalized action, up to the
  /// normalizing constant.
  double log_policy(const MarketObservation& obs, const std::array<double, 2>& action_n) const {
    const auto m = actor_mean_normalized(obs);
    const double d0 = action_n[0] - m[0];
    const double d1 = action_n[1] - m[1];
    return -(d0 * d0 + d1 * d1) / (2.0 * cfg_.sigma_policy * cfg_.sigma_policy);
  }

  /// Score function grad_theta ln pi_theta(a|s) for the Gaussian policy.
  MlpGradients policy_score_gradients(const MarketObservation& obs,
                                      const std::array<double, 2>& action_n) const {
    const auto s_n = normalize_observation(obs);
    const auto u = forward(actor_, s_n);
    const auto m = squash(u);
    const double inv_var = 1.0 / (cfg_.sigma_policy * cfg_.sigma_policy);
    const std::array<double, 2> upstream = {
        (action_n[0] - m[0]) * inv_var * squash_grad_price(m[0]),
        (action_n[1] - m[1]) * inv_var * squash_grad_quantity(m[1]),
    };
    return backward(actor_, s_n, upstream);
  }

  /// Policy-gradient ascent step. executed_actor_component is the pre-blend
  /// sample a_A + a_E in normalized coordinates.
  void actor_pg_update(const MarketObservation& obs,
                       const std::array<double, 2>& executed_actor_component, double delta) {
    auto grads = policy_score_gradients(obs, executed_actor_component);
    scale(grads, delta);
    adagrad_step(actor_, grads, cfg_.beta2);
  }

  /// Penalized reward: the realized settlement (or, in literal mode, the
  /// forecast-price revenue of the executed bid) plus the weighted
  /// constraint-violation penalty.
  double reward(const AgentAction& action_executed, const MarketObservation& obs,
                double cleared_revenue, const std::array<double, 4>& violations) const {
    double r = cfg_.literal_reward ? obs.price_forecast_now * action_executed.quantity
                                   : cleared_revenue;
    for (std::size_t i = 0; i < violations.size(); ++i) r += cfg_.mu[i] * violations[i];
    return r;
  }

  const SacConfig& config() const { return cfg_; }
  const ActionMap& action_map() const { return map_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }

 private:
  // Price squashes to [0,1] via the logistic, quantity to [-1,1] via tanh.
  static std::array<double, 2> squash(const std::vector<double>& u) {
    return {1.0 / (1.0 + std::exp(-u[0])), std::tanh(u[1])};
  }
  static double squash_grad_price(double m) { return m * (1.0 - m); }
  static double squash_grad_quantity(double m) { return 1.0 - m * m; }

  SacConfig cfg_;
  BatteryParams battery_;
  ObservationScales scales_;
  ActionMap map_;
  Mlp actor_;
  Mlp critic_;
  std::mt19937_64 noise_rng_;
};

}  // namespace bidsim
