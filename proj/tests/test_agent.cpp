#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bidsim/agent.hpp"
#include "test_util.hpp"

using bidsim::ActionMap;
using bidsim::AgentAction;
using bidsim::BatteryParams;
using bidsim::MarketObservation;
using bidsim::NetworkConfig;
using bidsim::ObservationScales;
using bidsim::RiskSchedule;
using bidsim::SacAgent;
using bidsim::SacConfig;

namespace {

BatteryParams default_battery() { return BatteryParams{}; }

// A small agent keeps the finite-difference suites fast.
SacAgent small_agent(std::uint64_t seed = 11, SacConfig cfg = SacConfig{}) {
  NetworkConfig net;
  net.hidden_layers = 2;
  net.hidden_width = 8;
  return SacAgent(cfg, default_battery(), ObservationScales{}, net, seed);
}

MarketObservation sample_obs() {
  MarketObservation obs;
  obs.price_forecast_now = 62.0;
  obs.last_clearing_price = 55.0;
  obs.soe = 400.0;
  obs.time_of_day = 17;
  obs.demand_forecast = 2900.0;
  return obs;
}

void zero_actor(SacAgent& agent) {
  for (auto& layer : agent.actor().weights) std::fill(layer.begin(), layer.end(), 0.0);
  for (auto& layer : agent.actor().biases) std::fill(layer.begin(), layer.end(), 0.0);
}

}  // namespace

TEST_CASE("risk schedule holds, ramps, then plateaus") {
  RiskSchedule s;
  CHECK(bidsim::supervisor_weight(0, s) == 1.0);
  CHECK(bidsim::supervisor_weight(399, s) == 1.0);
  CHECK(bidsim::supervisor_weight(400 + 2000, s) == 0.5);
  CHECK(bidsim::supervisor_weight(400 + 1000, s) == Catch::Approx(0.75));
  CHECK(bidsim::supervisor_weight(1000000, s) == 0.5);
  double prev = 1.0;
  for (long t = 0; t < 4000; ++t) {
    const double w = bidsim::supervisor_weight(t, s);
    CHECK(w <= prev);
    CHECK(w >= 0.5);
    CHECK(w <= 1.0);
    prev = w;
  }
}

TEST_CASE("td error is the one-step Bellman residual") {
  CHECK(bidsim::td_error(1.0, 0.0, 0.0, 0.98) == 1.0);
  const double v = 3.7, gamma = 0.9;
  CHECK(bidsim::td_error(0.0, v, v, gamma) == Catch::Approx((gamma - 1.0) * v));
  CHECK(bidsim::td_error(2.0, 5.0, 10.0, 0.98) == Catch::Approx(6.8));
}

TEST_CASE("zero-weight actor emits the midpoint action") {
  auto agent = small_agent();
  zero_actor(agent);
  const auto a = agent.actor_mean(sample_obs());
  CHECK(a.bid_price == Catch::Approx(60.0));  // price_scale/2
  CHECK(a.quantity == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("actor mean is deterministic and responds continuously to the state") {
  auto agent = small_agent(21);
  const auto obs = sample_obs();
  const auto a1 = agent.actor_mean(obs);
  const auto a2 = agent.actor_mean(obs);
  CHECK(a1.bid_price == a2.bid_price);
  CHECK(a1.quantity == a2.quantity);

  MarketObservation bumped = obs;
  double prev_diff = std::numeric_limits<double>::infinity();
  for (double h : {10.0, 1.0, 0.1, 0.01}) {
    bumped.price_forecast_now = obs.price_forecast_now + h;
    const auto b = agent.actor_mean(bumped);
    const double diff = std::abs(b.bid_price - a1.bid_price) + std::abs(b.quantity - a1.quantity);
    CHECK(diff < prev_diff + 1e-12);
    prev_diff = diff;
  }
  CHECK(prev_diff < 1.0);  // vanishing perturbation, vanishing response
}

TEST_CASE("blend endpoints are exact") {
  const ActionMap map(120.0, default_battery());
  const AgentAction a{23.456789, 111.1}, s{77.7, -250.0};
  const auto at_sup = bidsim::blend_action(a, {0.4, -0.2}, s, 1.0, map);
  CHECK(at_sup.bid_price == s.bid_price);
  CHECK(at_sup.quantity == s.quantity);
  const auto at_actor = bidsim::blend_action(a, {0.0, 0.0}, s, 0.0, map);
  CHECK(at_actor.bid_price == a.bid_price);
  CHECK(at_actor.quantity == a.quantity);
}

TEST_CASE("half-half blend averages in normalized space") {
  const ActionMap map(120.0, default_battery());
  const auto b = bidsim::blend_action({20.0, 100.0}, {0.0, 0.0}, {40.0, -100.0}, 0.5, map);
  CHECK(b.bid_price == Catch::Approx(30.0));
  CHECK(b.quantity == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("blended actions stay inside the endpoint hull") {
  const ActionMap map(120.0, default_battery());
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 2000; ++i) {
    const AgentAction a{60.0 + 50.0 * u(rng), 280.0 * u(rng)};
    const AgentAction s{60.0 + 40.0 * u(rng), 250.0 * u(rng)};
    const std::array<double, 2> e = {u(rng), u(rng)};
    const double w = 0.5 + 0.5 * std::abs(u(rng)) / 1.5;
    const auto blended = bidsim::blend_action(a, e, s, w, map);
    const auto noisy = map.to_physical({map.normalize(a)[0] + e[0], map.normalize(a)[1] + e[1]});
    const double lo_p = std::min(noisy.bid_price, s.bid_price) - 1e-9;
    const double hi_p = std::max(noisy.bid_price, s.bid_price) + 1e-9;
    const double lo_q = std::min(noisy.quantity, s.quantity) - 1e-9;
    const double hi_q = std::max(noisy.quantity, s.quantity) + 1e-9;
    REQUIRE(blended.bid_price >= lo_p);
    REQUIRE(blended.bid_price <= hi_p);
    REQUIRE(blended.quantity >= lo_q);
    REQUIRE(blended.quantity <= hi_q);
  }
}

TEST_CASE("supervising with the actor's own action changes nothing") {
  // Unit scales make normalize(to_physical(m)) an exact round trip, so the
  // supervision gradient is exactly zero.
  SacConfig cfg;
  BatteryParams bp;
  bp.max_charge = bp.max_discharge = 1.0;
  bp.energy_capacity = 2.0;
  ObservationScales scales;
  scales.price_scale = 1.0;
  NetworkConfig net;
  net.hidden_layers = 2;
  net.hidden_width = 8;
  SacAgent agent(cfg, bp, scales, net, 5);
  const auto obs = sample_obs();
  const auto self = agent.actor_mean(obs);
  const auto before = agent.actor().weights;
  agent.supervise_actor(obs, self);
  CHECK(agent.actor().weights == before);
}

TEST_CASE("repeated supervision converges to the supervisor action") {
  auto agent = small_agent(3);
  const auto obs = sample_obs();
  const AgentAction target{80.0, -180.0};
  std::vector<double> losses;
  for (int i = 0; i < 500; ++i) {
    losses.push_back(agent.supervision_loss(obs, target));
    agent.supervise_actor(obs, target);
  }
  // non-increasing after burn-in
  for (std::size_t i = 11; i < losses.size(); ++i) {
    REQUIRE(losses[i] <= losses[i - 1] + 1e-12);
  }
  CHECK(losses.back() < losses[10]);
}

TEST_CASE("supervision gradient matches finite differences") {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    auto agent = small_agent(rng());
    MarketObservation obs = sample_obs();
    obs.price_forecast_now = 60.0 + 30.0 * u(rng);
    obs.soe = 500.0 + 400.0 * u(rng);
    if (!testutil::away_from_kinks(agent.actor(), agent.normalize_observation(obs))) continue;
    const AgentAction target{60.0 + 50.0 * u(rng), 280.0 * u(rng)};
    const auto g = agent.supervision_gradients(obs, target);
    auto loss = [&]() { return agent.supervision_loss(obs, target); };
    auto& net = agent.actor();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (std::size_t i = 0; i < net.weights[l].size(); i += 7) {
        const double fd = testutil::fd_weight(net, l, i, loss);
        REQUIRE(testutil::rel_err(fd, g.d_weights[l][i]) < 1e-4);
      }
    }
    ++checked;
  }
}

TEST_CASE("critic gradient matches finite differences") {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    auto agent = small_agent(rng());
    MarketObservation obs = sample_obs();
    obs.demand_forecast = 2500.0 + 1000.0 * u(rng);
    obs.soe = 500.0 + 400.0 * u(rng);
    if (!testutil::away_from_kinks(agent.critic(), agent.normalize_observation(obs))) continue;
    const auto g = agent.value_gradients(obs);
    auto value = [&]() { return agent.critic_value(obs); };
    auto& net = agent.critic();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (std::size_t i = 0; i < net.weights[l].size(); i += 7) {
        const double fd = testutil::fd_weight(net, l, i, value);
        REQUIRE(testutil::rel_err(fd, g.d_weights[l][i]) < 1e-4);
      }
      for (std::size_t i = 0; i < net.biases[l].size(); i += 3) {
        const double fd = testutil::fd_bias(net, l, i, value);
        REQUIRE(testutil::rel_err(fd, g.d_biases[l][i]) < 1e-4);
      }
    }
    ++checked;
  }
}

TEST_CASE("policy score matches finite differences of log pi") {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    auto agent = small_agent(rng());
    MarketObservation obs = sample_obs();
    obs.last_clearing_price = 55.0 + 30.0 * u(rng);
    if (!testutil::away_from_kinks(agent.actor(), agent.normalize_observation(obs))) continue;
    const std::array<double, 2> a_n = {0.5 + 0.4 * u(rng), 0.8 * u(rng)};
    const auto g = agent.policy_score_gradients(obs, a_n);
    auto logp = [&]() { return agent.log_policy(obs, a_n); };
    auto& net = agent.actor();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (std::size_t i = 0; i < net.weights[l].size(); i += 7) {
        const double fd = testutil::fd_weight(net, l, i, logp);
        REQUIRE(testutil::rel_err(fd, g.d_weights[l][i]) < 1e-4);
      }
    }
    ++checked;
  }
}

TEST_CASE("critic update is a no-op at zero TD error and contracts otherwise") {
  auto agent = small_agent(17);
  const auto obs = sample_obs();
  const auto before = agent.critic().weights;
  agent.critic_update(obs, 0.0);
  CHECK(agent.critic().weights == before);

  // repeated updates on one fixed transition drive delta toward zero
  const double r = 120.0;
  const double gamma = agent.config().gamma;
  MarketObservation next = obs;
  next.soe = 300.0;
  next.time_of_day = 18;
  double first_delta = 0.0;
  double delta = 0.0;
  for (int i = 0; i < 3000; ++i) {
    delta = bidsim::td_error(r, agent.critic_value(obs), agent.critic_value(next), gamma);
    if (i == 0) first_delta = delta;
    agent.critic_update(obs, delta);
  }
  CHECK(std::abs(delta) < std::abs(first_delta));
}

TEST_CASE("policy gradient moves the mean toward better-than-expected actions") {
  auto agent = small_agent(29);
  const auto obs = sample_obs();
  const auto m0 = agent.actor_mean_normalized(obs);
  const auto before = agent.actor().weights;

  SECTION("zero advantage changes nothing") {
    agent.actor_pg_update(obs, {m0[0] + 0.3, m0[1] - 0.2}, 0.0);
    CHECK(agent.actor().weights == before);
  }

  SECTION("sampling the mean changes nothing") {
    agent.actor_pg_update(obs, m0, 123.0);
    CHECK(agent.actor().weights == before);
  }

  SECTION("positive delta with an above-mean quantity raises the mean quantity") {
    agent.actor_pg_update(obs, {m0[0], m0[1] + 0.5}, 50.0);
    const auto m1 = agent.actor_mean_normalized(obs);
    CHECK(m1[1] > m0[1]);
  }
}

TEST_CASE("penalized reward uses the settlement and the violation rows") {
  auto agent = small_agent(1);
  const auto obs = sample_obs();
  CHECK(agent.reward({30.0, 0.0}, obs, 0.0, {0, 0, 0, 0}) == 0.0);
  CHECK(agent.reward({30.0, 100.0}, obs, 3000.0, {0, 0, 0, 0}) == 3000.0);
  // 50 MWh over-discharge at mu = -10 costs 500
  CHECK(agent.reward({30.0, 100.0}, obs, 3000.0, {0, 0, 0, 50.0}) == Catch::Approx(2500.0));
  // any violation strictly lowers the reward, all else equal
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int i = 0; i < 100; ++i) {
    std::array<double, 4> v{0, 0, 0, 0};
    v[rng() % 4] = u(rng);
    REQUIRE(agent.reward({30.0, 50.0}, obs, 1000.0, v) < 1000.0);
  }
}

TEST_CASE("literal reward mode prices the executed bid at the forecast") {
  SacConfig cfg;
  cfg.literal_reward = true;
  auto agent = small_agent(1, cfg);
  auto obs = sample_obs();
  obs.price_forecast_now = 40.0;
  CHECK(agent.reward({35.0, 100.0}, obs, 999.0, {0, 0, 0, 0}) == Catch::Approx(4000.0));
  CHECK(agent.reward({35.0, -100.0}, obs, 999.0, {0, 0, 0, 0}) == Catch::Approx(-4000.0));
}

TEST_CASE("invalid configurations are rejected") {
  SacConfig bad;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(small_agent(1, bad), std::invalid_argument);
  SacConfig pos_mu;
  pos_mu.mu[2] = 1.0;
  CHECK_THROWS_AS(small_agent(1, pos_mu), std::invalid_argument);
  SacConfig bad_sched;
  bad_sched.schedule.final_supervisor_weight = 0.2;
  CHECK_THROWS_AS(small_agent(1, bad_sched), std::invalid_argument);
}
