// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gridfm/coordination.hpp"
#include "test_util.hpp"

using namespace gridfm;

namespace {

CommGraph two_node_graph() {
  CommGraph g;
  g.node_count = 2;
  g.edges = {{0, 1, 1.0}};
  return g;
}

ConsensusGains freq_only(double k) {
  ConsensusGains gains;
  gains.k_freq = k;
  gains.k_volt = 0.0;
  gains.k_share_p = 0.0;
  gains.k_share_q = 0.0;
  gains.k_track_f = 0.0;
  gains.k_track_v = 0.0;
  return gains;
}

std::vector<ConsensusNodeState> round_trip(const CommGraph& g, const ConsensusGains& gains,
                                           std::vector<ConsensusNodeState> states, double dt,
                                           int rounds) {
  std::vector<ConsensusNodeState> next(states.size());
  for (int r = 0; r < rounds; ++r) {
    consensus_update(g, gains, std::span<const ConsensusNodeState>(states),
                     std::span<ConsensusNodeState>(next), dt);
    states = next;
  }
  return states;
}

}  // namespace

TEST_SUITE("coordination") {

TEST_CASE("safety filter is the identity inside both bands") {
  SafetyLimits limits;
  const Setpoints raw{0.25, -0.1};
  const Setpoints out = safety_filter(1.0, 60.0, limits, raw, 1.0, 1.2);
  CHECK(out.p == raw.p);
  CHECK(out.q == raw.q);
}

TEST_CASE("under-frequency engagement follows the proportional law") {
  SafetyLimits limits;
  limits.f_low_hz = 59.0;
  limits.p_gain_per_hz = 2.0;
  const Setpoints out = safety_filter(1.0, 58.8, limits, {0.0, 0.0}, 1.0, 1.2);
  CHECK(out.p == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(out.q == 0.0);

  // Capped at the overload limit.
  const Setpoints capped = safety_filter(1.0, 55.0, limits, {0.0, 0.0}, 1.0, 1.2);
  CHECK(capped.p == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("over-voltage commands reactive absorption") {
  SafetyLimits limits;  // band [0.88, 1.10]
  const Setpoints out = safety_filter(1.15, 60.0, limits, {0.0, 0.0}, 1.0, 1.2);
  CHECK(out.q < 0.0);
  const Setpoints boost = safety_filter(0.80, 60.0, limits, {0.0, 0.0}, 1.0, 1.2);
  CHECK(boost.q > 0.0);
}

TEST_CASE("filter output is continuous at the band edges") {
  SafetyLimits limits;
  const double eps = 1e-9;
  for (double f : {limits.f_low_hz, limits.f_high_hz}) {
    const Setpoints inside = safety_filter(1.0, f + (f < 60 ? eps : -eps), limits, {0.1, 0.0}, 1.0, 1.2);
    const Setpoints outside = safety_filter(1.0, f + (f < 60 ? -eps : eps), limits, {0.1, 0.0}, 1.0, 1.2);
    CHECK(std::abs(inside.p - outside.p) < 1e-6);
  }
  for (double v : {limits.v_low, limits.v_high}) {
    const Setpoints inside = safety_filter(v + (v < 1 ? eps : -eps), 60.0, limits, {0.0, 0.2}, 1.0, 1.2);
    const Setpoints outside = safety_filter(v + (v < 1 ? -eps : eps), 60.0, limits, {0.0, 0.2}, 1.0, 1.2);
    CHECK(std::abs(inside.q - outside.q) < 1e-6);
  }
}

TEST_CASE("consensus fixed point: identical nodes at nominal frequency") {
  CommGraph g = two_node_graph();
  ConsensusGains gains;  // all terms active
  std::vector<ConsensusNodeState> states(2);
  for (auto& s : states) {
    s.freq_corr = 0.01;
    s.volt_corr = -0.004;
    s.p_norm = 0.3;
    s.q_norm = 0.1;
    s.local_freq_pu = 1.0;
    s.local_volt_err = 0.0;
  }
  const auto next = round_trip(g, gains, states, 0.1, 5);
  for (const auto& s : next) {
    CHECK(s.freq_corr == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(s.volt_corr == doctest::Approx(-0.004).epsilon(1e-12));
  }
}

TEST_CASE("two-node consensus matches the discrete closed form") {
  // Undamped averaging of (0.02, 0) converges to (0.01, 0.01); the
  // disagreement contracts by (1 - 2 k dt) per round, the discrete
  // counterpart of the rate-2 continuous decay.
  CommGraph g = two_node_graph();
  const double dt = 0.05;
  std::vector<ConsensusNodeState> states(2);
  states[0].freq_corr = 0.02;
  states[1].freq_corr = 0.0;

  std::vector<ConsensusNodeState> cur = states;
  const double contraction = 1.0 - 2.0 * dt;
  for (int r = 1; r <= 40; ++r) {
    cur = round_trip(g, freq_only(1.0), cur, dt, 1);
    const double expected_dev = 0.01 * std::pow(contraction, r);
    CHECK(std::abs(cur[0].freq_corr - (0.01 + expected_dev)) < 1e-6);
    CHECK(std::abs(cur[1].freq_corr - (0.01 - expected_dev)) < 1e-6);
  }
  // And against the continuous exp(-2 t) envelope at small dt.
  std::vector<ConsensusNodeState> fine = states;
  const double dt_fine = 1e-3;
  fine = round_trip(g, freq_only(1.0), fine, dt_fine, 1000);  // t = 1 s
  const double analytic = 0.01 + 0.01 * std::exp(-2.0);
  CHECK(std::abs(fine[0].freq_corr - analytic) < 1e-4);
}

TEST_CASE("sum of corrections is conserved without tracking") {
  testutil::Lcg rng(42ull);
  CommGraph g;
  g.node_count = 6;
  g.edges = {{0, 1, 1.0}, {1, 2, 0.5}, {2, 3, 1.0}, {3, 4, 2.0}, {4, 5, 1.0}, {5, 0, 1.0}, {1, 4, 0.7}};
  ConsensusGains gains = freq_only(0.8);
  gains.k_share_p = 0.6;
  gains.saturation = 10.0;  // conservation presumes unsaturated corrections

  std::vector<ConsensusNodeState> states(6);
  double sum0 = 0.0;
  for (auto& s : states) {
    s.freq_corr = rng.uniform(-0.01, 0.01);
    s.p_norm = rng.uniform(-0.5, 0.5);
    s.local_freq_pu = rng.uniform(0.99, 1.01);  // ignored: k_track_f = 0
    sum0 += s.freq_corr;
  }
  auto cur = states;
  for (int r = 0; r < 50; ++r) {
    cur = round_trip(g, gains, cur, 0.05, 1);
    double sum = 0.0;
    for (const auto& s : cur) sum += s.freq_corr;
    CHECK(std::abs(sum - sum0) < 1e-9);
  }
}

TEST_CASE("disagreement is non-increasing on a connected graph") {
  testutil::Lcg rng(7ull);
  CommGraph g;
  g.node_count = 5;
  g.edges = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}, {0, 4, 1.0}, {1, 3, 1.0}};
  std::vector<ConsensusNodeState> states(5);
  for (auto& s : states) s.freq_corr = rng.uniform(-0.02, 0.02);

  auto spread = [](const std::vector<ConsensusNodeState>& v) {
    double lo = v[0].freq_corr, hi = v[0].freq_corr;
    for (const auto& s : v) {
      lo = std::min(lo, s.freq_corr);
      hi = std::max(hi, s.freq_corr);
    }
    return hi - lo;
  };

  auto cur = states;
  double last = spread(cur);
  for (int r = 0; r < 100; ++r) {
    cur = round_trip(g, freq_only(1.0), cur, 0.05, 1);
    const double now = spread(cur);
    CHECK(now <= last + 1e-15);
    last = now;
  }
  CHECK(last < 1e-3);
}

TEST_CASE("power-sharing term contracts normalized-power spread") {
  // Toy closed loop on a ring of four: each node's normalized power
  // responds one-for-one to its frequency correction.
  CommGraph g;
  g.node_count = 4;
  g.edges = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 0, 1.0}};
  ConsensusGains gains = freq_only(0.0);
  gains.k_share_p = 1.0;
  gains.saturation = 10.0;

  std::vector<double> p0{0.8, 0.2, 0.5, 0.1};
  std::vector<ConsensusNodeState> states(4);
  for (size_t k = 0; k < 4; ++k) states[k].p_norm = p0[k];

  auto spread = [&](const std::vector<ConsensusNodeState>& v) {
    double lo = 1e9, hi = -1e9;
    for (const auto& s : v) {
      lo = std::min(lo, s.p_norm);
      hi = std::max(hi, s.p_norm);
    }
    return hi - lo;
  };

  double last = spread(states);
  std::vector<ConsensusNodeState> next(4);
  for (int r = 0; r < 200; ++r) {
    consensus_update(g, gains, std::span<const ConsensusNodeState>(states),
                     std::span<ConsensusNodeState>(next), 0.05);
    for (size_t k = 0; k < 4; ++k) {
      next[k].p_norm = p0[k] + next[k].freq_corr;  // droop response
    }
    states = next;
    const double now = spread(states);
    CHECK(now <= last + 1e-12);
    last = now;
  }
  CHECK(last < 0.05);
}

TEST_CASE("saturation bounds the corrections") {
  CommGraph g = two_node_graph();
  ConsensusGains gains;
  gains.k_track_f = 100.0;
  gains.saturation = 0.05;
  std::vector<ConsensusNodeState> states(2);
  states[0].local_freq_pu = 0.9;  // huge tracking error
  states[1].local_freq_pu = 0.9;
  const auto next = round_trip(g, gains, states, 1.0, 10);
  CHECK(next[0].freq_corr == doctest::Approx(0.05));
  CHECK(std::abs(next[1].freq_corr) <= 0.05);
}

TEST_CASE("tripped nodes neither send nor update") {
  CommGraph g = two_node_graph();
  std::vector<ConsensusNodeState> states(2);
  states[0].freq_corr = 0.02;
  states[1].freq_corr = -0.02;
  states[1].in_service = false;
  const auto next = round_trip(g, freq_only(1.0), states, 0.1, 3);
  CHECK(next[0].freq_corr == doctest::Approx(0.02).epsilon(1e-12));   // no live neighbor
  CHECK(next[1].freq_corr == doctest::Approx(-0.02).epsilon(1e-12));  // frozen
}

TEST_CASE("isolated node degrades to the tracking term") {
  CommGraph g;
  g.node_count = 1;
  ConsensusGains gains = freq_only(1.0);
  gains.k_track_f = 0.5;
  std::vector<ConsensusNodeState> states(1);
  states[0].local_freq_pu = 0.99;
  const auto next = round_trip(g, gains, states, 0.1, 1);
  CHECK(next[0].freq_corr == doctest::Approx(0.1 * 0.5 * 0.01).epsilon(1e-12));
}

TEST_CASE("graph connectivity check") {
  CommGraph g;
  g.node_count = 4;
  g.edges = {{0, 1, 1.0}, {2, 3, 1.0}};
  std::vector<char> alive(4, 1);
  CHECK(!g.connected(std::span<const char>(alive.data(), 4)));
  g.edges.push_back({1, 2, 1.0});
  CHECK(g.connected(std::span<const char>(alive.data(), 4)));
  // Losing the bridge node splits the fleet.
  alive[1] = 0;
  CHECK(!g.connected(std::span<const char>(alive.data(), 4)));
}

TEST_CASE("coordination mode parsing") {
  CHECK(coordination_mode_from_string("none") == CoordinationMode::none);
  CHECK(coordination_mode_from_string("local_only") == CoordinationMode::local_only);
  CHECK(coordination_mode_from_string("layered") == CoordinationMode::layered);
  CHECK(!coordination_mode_from_string("LAYERED").has_value());
}

}  // TEST_SUITE
