// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/coordination.hpp"

#include <algorithm>
#include <cmath>

namespace gridfm {

std::optional<CoordinationMode> coordination_mode_from_string(const std::string& name) {
  if (name == "none") return CoordinationMode::none;
  if (name == "local_only") return CoordinationMode::local_only;
  if (name == "layered") return CoordinationMode::layered;
  return std::nullopt;
}

const char* to_string(CoordinationMode mode) {
  switch (mode) {
    case CoordinationMode::none: return "none";
    case CoordinationMode::local_only: return "local_only";
    case CoordinationMode::layered: return "layered";
  }
  return "unknown";
}

std::string SafetyLimits::validate() const {
  if (!(v_low < 1.0 && 1.0 < v_high)) return "voltage band must bracket 1.0 pu";
  if (!(f_low_hz < 60.0 && 60.0 < f_high_hz)) return "frequency band must bracket 60 Hz";
  if (p_gain_per_hz < 0.0 || q_gain_per_pu < 0.0) return "engagement gains must be >= 0";
  return {};
}

Setpoints safety_filter(double voltage_pu, double frequency_hz, const SafetyLimits& limits,
                        const Setpoints& raw, double rating, double overload_factor) {
  Setpoints out = raw;
  const double cap = overload_factor * rating;

  if (frequency_hz < limits.f_low_hz) {
    out.p += limits.p_gain_per_hz * rating * (limits.f_low_hz - frequency_hz);
  } else if (frequency_hz > limits.f_high_hz) {
    out.p += limits.p_gain_per_hz * rating * (limits.f_high_hz - frequency_hz);
  }

  if (voltage_pu < limits.v_low) {
    out.q += limits.q_gain_per_pu * rating * (limits.v_low - voltage_pu);
  } else if (voltage_pu > limits.v_high) {
    out.q += limits.q_gain_per_pu * rating * (limits.v_high - voltage_pu);
  }

  out.p = std::clamp(out.p, -cap, cap);
  out.q = std::clamp(out.q, -cap, cap);
  return out;
}

bool CommGraph::connected(std::span<const char> in_service) const {
  std::vector<std::vector<int>> adj(static_cast<size_t>(node_count));
  for (const Edge& e : edges) {
    if (e.weight <= 0.0) continue;
    if (!in_service[static_cast<size_t>(e.a)] || !in_service[static_cast<size_t>(e.b)]) continue;
    adj[static_cast<size_t>(e.a)].push_back(e.b);
    adj[static_cast<size_t>(e.b)].push_back(e.a);
  }
  int start = -1;
  int alive = 0;
  for (int k = 0; k < node_count; ++k) {
    if (in_service[static_cast<size_t>(k)]) {
      ++alive;
      if (start < 0) start = k;
    }
  }
  if (alive <= 1) return true;

  std::vector<char> seen(static_cast<size_t>(node_count), 0);
  std::vector<int> stack{start};
  seen[static_cast<size_t>(start)] = 1;
  int reached = 0;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    ++reached;
    for (int v : adj[static_cast<size_t>(u)]) {
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  return reached == alive;
}

void consensus_update(const CommGraph& graph, const ConsensusGains& gains,
                      std::span<const ConsensusNodeState> self,
                      std::span<const ConsensusNodeState> remote,
                      std::span<ConsensusNodeState> next, double dt) {
  const size_t n = self.size();

  // Neighbor accumulation against the communicated snapshot.
  std::vector<double> freq_diff(n, 0.0), volt_diff(n, 0.0);
  std::vector<double> share_p(n, 0.0), share_q(n, 0.0);
  for (const CommGraph::Edge& e : graph.edges) {
    const auto a = static_cast<size_t>(e.a);
    const auto b = static_cast<size_t>(e.b);
    if (!self[a].in_service || !self[b].in_service) continue;
    const double w = e.weight;
    freq_diff[a] += w * (remote[b].freq_corr - self[a].freq_corr);
    freq_diff[b] += w * (remote[a].freq_corr - self[b].freq_corr);
    volt_diff[a] += w * (remote[b].volt_corr - self[a].volt_corr);
    volt_diff[b] += w * (remote[a].volt_corr - self[b].volt_corr);
    share_p[a] += w * (remote[b].p_norm - self[a].p_norm);
    share_p[b] += w * (remote[a].p_norm - self[b].p_norm);
    share_q[a] += w * (remote[b].q_norm - self[a].q_norm);
    share_q[b] += w * (remote[a].q_norm - self[b].q_norm);
  }

  for (size_t k = 0; k < n; ++k) {
    next[k] = self[k];
    if (!self[k].in_service) continue;

    const double d_freq = gains.k_freq * freq_diff[k] + gains.k_share_p * share_p[k] +
                          gains.k_track_f * (1.0 - self[k].local_freq_pu);
    const double d_volt = gains.k_volt * volt_diff[k] + gains.k_share_q * share_q[k] +
                          gains.k_track_v * self[k].local_volt_err;

    next[k].freq_corr = std::clamp(self[k].freq_corr + dt * d_freq,
                                   -gains.saturation, gains.saturation);
    next[k].volt_corr = std::clamp(self[k].volt_corr + dt * d_volt,
                                   -gains.saturation, gains.saturation);
  }
}

void consensus_update(const CommGraph& graph, const ConsensusGains& gains,
                      std::span<const ConsensusNodeState> previous,
                      std::span<ConsensusNodeState> next, double dt) {
  consensus_update(graph, gains, previous, previous, next, dt);
}

}  // namespace gridfm
