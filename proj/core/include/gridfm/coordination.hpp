// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridfm {

enum class CoordinationMode { none, local_only, layered };

std::optional<CoordinationMode> coordination_mode_from_string(const std::string& name);
const char* to_string(CoordinationMode mode);

/// Transient safety bands enforced locally at each storage unit's point of
/// interconnection, with proportional engagement outside the bands.
struct SafetyLimits {
  double v_low = 0.88;          // pu
  double v_high = 1.10;
  double f_low_hz = 59.0;
  double f_high_hz = 61.0;
  double p_gain_per_hz = 2.0;   // pu of rating per Hz outside the band
  double q_gain_per_pu = 5.0;   // pu of rating per pu voltage outside the band

  std::string validate() const;
};

/// Active/reactive setpoints consumed by the droop laws, pu system base.
struct Setpoints {
  double p = 0.0;
  double q = 0.0;
};

/// Fast local safety layer: identity inside both bands, a proportional
/// corrective push toward the nearest band edge outside, saturated at the
/// device overload limit. Continuous at the band edges.
Setpoints safety_filter(double voltage_pu, double frequency_hz, const SafetyLimits& limits,
                        const Setpoints& raw, double rating, double overload_factor);

/// Communication topology of the storage fleet. Edges are undirected with
/// nonnegative weights; the slow layer exchanges state every update_period.
struct CommGraph {
  int node_count = 0;
  struct Edge {
    int a = 0;
    int b = 0;
    double weight = 1.0;
  };
  std::vector<Edge> edges;
  double update_period = 0.1;  // s
  double latency = 0.0;        // per-link communication delay, s

  bool connected(std::span<const char> in_service) const;
};

struct ConsensusGains {
  double k_freq = 1.0;     // frequency-correction agreement
  double k_volt = 1.0;     // voltage-correction agreement
  double k_share_p = 2.0;  // normalized active-power sharing
  double k_share_q = 0.5;  // normalized reactive-power sharing
  double k_track_f = 0.5;  // nominal-frequency restoration
  double k_track_v = 0.5;  // voltage-setpoint restoration
  double saturation = 0.05;  // correction bound, pu
};

/// One node's view exchanged over the communication graph.
struct ConsensusNodeState {
  double freq_corr = 0.0;   // Omega
  double volt_corr = 0.0;   // e
  double p_norm = 0.0;      // filtered P / rating
  double q_norm = 0.0;
  double local_freq_pu = 1.0;    // measured at the point of interconnection
  double local_volt_err = 0.0;   // V* - |V| measured
  bool in_service = true;
};

/// One synchronous consensus round (Jacobi update: every node reads its
/// neighbors' previous-round values). dt is the elapsed time integrated by
/// this round, normally the update period. Nodes with no in-service
/// neighbor degrade to the tracking terms alone.
void consensus_update(const CommGraph& graph, const ConsensusGains& gains,
                      std::span<const ConsensusNodeState> previous,
                      std::span<ConsensusNodeState> next, double dt);

/// Variant with neighbor values read from a (latency-delayed) remote
/// snapshot while each node's own terms use its current state.
void consensus_update(const CommGraph& graph, const ConsensusGains& gains,
                      std::span<const ConsensusNodeState> self,
                      std::span<const ConsensusNodeState> remote,
                      std::span<ConsensusNodeState> next, double dt);

}  // namespace gridfm
