// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gridfm {

enum class EventKind {
  apply_fault,
  clear_fault,
  switch_branch,
  relay_trip,
  ufls_shed,
  profile_milestone,
};

const char* to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(const std::string& name);

/// Tie-break order for events firing at the same instant.
int event_priority(EventKind kind);

/// One entry of the chronological event log.
struct EventRecord {
  double t = 0.0;
  EventKind kind = EventKind::profile_milestone;
  std::string device;   // "gen:G16", "load:L50", "inv:S37", "branch:50-52", "bus:44"
  std::string detail;   // trip cause, switch action, milestone label, "noop"
  double power_mw = 0.0;   // pre-trip output or shed amount
  double fraction = 0.0;   // shed fraction or fault location
};

/// Scenario-scripted event. Conditional (relay) events are generated by the
/// protection models at run time and never appear here.
struct ScheduledEvent {
  double t = 0.0;
  EventKind kind = EventKind::profile_milestone;
  int from_bus = 0;          // branch selector for fault/switch events
  int to_bus = 0;
  double location_fraction = 0.5;
  double fault_admittance = 1.0e4;
  bool close_branch = false;  // switch_branch action
  std::string device;         // scripted relay_trip target
  std::string label;          // milestone text
};

enum class IntegratorKind { rk4, trapezoidal };

struct SolverSettings {
  double step = 1.0e-3;             // s
  double horizon = 40.0;            // s
  IntegratorKind integrator = IntegratorKind::rk4;
  double event_tolerance = 1.0e-3;  // s
  int record_every = 10;            // committed steps per recorded sample

  std::string validate() const {
    if (step <= 0.0) return "solver step must be > 0";
    if (step > event_tolerance) return "solver step must be <= event_tolerance";
    if (horizon <= 0.0) return "horizon must be > 0";
    if (record_every < 1) return "record_every must be >= 1";
    return {};
  }
};

enum class RunStatus { completed, aborted_unstable };

/// Per-signal time series and the event log produced by one run.
/// Series are sampled every record_every committed steps; the pairwise
/// rotor-angle spread column carries the maximum over each recording
/// window so downstream stability metrics lose nothing to decimation.
struct SimulationResult {
  std::vector<double> time;

  std::vector<int> bus_ids;
  std::vector<std::vector<double>> bus_v_mag;    // [bus][sample]
  std::vector<std::vector<double>> bus_v_angle;  // rad

  std::vector<std::string> gen_ids;
  std::vector<int> gen_buses;
  std::vector<int> gen_areas;
  std::vector<double> gen_inertia;
  std::vector<std::vector<double>> gen_angle;    // rad
  std::vector<std::vector<double>> gen_speed;    // pu
  std::vector<double> gen_trip_time;             // <0 when still in service

  std::vector<std::string> inv_ids;
  std::vector<int> inv_buses;
  std::vector<double> inv_ratings;
  std::vector<std::vector<double>> inv_p;        // filtered, pu
  std::vector<std::vector<double>> inv_q;
  std::vector<std::vector<double>> inv_freq;     // internal frequency, pu

  /// Max in-service pairwise rotor-angle separation, deg; window maximum.
  std::vector<double> delta_spread_deg;

  std::vector<EventRecord> events;

  // run metadata
  std::string scenario_name;
  std::string config_hash;
  RunStatus status = RunStatus::completed;
  std::string abort_reason;
  double final_time = 0.0;
  double step = 0.0;
  double base_mva = 100.0;
  double max_power_residual = 0.0;   // worst committed-step balance error, pu
  double max_solver_residual = 0.0;  // worst linear-solve residual, pu
  /// Rating-weighted storage throughput bookkeeping for energy checks.
  std::vector<double> inv_energy_drawdown;   // pu-hours, per inverter
  std::vector<double> inv_power_integral;    // integral of filtered P dt, pu-s
};

}  // namespace gridfm
