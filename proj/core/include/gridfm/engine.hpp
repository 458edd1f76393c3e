// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gridfm/coordination.hpp"
#include "gridfm/devices.hpp"
#include "gridfm/network.hpp"
#include "gridfm/power_flow.hpp"
#include "gridfm/protection.hpp"
#include "gridfm/scenario.hpp"
#include "gridfm/sim_types.hpp"

namespace gridfm {

/// Fixed-step transient simulation of one scenario: device ODEs integrated
/// against the algebraic network solve, with scheduled and conditional
/// (relay) events applied at committed step boundaries.
///
/// Deterministic by construction: identical configs produce identical
/// event logs and series.
class Simulation {
public:
  explicit Simulation(ScenarioConfig config);

  /// Loads data, solves the initial power flow and back-solves device
  /// states so the run starts at equilibrium. Called by run() if needed.
  void initialize();

  SimulationResult run();

  // Introspection (valid after initialize()).
  const NetworkData& network_data() const { return data_; }
  const std::vector<GeneratorState>& generators() const { return gens_; }
  const std::vector<GfmInverterState>& inverters() const { return invs_; }
  const std::vector<ZipLoad>& loads() const { return loads_; }
  const CommGraph& comm_graph() const { return graph_; }
  const ComplexVector& voltages() const { return v_; }
  double max_initial_derivative() const { return max_init_derivative_; }

private:
  ScenarioConfig config_;
  NetworkData data_;
  std::vector<GeneratorState> gens_;
  std::vector<GfmInverterState> invs_;
  std::vector<ZipLoad> loads_;
  std::vector<LoadProfile> profiles_;
  bool initialized_ = false;

  // network solution state
  NetworkSolver solver_;
  ComplexVector v_;
  bool need_refactor_ = true;

  // coordination
  CommGraph graph_;
  std::vector<ConsensusNodeState> consensus_;
  std::deque<std::vector<ConsensusNodeState>> consensus_history_;
  double next_round_ = 0.0;
  std::vector<Setpoints> effective_setpoints_;

  // protection
  std::vector<RelayTimerState> gen_v_relay_, gen_f_relay_;
  std::vector<RelayTimerState> inv_v_relay_, inv_f_relay_;
  std::vector<RelayTimerState> ldl_relay_;  // per LDL load (index into loads_)
  std::map<int, UflsBusState> ufls_state_;  // per load bus

  // measurements
  std::vector<double> freq_est_pu_;        // per node, low-passed angle derivative
  std::vector<double> vmag_avg_, freq_avg_;  // one-cycle moving averages per node
  std::vector<std::vector<double>> vmag_win_, freq_win_;
  size_t win_pos_ = 0;
  size_t win_len_ = 1;
  ComplexVector v_prev_;

  // integration workspace
  std::vector<double> state_, deriv_, stage_state_;
  std::vector<double> k1_, k2_, k3_, k4_;

  // scheduled events (resolved to branch ids, sorted)
  struct ResolvedEvent {
    ScheduledEvent ev;
    int branch_id = -1;
    bool fired = false;
  };
  std::vector<ResolvedEvent> schedule_;
  size_t next_event_ = 0;

  SimulationResult result_;
  double max_init_derivative_ = 0.0;
  std::vector<double> power_integral_;  // per inverter, pu-s
  std::vector<double> energy_start_;

  // state vector layout
  size_t gen_offset(size_t g) const { return 3 * g; }
  size_t inv_offset(size_t i) const { return 3 * gens_.size() + 4 * i; }
  size_t state_size() const { return 3 * gens_.size() + 4 * invs_.size(); }

  void build_devices();
  void build_comm_graph();
  void resolve_schedule();
  void init_steady_state();
  void init_measurements();
  void refactorize();
  void check_islands_sourced() const;

  void pack_state(std::vector<double>& x) const;
  void unpack_state(const std::vector<double>& x);

  /// Network fixed point at the given device state; v is warm-started.
  void solve_algebraic(double t, const std::vector<double>& x, ComplexVector& v);
  void eval_derivatives(double t, const std::vector<double>& x, const ComplexVector& v,
                        std::vector<double>& dx) const;
  void rhs(double t, const std::vector<double>& x, std::vector<double>& dx, ComplexVector& v);

  void step_rk4(double t, double h);
  void step_trapezoidal(double t, double h);

  void update_measurements(double dt);
  void run_consensus(double t);
  void apply_safety_filter();
  void evaluate_protection(double t, double dt, std::vector<EventRecord>& batch);
  void fire_scheduled(double t, std::vector<EventRecord>& batch);
  void trip_generator(size_t g, double t, TripCause cause, std::vector<EventRecord>& batch);
  void trip_inverter(size_t i, double t, TripCause cause, std::vector<EventRecord>& batch);
  void trip_load(size_t l, double t, TripCause cause, std::vector<EventRecord>& batch);

  void record_sample(double t, double window_spread_deg);
  double current_spread_deg() const;
  double power_balance_residual(double t) const;
};

/// Single-scenario entry point.
SimulationResult run_scenario(const ScenarioConfig& config);

/// Runs a set of scenarios, optionally on worker threads. Per-cell
/// failures are recorded in the result status; the batch continues.
std::vector<SimulationResult> run_batch(const std::vector<ScenarioConfig>& configs,
                                        bool concurrent = false);

}  // namespace gridfm
