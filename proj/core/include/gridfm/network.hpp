// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace gridfm {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;

/// Sparse complex nodal admittance matrix, per-unit on the system base.
using AdmittanceMatrix = Eigen::SparseMatrix<Complex>;

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;   // external id, unique
  int area = 1;
  double base_kv = 0.0;
  BusKind kind = BusKind::pq;
  double v_setpoint = 1.0;  // used for slack/pv buses
  double shunt_g = 0.0;     // fixed bus shunt, pu
  double shunt_b = 0.0;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  Complex series_z{0.0, 0.0};  // pu
  double charging_b = 0.0;     // total line charging susceptance, pu
  double tap = 1.0;            // off-nominal turns ratio on the from side
  bool in_service = true;
};

struct FaultSpec {
  int branch_id = 0;
  double location_fraction = 0.5;          // 0..1 from the from-bus
  Complex fault_admittance{1.0e4, 0.0};    // large shunt for a bolted fault
};

/// Static network description plus the current switching/fault state.
///
/// Bus voltages and device dynamics live elsewhere; this class owns
/// everything needed to assemble the admittance matrix. A mid-line fault
/// introduces one transient node appended after the bus nodes.
class NetworkModel {
public:
  int add_bus(Bus bus);        // returns dense node index
  int add_branch(Branch br);   // returns internal branch slot

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }

  bool has_bus(int bus_id) const;
  int node_of_bus(int bus_id) const;        // dense node index, throws ScenarioError
  const Bus& bus(int bus_id) const;
  Bus& bus(int bus_id);
  const Branch& branch_by_id(int branch_id) const;
  Branch& branch_by_id(int branch_id);
  int find_branch(int from_bus, int to_bus) const;  // branch id or -1

  /// Node count of the admittance matrix: buses plus the transient fault
  /// node while a mid-line fault is active.
  int node_count() const;
  int bus_count() const { return static_cast<int>(buses_.size()); }

  void apply_fault(const FaultSpec& spec);
  void clear_fault();
  bool fault_active() const { return fault_.has_value(); }
  std::optional<int> fault_node() const;
  const FaultSpec* active_fault() const { return fault_ ? &*fault_ : nullptr; }

  /// Updates branch status. Opening a faulted branch removes the transient
  /// fault node with it. Returns false if the branch was already in the
  /// requested state (callers may log the no-op).
  bool switch_branch(int branch_id, bool close_branch);

  /// Passive-network admittance matrix (lines, taps, charging, bus shunts,
  /// fault shunt). Device admittances are not included.
  AdmittanceMatrix build_ybus() const;

  /// Connected components of the in-service network graph, as node lists.
  std::vector<std::vector<int>> connected_components() const;

private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::optional<FaultSpec> fault_;
  std::vector<int> bus_index_;  // sparse id -> dense index lookup
  int max_bus_id_ = 0;

  void rebuild_index();
  bool fault_needs_node() const;
};

/// build_ybus as a free operation, for callers holding only the model.
AdmittanceMatrix build_ybus(const NetworkModel& model);

/// Direct solution of Y v = i. Factorizes on every call; intended for
/// small systems and tests. Throws SimulationError on a singular matrix.
ComplexVector solve_network(const AdmittanceMatrix& ybus, const ComplexVector& injections);

/// Cached-factorization solver used by the simulation loop. The matrix is
/// refactorized only when the topology (or a folded device admittance)
/// changes; solves between events reuse the factors.
class NetworkSolver {
public:
  void factorize(const AdmittanceMatrix& ybus);
  bool ready() const { return ready_; }
  const AdmittanceMatrix& matrix() const { return ybus_; }

  ComplexVector solve(const ComplexVector& injections) const;

  /// Max-norm of Y v - i, the acceptance residual for a solution.
  double residual(const ComplexVector& v, const ComplexVector& injections) const;

private:
  AdmittanceMatrix ybus_;
  Eigen::SparseLU<AdmittanceMatrix> lu_;
  bool ready_ = false;
};

}  // namespace gridfm
