// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gridfm/errors.hpp"

namespace gridfm {

int NetworkModel::add_bus(Bus bus) {
  if (has_bus(bus.id)) {
    throw ConfigError("duplicate bus id " + std::to_string(bus.id));
  }
  if (bus.area < 1) {
    throw ConfigError("bus " + std::to_string(bus.id) + ": area must be >= 1");
  }
  buses_.push_back(bus);
  max_bus_id_ = std::max(max_bus_id_, bus.id);
  rebuild_index();
  return static_cast<int>(buses_.size()) - 1;
}

int NetworkModel::add_branch(Branch br) {
  if (!has_bus(br.from_bus) || !has_bus(br.to_bus)) {
    throw ConfigError("branch " + std::to_string(br.id) + ": dangling endpoint (" +
                      std::to_string(br.from_bus) + "," + std::to_string(br.to_bus) + ")");
  }
  if (br.from_bus == br.to_bus) {
    throw ConfigError("branch " + std::to_string(br.id) + ": from and to bus coincide");
  }
  if (br.in_service && std::abs(br.series_z) == 0.0) {
    throw ConfigError("branch " + std::to_string(br.id) + ": zero series impedance");
  }
  for (const Branch& other : branches_) {
    if (other.id == br.id) {
      throw ConfigError("duplicate branch id " + std::to_string(br.id));
    }
  }
  branches_.push_back(br);
  return static_cast<int>(branches_.size()) - 1;
}

void NetworkModel::rebuild_index() {
  bus_index_.assign(static_cast<size_t>(max_bus_id_) + 1, -1);
  for (size_t k = 0; k < buses_.size(); ++k) {
    bus_index_[static_cast<size_t>(buses_[k].id)] = static_cast<int>(k);
  }
}

bool NetworkModel::has_bus(int bus_id) const {
  return bus_id >= 0 && bus_id <= max_bus_id_ &&
         bus_index_[static_cast<size_t>(bus_id)] >= 0;
}

int NetworkModel::node_of_bus(int bus_id) const {
  if (!has_bus(bus_id)) {
    throw ScenarioError("unknown bus id " + std::to_string(bus_id));
  }
  return bus_index_[static_cast<size_t>(bus_id)];
}

const Bus& NetworkModel::bus(int bus_id) const { return buses_[static_cast<size_t>(node_of_bus(bus_id))]; }
Bus& NetworkModel::bus(int bus_id) { return buses_[static_cast<size_t>(node_of_bus(bus_id))]; }

const Branch& NetworkModel::branch_by_id(int branch_id) const {
  for (const Branch& br : branches_) {
    if (br.id == branch_id) return br;
  }
  throw ScenarioError("unknown branch id " + std::to_string(branch_id));
}

Branch& NetworkModel::branch_by_id(int branch_id) {
  for (Branch& br : branches_) {
    if (br.id == branch_id) return br;
  }
  throw ScenarioError("unknown branch id " + std::to_string(branch_id));
}

int NetworkModel::find_branch(int from_bus, int to_bus) const {
  for (const Branch& br : branches_) {
    if ((br.from_bus == from_bus && br.to_bus == to_bus) ||
        (br.from_bus == to_bus && br.to_bus == from_bus)) {
      return br.id;
    }
  }
  return -1;
}

int NetworkModel::node_count() const {
  return bus_count() + (fault_needs_node() ? 1 : 0);
}

namespace {
bool is_interior(double f) { return f > 0.0 && f < 1.0; }
}  // namespace

bool NetworkModel::fault_needs_node() const {
  return fault_.has_value() && is_interior(fault_->location_fraction);
}

void NetworkModel::apply_fault(const FaultSpec& spec) {
  const Branch& br = branch_by_id(spec.branch_id);
  if (!br.in_service) {
    throw ScenarioError("fault requested on open branch " + std::to_string(spec.branch_id));
  }
  if (spec.location_fraction < 0.0 || spec.location_fraction > 1.0) {
    throw ScenarioError("fault location fraction outside [0,1]");
  }
  if (std::abs(spec.fault_admittance) == 0.0) {
    throw ScenarioError("fault admittance must be nonzero");
  }
  if (fault_) {
    throw ScenarioError("a fault is already active; clear it first");
  }
  fault_ = spec;
}

void NetworkModel::clear_fault() { fault_.reset(); }

std::optional<int> NetworkModel::fault_node() const {
  if (fault_needs_node()) return bus_count();
  return std::nullopt;
}

bool NetworkModel::switch_branch(int branch_id, bool close_branch) {
  Branch& br = branch_by_id(branch_id);
  if (br.in_service == close_branch) {
    return false;  // no-op
  }
  br.in_service = close_branch;
  if (!close_branch && fault_ && fault_->branch_id == branch_id) {
    fault_.reset();  // opening the faulted branch removes the transient node
  }
  return true;
}

AdmittanceMatrix NetworkModel::build_ybus() const {
  const int n = node_count();
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(buses_.size() + 4 * branches_.size() + 8);

  const int faulted_branch = fault_ ? fault_->branch_id : -1;
  const bool midline = fault_needs_node();
  const int fault_idx = bus_count();  // valid only when midline

  for (const Branch& br : branches_) {
    if (!br.in_service) continue;
    const int i = node_of_bus(br.from_bus);
    const int j = node_of_bus(br.to_bus);
    const Complex half_charge(0.0, br.charging_b / 2.0);

    if (br.id == faulted_branch && midline) {
      // Split the line at the fault point; charging stays at the ends.
      const double f = fault_->location_fraction;
      const Complex y1 = 1.0 / (br.series_z * f);
      const Complex y2 = 1.0 / (br.series_z * (1.0 - f));
      trip.emplace_back(i, i, y1 + half_charge);
      trip.emplace_back(fault_idx, fault_idx, y1 + y2);
      trip.emplace_back(j, j, y2 + half_charge);
      trip.emplace_back(i, fault_idx, -y1);
      trip.emplace_back(fault_idx, i, -y1);
      trip.emplace_back(j, fault_idx, -y2);
      trip.emplace_back(fault_idx, j, -y2);
      continue;
    }

    const Complex y = 1.0 / br.series_z;
    const double t = br.tap == 0.0 ? 1.0 : br.tap;
    trip.emplace_back(i, i, y / (t * t) + half_charge);
    trip.emplace_back(j, j, y + half_charge);
    trip.emplace_back(i, j, -y / t);
    trip.emplace_back(j, i, -y / t);
  }

  for (size_t k = 0; k < buses_.size(); ++k) {
    const Complex sh(buses_[k].shunt_g, buses_[k].shunt_b);
    if (sh != Complex{0.0, 0.0}) {
      trip.emplace_back(static_cast<int>(k), static_cast<int>(k), sh);
    }
  }

  if (fault_) {
    if (midline) {
      trip.emplace_back(fault_idx, fault_idx, fault_->fault_admittance);
    } else {
      // Endpoint fault degenerates to a bus shunt.
      const Branch& br = branch_by_id(fault_->branch_id);
      const int at = fault_->location_fraction <= 0.5 ? node_of_bus(br.from_bus)
                                                      : node_of_bus(br.to_bus);
      trip.emplace_back(at, at, fault_->fault_admittance);
    }
  }

  AdmittanceMatrix y(n, n);
  y.setFromTriplets(trip.begin(), trip.end());
  return y;
}

std::vector<std::vector<int>> NetworkModel::connected_components() const {
  const int n = node_count();
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  const bool midline = fault_needs_node();
  const int fault_idx = bus_count();
  for (const Branch& br : branches_) {
    if (!br.in_service) continue;
    int i = node_of_bus(br.from_bus);
    int j = node_of_bus(br.to_bus);
    if (midline && fault_ && br.id == fault_->branch_id) {
      adj[static_cast<size_t>(i)].push_back(fault_idx);
      adj[static_cast<size_t>(fault_idx)].push_back(i);
      adj[static_cast<size_t>(j)].push_back(fault_idx);
      adj[static_cast<size_t>(fault_idx)].push_back(j);
      continue;
    }
    adj[static_cast<size_t>(i)].push_back(j);
    adj[static_cast<size_t>(j)].push_back(i);
  }

  std::vector<std::vector<int>> comps;
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (int s = 0; s < n; ++s) {
    if (seen[static_cast<size_t>(s)]) continue;
    comps.emplace_back();
    std::vector<int> stack{s};
    seen[static_cast<size_t>(s)] = true;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comps.back().push_back(u);
      for (int v : adj[static_cast<size_t>(u)]) {
        if (!seen[static_cast<size_t>(v)]) {
          seen[static_cast<size_t>(v)] = true;
          stack.push_back(v);
        }
      }
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  return comps;
}

AdmittanceMatrix build_ybus(const NetworkModel& model) { return model.build_ybus(); }

ComplexVector solve_network(const AdmittanceMatrix& ybus, const ComplexVector& injections) {
  NetworkSolver solver;
  solver.factorize(ybus);
  return solver.solve(injections);
}

void NetworkSolver::factorize(const AdmittanceMatrix& ybus) {
  ybus_ = ybus;
  ybus_.makeCompressed();
  lu_.compute(ybus_);
  if (lu_.info() != Eigen::Success) {
    ready_ = false;
    throw SimulationError("network admittance matrix is singular");
  }
  ready_ = true;
}

ComplexVector NetworkSolver::solve(const ComplexVector& injections) const {
  if (!ready_) {
    throw SimulationError("network solver used before factorization");
  }
  ComplexVector v = lu_.solve(injections);
  if (!v.allFinite()) {
    throw SimulationError("network solve produced non-finite voltages");
  }
  return v;
}

double NetworkSolver::residual(const ComplexVector& v, const ComplexVector& injections) const {
  return (ybus_ * v - injections).cwiseAbs().maxCoeff();
}

}  // namespace gridfm
