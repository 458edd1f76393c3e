// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/power_flow.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "gridfm/errors.hpp"

namespace gridfm {

namespace {

double zip_factor_value(double vm, double a_z, double a_i, double a_p, double floor_v) {
  if (vm >= floor_v) return a_z * vm * vm + a_i * vm + a_p;
  const double ratio = floor_v <= 0.0 ? 0.0 : vm / floor_v;
  return a_z * vm * vm + (a_i * floor_v + a_p) * ratio * ratio;
}

double zip_factor_slope(double vm, double a_z, double a_i, double a_p, double floor_v) {
  if (vm >= floor_v) return 2.0 * a_z * vm + a_i;
  if (floor_v <= 0.0) return 2.0 * a_z * vm;
  return 2.0 * vm * (a_z + (a_i * floor_v + a_p) / (floor_v * floor_v));
}

}  // namespace

PowerFlowResult solve_power_flow(const NetworkModel& model, const std::vector<ZipLoad>& loads,
                                 const std::vector<LoadProfile>& profiles,
                                 const std::map<int, double>& scheduled_p,
                                 const PowerFlowOptions& options) {
  const int n = model.node_count();
  const int nb = model.bus_count();

  int slack = -1;
  for (int k = 0; k < nb; ++k) {
    if (model.buses()[static_cast<size_t>(k)].kind == BusKind::slack) {
      if (slack >= 0) throw InitializationError("more than one slack bus");
      slack = k;
    }
  }
  if (slack < 0) throw InitializationError("no slack bus defined");

  const AdmittanceMatrix ysp = model.build_ybus();
  const Eigen::MatrixXcd ydense = Eigen::MatrixXcd(ysp);

  // Per-node scheduled source power and load bookkeeping.
  Eigen::VectorXd p_sched = Eigen::VectorXd::Zero(n);
  for (const auto& [bus, p] : scheduled_p) p_sched[model.node_of_bus(bus)] += p;

  // Variable layout: angles for all non-slack nodes, then magnitudes for
  // pq nodes (the transient fault node, if present, behaves as pq).
  std::vector<int> ang_idx, mag_idx;
  for (int k = 0; k < n; ++k) {
    const bool is_bus = k < nb;
    const BusKind kind = is_bus ? model.buses()[static_cast<size_t>(k)].kind : BusKind::pq;
    if (k != slack) ang_idx.push_back(k);
    if (kind == BusKind::pq) mag_idx.push_back(k);
  }
  const int na = static_cast<int>(ang_idx.size());
  const int nm = static_cast<int>(mag_idx.size());

  Eigen::VectorXd vm(n), va = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    const bool is_bus = k < nb;
    const Bus* bus = is_bus ? &model.buses()[static_cast<size_t>(k)] : nullptr;
    vm[k] = (bus && bus->kind != BusKind::pq) ? bus->v_setpoint : 1.0;
  }

  PowerFlowResult result;
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    ComplexVector v(n);
    for (int k = 0; k < n; ++k) v[k] = std::polar(vm[k], va[k]);
    const ComplexVector s_net = v.array() * (ydense * v).array().conjugate();

    // Voltage-dependent load totals per node.
    Eigen::VectorXd p_load = Eigen::VectorXd::Zero(n), q_load = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dp_dv = Eigen::VectorXd::Zero(n), dq_dv = Eigen::VectorXd::Zero(n);
    for (const ZipLoad& load : loads) {
      if (load.tripped) continue;
      const int k = model.node_of_bus(load.bus);
      const LoadBasePower base = load_base_power(load, profiles, 0.0);
      const double keep = 1.0 - load.shed_fraction;
      p_load[k] += base.p * keep * zip_factor_value(vm[k], load.zp_z, load.zp_i, load.zp_p, load.voltage_floor);
      q_load[k] += base.q * keep * zip_factor_value(vm[k], load.zq_z, load.zq_i, load.zq_p, load.voltage_floor);
      dp_dv[k] += base.p * keep * zip_factor_slope(vm[k], load.zp_z, load.zp_i, load.zp_p, load.voltage_floor);
      dq_dv[k] += base.q * keep * zip_factor_slope(vm[k], load.zq_z, load.zq_i, load.zq_p, load.voltage_floor);
    }

    // Mismatches.
    Eigen::VectorXd f(na + nm);
    for (int a = 0; a < na; ++a) {
      const int k = ang_idx[static_cast<size_t>(a)];
      f[a] = p_sched[k] - p_load[k] - s_net[k].real();
    }
    for (int m = 0; m < nm; ++m) {
      const int k = mag_idx[static_cast<size_t>(m)];
      f[na + m] = -q_load[k] - s_net[k].imag();
    }
    const double mismatch = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
    result.max_mismatch = mismatch;
    result.iterations = iter;

    if (mismatch < options.tolerance) {
      result.voltage = v;
      for (int k = 0; k < nb; ++k) {
        const Bus& bus = model.buses()[static_cast<size_t>(k)];
        if (bus.kind == BusKind::slack) {
          result.bus_generation[bus.id] =
              Complex(s_net[k].real() + p_load[k], s_net[k].imag() + q_load[k]);
        } else if (bus.kind == BusKind::pv) {
          result.bus_generation[bus.id] = Complex(p_sched[k], s_net[k].imag() + q_load[k]);
        }
      }
      return result;
    }
    if (iter == options.max_iterations) break;

    // Jacobian of the residual w.r.t. [angles, magnitudes].
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na + nm, na + nm);
    const Eigen::MatrixXd g = ydense.real(), b = ydense.imag();

    auto dp_dtheta = [&](int i, int j) {
      if (i == j) return -s_net[i].imag() - b(i, i) * vm[i] * vm[i];
      const double th = va[i] - va[j];
      return vm[i] * vm[j] * (g(i, j) * std::sin(th) - b(i, j) * std::cos(th));
    };
    auto dp_dvm = [&](int i, int j) {
      if (i == j) return s_net[i].real() / vm[i] + g(i, i) * vm[i];
      const double th = va[i] - va[j];
      return vm[i] * (g(i, j) * std::cos(th) + b(i, j) * std::sin(th));
    };
    auto dq_dtheta = [&](int i, int j) {
      if (i == j) return s_net[i].real() - g(i, i) * vm[i] * vm[i];
      const double th = va[i] - va[j];
      return -vm[i] * vm[j] * (g(i, j) * std::cos(th) + b(i, j) * std::sin(th));
    };
    auto dq_dvm = [&](int i, int j) {
      if (i == j) return s_net[i].imag() / vm[i] - b(i, i) * vm[i];
      const double th = va[i] - va[j];
      return vm[i] * (g(i, j) * std::sin(th) - b(i, j) * std::cos(th));
    };

    for (int a = 0; a < na; ++a) {
      const int i = ang_idx[static_cast<size_t>(a)];
      for (int a2 = 0; a2 < na; ++a2) jac(a, a2) = dp_dtheta(i, ang_idx[static_cast<size_t>(a2)]);
      for (int m = 0; m < nm; ++m) {
        const int jn = mag_idx[static_cast<size_t>(m)];
        jac(a, na + m) = dp_dvm(i, jn) + (i == jn ? dp_dv[i] : 0.0);
      }
    }
    for (int m = 0; m < nm; ++m) {
      const int i = mag_idx[static_cast<size_t>(m)];
      for (int a2 = 0; a2 < na; ++a2) jac(na + m, a2) = dq_dtheta(i, ang_idx[static_cast<size_t>(a2)]);
      for (int m2 = 0; m2 < nm; ++m2) {
        const int jn = mag_idx[static_cast<size_t>(m2)];
        jac(na + m, na + m2) = dq_dvm(i, jn) + (i == jn ? dq_dv[i] : 0.0);
      }
    }

    const Eigen::VectorXd dx = jac.partialPivLu().solve(f);
    if (!dx.allFinite()) {
      throw InitializationError("power flow Jacobian is singular");
    }
    for (int a = 0; a < na; ++a) {
      va[ang_idx[static_cast<size_t>(a)]] += std::clamp(dx[a], -0.5, 0.5);
    }
    for (int m = 0; m < nm; ++m) {
      const int k = mag_idx[static_cast<size_t>(m)];
      vm[k] = std::max(0.2, vm[k] + std::clamp(dx[na + m], -0.2, 0.2));
    }
  }

  throw InitializationError("power flow did not converge after " +
                            std::to_string(options.max_iterations) +
                            " iterations (mismatch " + std::to_string(result.max_mismatch) + ")");
}

}  // namespace gridfm
