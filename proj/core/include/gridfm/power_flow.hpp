// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "gridfm/devices.hpp"
#include "gridfm/network.hpp"

namespace gridfm {

struct PowerFlowOptions {
  double tolerance = 1.0e-8;  // max power mismatch, pu
  int max_iterations = 30;
};

struct PowerFlowResult {
  ComplexVector voltage;                 // one entry per network node
  std::map<int, Complex> bus_generation;  // solved source injection per bus
  double max_mismatch = 0.0;
  int iterations = 0;
};

/// Newton-Raphson power flow in polar coordinates with voltage-dependent
/// (ZIP) loads folded into the mismatch equations. Bus roles come from the
/// model: one slack bus fixes angle and magnitude, pv buses hold net P and
/// |V|, pq buses hold net P and Q.
///
/// scheduled_p maps bus id to the net scheduled source injection (pu) for
/// pv buses. Loads are evaluated at their t = 0 base power.
///
/// Throws InitializationError when the iteration fails to reach tolerance.
PowerFlowResult solve_power_flow(const NetworkModel& model, const std::vector<ZipLoad>& loads,
                                 const std::vector<LoadProfile>& profiles,
                                 const std::map<int, double>& scheduled_p,
                                 const PowerFlowOptions& options = {});

}  // namespace gridfm
