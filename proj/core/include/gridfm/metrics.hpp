// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gridfm/sim_types.hpp"

namespace gridfm {

/// Inertia-weighted aggregates for one area. Samples after the last
/// in-service generator of the area trips are marked undefined.
struct AreaAggregate {
  int area = 0;
  std::vector<double> time;
  std::vector<double> coi_angle_deg;
  std::vector<double> coi_freq_hz;
  std::vector<char> defined;
};

AreaAggregate compute_coi(const SimulationResult& result, int area);

/// Areas present in the result, ascending.
std::vector<int> areas_in(const SimulationResult& result);

/// Transient stability index from the maximum angular excursion (deg).
double tsi_from_delta_max(double delta_max_deg);

/// Maximum pairwise rotor-angle separation observed across the run (deg).
double max_angle_spread(const SimulationResult& result);

/// TSI over the recorded spread series.
double compute_tsi(const SimulationResult& result);

struct StabilityReport {
  double tsi = 1.0;
  double delta_max_deg = 0.0;
  double gen_loss_gw = 0.0;
  double ufls_loss_gw = 0.0;
  std::vector<int> ldl_tripped_buses;  // sorted
  bool stable = true;                  // TSI > 0 and the run completed
};

/// Pre-trip generation lost, UFLS-shed load and LVRT-tripped LDL buses,
/// all recovered from the event log.
StabilityReport aggregate_losses(const SimulationResult& result);

/// Peak-to-peak excursion of a series restricted to [t_begin, t_end].
double peak_to_peak(const std::vector<double>& time, const std::vector<double>& series,
                    double t_begin, double t_end);

/// Formatted comparison table (one row per scenario) mirroring the
/// deployment-by-coordination summary layout.
struct ComparisonCell {
  std::string row_label;
  std::string column_label;
  bool not_applicable = false;
  bool failed = false;
  StabilityReport report;
};

std::string format_comparison_table(const std::vector<ComparisonCell>& cells);

}  // namespace gridfm
