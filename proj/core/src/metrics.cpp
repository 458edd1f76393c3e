// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/metrics.hpp"

#include "gridfm/protection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace gridfm {

namespace {
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
}

std::vector<int> areas_in(const SimulationResult& result) {
  std::set<int> areas(result.gen_areas.begin(), result.gen_areas.end());
  return {areas.begin(), areas.end()};
}

AreaAggregate compute_coi(const SimulationResult& result, int area) {
  AreaAggregate agg;
  agg.area = area;
  agg.time = result.time;

  std::vector<size_t> members;
  for (size_t g = 0; g < result.gen_areas.size(); ++g) {
    if (result.gen_areas[g] == area) members.push_back(g);
  }

  const size_t n = result.time.size();
  agg.coi_angle_deg.assign(n, 0.0);
  agg.coi_freq_hz.assign(n, 0.0);
  agg.defined.assign(n, 0);

  for (size_t k = 0; k < n; ++k) {
    const double t = result.time[k];
    double h_sum = 0.0, angle = 0.0, speed = 0.0;
    for (size_t g : members) {
      const double trip = result.gen_trip_time[g];
      if (trip >= 0.0 && t >= trip) continue;  // weights renormalize after trips
      const double h = result.gen_inertia[g];
      h_sum += h;
      angle += h * result.gen_angle[g][k];
      speed += h * result.gen_speed[g][k];
    }
    if (h_sum > 0.0) {
      agg.defined[k] = 1;
      agg.coi_angle_deg[k] = angle / h_sum * kRadToDeg;
      agg.coi_freq_hz[k] = speed / h_sum * 60.0;
    }
  }
  return agg;
}

double tsi_from_delta_max(double delta_max_deg) {
  return (360.0 - delta_max_deg) / (360.0 + delta_max_deg);
}

double max_angle_spread(const SimulationResult& result) {
  double spread = 0.0;
  for (double d : result.delta_spread_deg) spread = std::max(spread, d);
  return spread;
}

double compute_tsi(const SimulationResult& result) {
  return tsi_from_delta_max(max_angle_spread(result));
}

StabilityReport aggregate_losses(const SimulationResult& result) {
  StabilityReport report;
  std::set<int> ldl_buses;

  for (const EventRecord& ev : result.events) {
    if (ev.kind == EventKind::relay_trip && ev.device.rfind("gen:", 0) == 0) {
      report.gen_loss_gw += ev.power_mw / 1000.0;
    } else if (ev.kind == EventKind::ufls_shed) {
      report.ufls_loss_gw += ev.power_mw / 1000.0;
    } else if (ev.kind == EventKind::relay_trip && ev.device.rfind("ldl:", 0) == 0 &&
               ev.detail == to_string(TripCause::lvrt)) {
      // device label is "ldl:LDL<bus>"
      const std::string tail = ev.device.substr(ev.device.rfind("LDL") + 3);
      ldl_buses.insert(std::stoi(tail));
    }
  }

  report.ldl_tripped_buses.assign(ldl_buses.begin(), ldl_buses.end());
  report.delta_max_deg = max_angle_spread(result);
  report.tsi = tsi_from_delta_max(report.delta_max_deg);
  report.stable = report.tsi > 0.0 && result.status == RunStatus::completed;
  return report;
}

double peak_to_peak(const std::vector<double>& time, const std::vector<double>& series,
                    double t_begin, double t_end) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (size_t k = 0; k < time.size() && k < series.size(); ++k) {
    if (time[k] < t_begin || time[k] > t_end) continue;
    if (!any) {
      lo = hi = series[k];
      any = true;
    } else {
      lo = std::min(lo, series[k]);
      hi = std::max(hi, series[k]);
    }
  }
  return any ? hi - lo : 0.0;
}

std::string format_comparison_table(const std::vector<ComparisonCell>& cells) {
  // Rows keep first-seen order; columns likewise.
  std::vector<std::string> rows, cols;
  for (const ComparisonCell& c : cells) {
    if (std::find(rows.begin(), rows.end(), c.row_label) == rows.end()) rows.push_back(c.row_label);
    if (std::find(cols.begin(), cols.end(), c.column_label) == cols.end()) cols.push_back(c.column_label);
  }

  auto cell_text = [&](const ComparisonCell& c) -> std::string {
    if (c.not_applicable) return "--";
    if (c.failed) return "run failed";
    char buf[160];
    std::string ldls;
    for (size_t k = 0; k < c.report.ldl_tripped_buses.size(); ++k) {
      if (k) ldls += ",";
      ldls += std::to_string(c.report.ldl_tripped_buses[k]);
    }
    if (ldls.empty()) ldls = "-";
    std::snprintf(buf, sizeof(buf), "TSI %6.2f | gen %5.1f GW | ufls %5.1f GW | ldl %s",
                  c.report.tsi, c.report.gen_loss_gw, c.report.ufls_loss_gw, ldls.c_str());
    return buf;
  };

  size_t first_col = 14, width = 48;
  for (const std::string& r : rows) first_col = std::max(first_col, r.size() + 2);

  std::ostringstream out;
  out << std::string(first_col, ' ');
  for (const std::string& c : cols) {
    out << "| " << c << std::string(c.size() + 2 < width ? width - c.size() - 2 : 1, ' ');
  }
  out << "\n" << std::string(first_col + cols.size() * (width + 1), '-') << "\n";

  for (const std::string& r : rows) {
    out << r << std::string(first_col - r.size(), ' ');
    for (const std::string& c : cols) {
      std::string text = "--";
      for (const ComparisonCell& cell : cells) {
        if (cell.row_label == r && cell.column_label == c) text = cell_text(cell);
      }
      out << "| " << text << std::string(text.size() + 2 < width ? width - text.size() - 2 : 1, ' ');
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace gridfm
