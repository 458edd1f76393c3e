// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "gridfm/metrics.hpp"
#include "gridfm/sim_types.hpp"

namespace gridfm {

enum class SeriesFormat { csv, json };

/// Guards an output directory against concurrent writers for the lifetime
/// of the object (lock file, removed on destruction).
class OutputDirLock {
public:
  explicit OutputDirLock(const std::string& dir);
  ~OutputDirLock();
  OutputDirLock(const OutputDirLock&) = delete;
  OutputDirLock& operator=(const OutputDirLock&) = delete;

private:
  std::string lock_path_;
};

void write_series_csv(const std::string& path, const SimulationResult& result);
void write_series_json(const std::string& path, const SimulationResult& result);

/// events.json: a chronological array of {t, kind, device, payload}.
void write_events_json(const std::string& path, const SimulationResult& result);

/// report.json: StabilityReport fields plus a metadata block carrying run
/// provenance and the device constants needed to recompute metrics.
void write_report_json(const std::string& path, const SimulationResult& result,
                       const StabilityReport& report);

/// Writes series + events + report into dir (creating it), guarded by the
/// directory lock. Returns the report it computed.
StabilityReport write_result_dir(const std::string& dir, const SimulationResult& result,
                                 SeriesFormat format = SeriesFormat::csv);

/// Reloads a persisted result (series.csv or series.json, events.json,
/// report.json) well enough to recompute every metric.
SimulationResult read_result_dir(const std::string& dir);

}  // namespace gridfm
