// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridfm/coordination.hpp"
#include "gridfm/devices.hpp"
#include "gridfm/network.hpp"
#include "gridfm/protection.hpp"
#include "gridfm/sim_types.hpp"

namespace gridfm {

/// Everything parsed from a network data file: the static grid plus the
/// machine and load records that give it a steady state.
struct NetworkData {
  double base_mva = 100.0;
  double base_freq_hz = 60.0;
  NetworkModel model;
  std::vector<GeneratorState> generators;  // dispatch converted to pu
  std::vector<ZipLoad> loads;              // static loads, pu

  /// Buses carrying nonzero static load, ordered by descending load size
  /// (ties by ascending id). This ordering seeds deterministic
  /// penetration-based storage placement.
  std::vector<int> load_buses_by_size() const;
};

/// Parses the sectioned text format documented in docs/network_format.md.
NetworkData parse_network_file(const std::string& path);

/// Reads a (time_s, p_pu) CSV profile.
LoadProfile read_profile_csv(const std::string& path, const std::string& id,
                             LoadProfile::Interp interp);

enum class StorageDeployment { none, collocated, embedded };

const char* to_string(StorageDeployment d);
std::optional<StorageDeployment> storage_deployment_from_string(const std::string& name);

struct StorageConfig {
  StorageDeployment deployment = StorageDeployment::none;
  std::vector<int> buses;                  // explicit embedded placement
  std::optional<double> penetration_pct;   // alternative embedded placement
  double fleet_rating = 18.4;              // cumulative, pu
  std::map<int, double> rating_overrides;  // bus -> rating, pu

  double active_droop = 0.05;
  double reactive_droop = 0.05;
  double filter_tau = 0.02;
  double coupling_r = 0.01;
  double coupling_x = 0.15;
  double overload_factor = 1.2;
  double capacity_hours = 10.0;
};

struct CoordinationConfig {
  CoordinationMode mode = CoordinationMode::none;
  SafetyLimits safety;
  ConsensusGains gains;
  double update_period = 0.1;
  double latency = 0.0;
  /// Explicit communication edges by bus pair; empty selects the default
  /// electrical-adjacency graph.
  std::vector<std::array<int, 2>> edges;
  int electrical_neighbors = 3;  // nearest-neighbor count for the default graph
};

struct ProtectionConfig {
  bool enabled = true;
  RideThroughCurve ldl_lvrt;
  RideThroughCurve gen_voltage;
  RideThroughCurve gen_frequency;
  RideThroughCurve gfm_voltage;
  RideThroughCurve gfm_frequency;
  UflsScheme ufls;
};

/// Shipped default curves (documented engineering substitutions for the
/// cited interconnection standards).
ProtectionConfig default_protection();

struct LdlConfig {
  int bus = 0;
  std::string profile_id;
  double zip_z = 0.1, zip_i = 0.1, zip_p = 0.8;
  double q_to_p_ratio = 0.0;  // unity power factor by default
};

struct LoadDefaults {
  double zip_z = 0.3, zip_i = 0.3, zip_p = 0.4;
  double zq_z = 0.4, zq_i = 0.3, zq_p = 0.3;
  double voltage_floor = 0.5;
};

struct ProfileRef {
  std::string id;
  std::string file;  // resolved path
  LoadProfile::Interp interp = LoadProfile::Interp::linear;
};

struct ScenarioConfig {
  int schema_version = 1;
  std::string name;
  std::string network_path;  // resolved
  SolverSettings solver;
  std::vector<ProfileRef> profile_refs;
  std::vector<LdlConfig> ldls;
  StorageConfig storage;
  CoordinationConfig coordination;
  ProtectionConfig protection = default_protection();
  std::vector<ScheduledEvent> events;
  LoadDefaults load_defaults;
};

/// Loads and validates a scenario file. All schema violations are
/// collected and reported together in the thrown ConfigError.
ScenarioConfig load_scenario(const std::string& path);

/// Parses a scenario from JSON text; base_dir resolves relative paths.
ScenarioConfig parse_scenario_text(const std::string& text, const std::string& base_dir);

/// Canonical JSON serialization; load_scenario of the output reproduces
/// the config exactly.
std::string serialize_scenario(const ScenarioConfig& config);

/// FNV-1a hash of the canonical serialization, for result provenance.
std::string scenario_hash(const ScenarioConfig& config);

struct DeploymentPlan {
  struct Unit {
    int bus = 0;
    double rating = 0.0;  // pu
  };
  std::vector<Unit> units;

  double total_rating() const {
    double s = 0.0;
    for (const Unit& u : units) s += u.rating;
    return s;
  }
};

/// Resolves the storage deployment onto concrete (bus, rating) pairs.
/// Collocated splits the fleet across the LDL buses; embedded uses the
/// explicit list or a deterministic penetration-based selection of load
/// buses. The cumulative fleet rating is preserved.
DeploymentPlan resolve_deployment(const ScenarioConfig& config, const NetworkData& network);

}  // namespace gridfm
