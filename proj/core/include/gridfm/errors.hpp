// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridfm {

/// Invalid or inconsistent input data (network files, scenario configs).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
  ConfigError(const std::string& what, std::vector<std::string> violations)
      : std::runtime_error(what), violations_(std::move(violations)) {}

  /// Full list of schema violations collected during validation.
  const std::vector<std::string>& violations() const { return violations_; }

private:
  std::vector<std::string> violations_;
};

/// A structurally valid config requesting something the model cannot do
/// (fault on an open branch, unknown branch id, ...).
class ScenarioError : public std::runtime_error {
public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

/// Steady-state initialization failed (power flow did not converge).
class InitializationError : public std::runtime_error {
public:
  explicit InitializationError(const std::string& what) : std::runtime_error(what) {}
};

/// Unrecoverable numerical failure while a simulation is running.
class SimulationError : public std::runtime_error {
public:
  explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridfm
