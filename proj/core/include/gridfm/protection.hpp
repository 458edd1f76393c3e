// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace gridfm {

enum class RelayQuantity { voltage_pu, frequency_hz };
enum class ViolationSide { under, over };

struct CurveSegment {
  double threshold = 0.0;     // pu voltage or Hz
  double max_duration = 0.0;  // allowed time in violation, s; 0 trips immediately
  ViolationSide side = ViolationSide::under;
};

/// Duration-vs-depth ride-through characteristic. Segments accumulate
/// violation time independently; any segment exceeding its duration trips
/// the device. A curve is valid when deeper violations never allow longer
/// durations than shallower ones on the same side.
struct RideThroughCurve {
  RelayQuantity quantity = RelayQuantity::voltage_pu;
  std::vector<CurveSegment> segments;
  double hysteresis_frac = 0.02;  // recovery band, fraction of the threshold

  /// Empty string when consistent, else a description of the violation.
  std::string validate() const;
};

/// Per-device relay timers. Trips latch for the remainder of the run.
struct RelayTimerState {
  std::vector<double> elapsed;    // per segment, seconds in violation
  std::vector<char> violating;    // per segment hysteresis latch
  bool tripped = false;
  double trip_time = -1.0;
  int trip_segment = -1;

  void reset(size_t segment_count) {
    elapsed.assign(segment_count, 0.0);
    violating.assign(segment_count, 0);
    tripped = false;
    trip_time = -1.0;
    trip_segment = -1;
  }
};

struct RelayDecision {
  bool tripped_now = false;
  int segment = -1;
};

/// Advances all segment timers by dt against the (already filtered)
/// measurement. Timers accumulate while in violation, hold inside the
/// hysteresis band, and reset once the measurement recovers past it.
RelayDecision relay_step(const RideThroughCurve& curve, RelayTimerState& state,
                         double measurement, double t, double dt);

struct UflsStage {
  double threshold_hz = 59.1;
  double pickup_delay_s = 0.3;
  double shed_fraction = 0.07;  // of the remaining load at the bus
};

/// Staged under-frequency load shedding applied at every load bus.
/// Thresholds must be strictly decreasing across stages; each stage fires
/// at most once per bus per run.
struct UflsScheme {
  std::vector<UflsStage> stages;
  double voltage_inhibit_pu = 0.4;  // measurement blocked below this |V|

  std::string validate() const;
};

struct UflsBusState {
  std::vector<double> below_for;  // per stage, seconds under threshold
  std::vector<char> fired;

  void reset(size_t stage_count) {
    below_for.assign(stage_count, 0.0);
    fired.assign(stage_count, 0);
  }
};

struct ShedEvent {
  int stage = -1;
  double shed_fraction = 0.0;  // of the remaining load
};

/// Advances all stage pickup timers; returns the stages that fired this
/// step. The caller folds the fractions into the load's remaining-load
/// shed bookkeeping.
std::vector<ShedEvent> ufls_step(const UflsScheme& scheme, UflsBusState& state,
                                 double frequency_hz, double voltage_pu, double dt);

/// Fold a new stage shedding into a cumulative remaining-load fraction.
inline double combine_shed(double current_fraction, double stage_fraction) {
  return 1.0 - (1.0 - current_fraction) * (1.0 - stage_fraction);
}

/// Why a device was removed from service.
enum class TripCause {
  scripted,
  lvrt,
  over_voltage,
  under_voltage,
  over_frequency,
  under_frequency,
  ufls,
};

const char* to_string(TripCause cause);
std::optional<TripCause> trip_cause_from_string(const std::string& name);

}  // namespace gridfm
