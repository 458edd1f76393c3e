// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/protection.hpp"

#include <cmath>

namespace gridfm {

namespace {

bool violated(const CurveSegment& seg, double m) {
  return seg.side == ViolationSide::under ? m < seg.threshold : m > seg.threshold;
}

bool recovered(const CurveSegment& seg, double m, double hyst_frac) {
  const double band = std::abs(seg.threshold) * hyst_frac;
  return seg.side == ViolationSide::under ? m >= seg.threshold + band
                                          : m <= seg.threshold - band;
}

}  // namespace

std::string RideThroughCurve::validate() const {
  for (const CurveSegment& seg : segments) {
    if (seg.max_duration < 0.0) return "segment max_duration must be >= 0";
  }
  // Deeper thresholds must not permit longer durations than shallower ones.
  for (size_t a = 0; a < segments.size(); ++a) {
    for (size_t b = 0; b < segments.size(); ++b) {
      if (segments[a].side != segments[b].side) continue;
      const bool deeper = segments[a].side == ViolationSide::under
                              ? segments[a].threshold < segments[b].threshold
                              : segments[a].threshold > segments[b].threshold;
      if (deeper && segments[a].max_duration > segments[b].max_duration) {
        return "deeper segment allows a longer duration than a shallower one";
      }
    }
  }
  return {};
}

RelayDecision relay_step(const RideThroughCurve& curve, RelayTimerState& state,
                         double measurement, double t, double dt) {
  RelayDecision decision;
  if (state.elapsed.size() != curve.segments.size()) {
    state.reset(curve.segments.size());
  }
  if (state.tripped) return decision;  // trips latch

  for (size_t k = 0; k < curve.segments.size(); ++k) {
    const CurveSegment& seg = curve.segments[k];
    if (violated(seg, measurement)) {
      state.violating[k] = 1;
      state.elapsed[k] += dt;
    } else if (state.violating[k] && recovered(seg, measurement, curve.hysteresis_frac)) {
      state.violating[k] = 0;
      state.elapsed[k] = 0.0;
    }
    // Inside the hysteresis band the timer holds its value.

    if (state.violating[k] && state.elapsed[k] >= seg.max_duration - 1e-12) {
      state.tripped = true;
      state.trip_time = t;
      state.trip_segment = static_cast<int>(k);
      decision.tripped_now = true;
      decision.segment = static_cast<int>(k);
      return decision;
    }
  }
  return decision;
}

std::string UflsScheme::validate() const {
  for (size_t k = 0; k + 1 < stages.size(); ++k) {
    if (stages[k + 1].threshold_hz >= stages[k].threshold_hz) {
      return "UFLS stage thresholds must be strictly decreasing";
    }
  }
  for (const UflsStage& st : stages) {
    if (st.shed_fraction <= 0.0 || st.shed_fraction > 1.0) {
      return "UFLS shed fraction must be in (0, 1]";
    }
    if (st.pickup_delay_s < 0.0) return "UFLS pickup delay must be >= 0";
  }
  return {};
}

std::vector<ShedEvent> ufls_step(const UflsScheme& scheme, UflsBusState& state,
                                 double frequency_hz, double voltage_pu, double dt) {
  std::vector<ShedEvent> fired;
  if (state.below_for.size() != scheme.stages.size()) {
    state.reset(scheme.stages.size());
  }
  if (voltage_pu < scheme.voltage_inhibit_pu) {
    // Frequency estimates are unreliable at collapsed voltage; hold timers.
    return fired;
  }
  for (size_t k = 0; k < scheme.stages.size(); ++k) {
    if (state.fired[k]) continue;
    const UflsStage& st = scheme.stages[k];
    if (frequency_hz < st.threshold_hz) {
      state.below_for[k] += dt;
      if (state.below_for[k] >= st.pickup_delay_s - 1e-12) {
        state.fired[k] = 1;
        fired.push_back({static_cast<int>(k), st.shed_fraction});
      }
    } else {
      state.below_for[k] = 0.0;
    }
  }
  return fired;
}

const char* to_string(TripCause cause) {
  switch (cause) {
    case TripCause::scripted: return "scripted";
    case TripCause::lvrt: return "lvrt";
    case TripCause::over_voltage: return "over_voltage";
    case TripCause::under_voltage: return "under_voltage";
    case TripCause::over_frequency: return "over_frequency";
    case TripCause::under_frequency: return "under_frequency";
    case TripCause::ufls: return "ufls";
  }
  return "unknown";
}

std::optional<TripCause> trip_cause_from_string(const std::string& name) {
  for (TripCause c : {TripCause::scripted, TripCause::lvrt, TripCause::over_voltage,
                      TripCause::under_voltage, TripCause::over_frequency,
                      TripCause::under_frequency, TripCause::ufls}) {
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

}  // namespace gridfm
