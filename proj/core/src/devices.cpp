// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/devices.hpp"

#include <algorithm>
#include <cmath>

#include "gridfm/errors.hpp"

namespace gridfm {

double generator_electrical_power(const GeneratorState& gen, Complex terminal_voltage) {
  const Complex emf = gen.internal_emf();
  const Complex current = (emf - terminal_voltage) / Complex(0.0, gen.xdp);
  return (emf * std::conj(current)).real();
}

GeneratorDerivatives generator_derivatives(const GeneratorState& gen, Complex terminal_voltage) {
  GeneratorDerivatives d;
  if (gen.tripped) return d;

  const double speed_dev = gen.speed - 1.0;
  const double pe = generator_electrical_power(gen, terminal_voltage);
  const double pm_eff = gen.mech_power + gen.gov_response;

  d.d_angle = kOmegaSyncRadS * speed_dev;
  d.d_speed = (pm_eff - pe - gen.damping_d * speed_dev) / (2.0 * gen.inertia_h);

  if (gen.gov_droop_r > 0.0 && gen.gov_time_const > 0.0) {
    const double target = (1.0 - gen.speed) / gen.gov_droop_r;
    const double limit = gen.gov_headroom * std::abs(gen.mech_power);
    const double clamped = std::clamp(target, -limit, limit);
    d.d_gov = (clamped - gen.gov_response) / gen.gov_time_const;
  }
  return d;
}

double gfm_speed_command(const GfmInverterState& inv, double p_star) {
  return inv.freq_setpoint + inv.secondary_freq -
         inv.active_droop * (inv.filtered_p - p_star) / inv.rating;
}

double gfm_voltage_command(const GfmInverterState& inv, double q_star) {
  return inv.volt_setpoint + inv.secondary_volt -
         inv.reactive_droop * (inv.filtered_q - q_star) / inv.rating;
}

GfmDerivatives gfm_derivatives(const GfmInverterState& inv, double measured_p,
                               double measured_q, double p_star, double q_star) {
  GfmDerivatives d;
  if (inv.tripped) return d;
  (void)q_star;  // enters the algebraic voltage command, not the ODEs

  d.d_filtered_p = (measured_p - inv.filtered_p) / inv.filter_tau;
  d.d_filtered_q = (measured_q - inv.filtered_q) / inv.filter_tau;
  d.d_angle = kOmegaSyncRadS * (gfm_speed_command(inv, p_star) - 1.0);
  d.d_energy = -inv.filtered_p / 3600.0;  // pu-hours
  return d;
}

GfmDerivatives gfm_derivatives(const GfmInverterState& inv, Complex /*terminal_voltage*/,
                               double measured_p, double measured_q) {
  return gfm_derivatives(inv, measured_p, measured_q, inv.p_setpoint, inv.q_setpoint);
}

double sample_profile(const LoadProfile& profile, double t) {
  if (profile.time_s.empty()) {
    throw ConfigError("profile '" + profile.id + "' has no samples");
  }
  const auto& ts = profile.time_s;
  const auto& ps = profile.p_pu;
  if (t <= ts.front()) return ps.front();
  if (t >= ts.back()) return ps.back();

  // first sample strictly after t
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const size_t hi = static_cast<size_t>(it - ts.begin());
  const size_t lo = hi - 1;
  if (profile.interp == LoadProfile::Interp::hold) {
    return ps[lo];
  }
  const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
  return ps[lo] + w * (ps[hi] - ps[lo]);
}

LoadBasePower load_base_power(const ZipLoad& load, const std::vector<LoadProfile>& profiles,
                              double t) {
  LoadBasePower base{load.p_nominal, load.q_nominal};
  if (load.profile_index >= 0) {
    base.p = sample_profile(profiles[static_cast<size_t>(load.profile_index)], t);
    base.q = load.q_to_p_ratio * base.p;
  }
  return base;
}

namespace {

// ZIP polynomial with the constant-I and constant-P parts converted to
// constant-Z below the floor voltage. Continuous at the floor and
// proportional to |V|^2 as |V| -> 0.
double zip_factor(double vm, double a_z, double a_i, double a_p, double floor_v) {
  if (vm >= floor_v) {
    return a_z * vm * vm + a_i * vm + a_p;
  }
  const double ratio = floor_v <= 0.0 ? 0.0 : vm / floor_v;
  return a_z * vm * vm + (a_i * floor_v + a_p) * ratio * ratio;
}

}  // namespace

Complex zip_power(const ZipLoad& load, Complex voltage, double p_base, double q_base) {
  if (load.tripped) return {0.0, 0.0};
  const double vm = std::abs(voltage);
  const double keep = 1.0 - load.shed_fraction;
  const double p = p_base * keep * zip_factor(vm, load.zp_z, load.zp_i, load.zp_p, load.voltage_floor);
  const double q = q_base * keep * zip_factor(vm, load.zq_z, load.zq_i, load.zq_p, load.voltage_floor);
  return {p, q};
}

Complex zip_injection(const ZipLoad& load, Complex voltage, double p_base, double q_base) {
  const double vm = std::abs(voltage);
  if (load.tripped || vm == 0.0) return {0.0, 0.0};
  const Complex s = zip_power(load, voltage, p_base, q_base);
  // Load draws S, so it injects -S; I = conj(S/V) for the drawn current.
  return -std::conj(s / voltage);
}

}  // namespace gridfm
