// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <string>
#include <vector>

#include "gridfm/network.hpp"

namespace gridfm {

constexpr double kNominalFreqHz = 60.0;
constexpr double kOmegaSyncRadS = 2.0 * 3.14159265358979323846 * kNominalFreqHz;

/// Classical swing-model generator with a first-order governor lag.
/// All quantities per-unit on the system base; inertia and time constants
/// in seconds.
struct GeneratorState {
  std::string id;
  int bus = 0;

  double inertia_h = 5.0;       // s
  double damping_d = 0.0;       // pu torque per pu speed deviation
  double xdp = 0.1;             // transient reactance, pu
  double gov_droop_r = 0.05;    // pu frequency per pu power; <= 0 disables the governor
  double gov_time_const = 1.0;  // s
  double gov_headroom = 0.10;   // response clamp, fraction of dispatched power

  double emf_mag = 1.0;         // internal EMF magnitude, set at initialization
  double mech_power = 0.0;      // dispatched mechanical power

  // dynamic states
  double rotor_angle = 0.0;     // rad
  double speed = 1.0;           // pu
  double gov_response = 0.0;    // pu, first-order lag state

  bool tripped = false;

  Complex internal_emf() const {
    return std::polar(emf_mag, rotor_angle);
  }
  Complex norton_admittance() const { return 1.0 / Complex(0.0, xdp); }
};

struct GeneratorDerivatives {
  double d_angle = 0.0;
  double d_speed = 0.0;
  double d_gov = 0.0;
};

/// Swing + governor derivatives at the given terminal voltage.
/// d(angle)/dt = w_s (w - 1); 2H d(w)/dt = Pm_eff - Pe - D (w - 1).
GeneratorDerivatives generator_derivatives(const GeneratorState& gen, Complex terminal_voltage);

/// Electrical power delivered by the internal source at this voltage.
double generator_electrical_power(const GeneratorState& gen, Complex terminal_voltage);

/// Droop-controlled grid-forming inverter behind a coupling impedance.
/// Droop gains act on rating-normalized power so equally-drooped units
/// share load in proportion to their ratings.
struct GfmInverterState {
  std::string id;
  int bus = 0;

  double rating = 1.0;           // S, pu system base
  double active_droop = 0.05;    // pu freq per pu power (rating base)
  double reactive_droop = 0.05;  // pu volt per pu power (rating base)
  double filter_tau = 0.02;      // power measurement low-pass, s
  double coupling_r = 0.01;      // rating base
  double coupling_x = 0.15;      // rating base
  double overload_factor = 1.2;  // current/power clamp, multiple of rating
  double capacity_hours = 10.0;  // energy capacity, hours at rated power

  double freq_setpoint = 1.0;    // w*, pu
  double volt_setpoint = 1.0;    // V*, pu
  double p_setpoint = 0.0;       // P*, pu system base
  double q_setpoint = 0.0;       // Q*, pu system base

  // dynamic states
  double angle = 0.0;            // internal voltage angle, rad
  double filtered_p = 0.0;       // pu system base
  double filtered_q = 0.0;
  double energy = 0.0;           // pu-hours drawn down from initial level
  double secondary_freq = 0.0;   // consensus frequency correction (Omega)
  double secondary_volt = 0.0;   // consensus voltage correction (e)

  bool tripped = false;

  /// Coupling impedance converted to the system base.
  Complex coupling_z() const {
    return Complex(coupling_r, coupling_x) / rating;
  }
  Complex norton_admittance() const { return 1.0 / coupling_z(); }

  double speed_command() const {
    return freq_setpoint + secondary_freq - active_droop * (filtered_p - p_setpoint) / rating;
  }
  double voltage_command() const {
    return volt_setpoint + secondary_volt - reactive_droop * (filtered_q - q_setpoint) / rating;
  }
  Complex internal_voltage() const {
    return std::polar(voltage_command(), angle);
  }
  double current_limit() const { return overload_factor * rating; }
};

struct GfmDerivatives {
  double d_angle = 0.0;
  double d_filtered_p = 0.0;
  double d_filtered_q = 0.0;
  double d_energy = 0.0;
};

/// Droop commands against explicit (possibly safety-filtered) setpoints.
double gfm_speed_command(const GfmInverterState& inv, double p_star);
double gfm_voltage_command(const GfmInverterState& inv, double q_star);

GfmDerivatives gfm_derivatives(const GfmInverterState& inv, Complex terminal_voltage,
                               double measured_p, double measured_q);

/// Variant with overridden setpoints, used when the safety layer is active.
GfmDerivatives gfm_derivatives(const GfmInverterState& inv, double measured_p,
                               double measured_q, double p_star, double q_star);

/// Time-tagged active-power profile played into a load.
struct LoadProfile {
  std::string id;
  enum class Interp { hold, linear };
  Interp interp = Interp::hold;
  std::vector<double> time_s;
  std::vector<double> p_pu;
};

/// Interpolated profile value; clamps to the first/last sample outside the
/// covered range. Throws ConfigError on an empty profile.
double sample_profile(const LoadProfile& profile, double t);

/// Voltage-dependent ZIP load, optionally driven by a played-in profile.
struct ZipLoad {
  std::string id;
  int bus = 0;

  double p_nominal = 0.0;  // pu at V = 1 (ignored when a profile drives P)
  double q_nominal = 0.0;
  double zp_z = 0.0, zp_i = 0.0, zp_p = 1.0;  // P composition, sums to 1
  double zq_z = 0.0, zq_i = 0.0, zq_p = 1.0;  // Q composition, sums to 1
  int profile_index = -1;      // index into the scenario profile table
  double q_to_p_ratio = 0.0;   // Q0(t) = ratio * P0(t) when profiled
  double voltage_floor = 0.5;  // below this |V| the P/I parts turn constant-Z
  double shed_fraction = 0.0;  // cumulative UFLS shed, non-decreasing
  bool is_ldl = false;         // large digital load (tracked separately by metrics)
  bool tripped = false;
};

/// Complex power drawn by the load at this voltage and base power.
Complex zip_power(const ZipLoad& load, Complex voltage, double p_base, double q_base);

/// Load current injection into the network (negative of consumption).
/// Below the voltage floor the constant-P and constant-I parts convert to
/// constant-Z so the injection stays bounded and continuous; V = 0 yields
/// zero current.
Complex zip_injection(const ZipLoad& load, Complex voltage, double p_base, double q_base);

/// Base powers at time t (profile sample or nominal values).
struct LoadBasePower {
  double p = 0.0;
  double q = 0.0;
};
LoadBasePower load_base_power(const ZipLoad& load, const std::vector<LoadProfile>& profiles, double t);

}  // namespace gridfm
