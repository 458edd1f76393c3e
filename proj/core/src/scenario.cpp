// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gridfm {

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) toks.push_back(tok);
  return toks;
}

double to_double(const std::string& s, const std::string& context) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + s + "' in " + context);
  }
}

int to_int(const std::string& s, const std::string& context) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value '" + s + "' in " + context);
  }
}

}  // namespace

std::vector<int> NetworkData::load_buses_by_size() const {
  std::vector<std::pair<double, int>> sized;
  for (const ZipLoad& ld : loads) {
    if (ld.p_nominal > 0.0) sized.emplace_back(ld.p_nominal, ld.bus);
  }
  std::sort(sized.begin(), sized.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> buses;
  buses.reserve(sized.size());
  for (const auto& [p, bus] : sized) buses.push_back(bus);
  return buses;
}

NetworkData parse_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file: " + path);

  NetworkData data;
  std::string section;
  std::string line;
  int lineno = 0;
  int next_branch_id = 1;

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::vector<std::string> toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);

    if (toks[0].front() == '[') {
      section = toks[0];
      continue;
    }
    if (section.empty()) {
      if (toks[0] == "base_mva" && toks.size() == 2) {
        data.base_mva = to_double(toks[1], where);
      } else if (toks[0] == "base_freq_hz" && toks.size() == 2) {
        data.base_freq_hz = to_double(toks[1], where);
      } else {
        throw ConfigError("unexpected header entry at " + where);
      }
      continue;
    }

    if (section == "[buses]") {
      // id area base_kv kind vset
      if (toks.size() != 5) throw ConfigError("bus record needs 5 fields at " + where);
      Bus bus;
      bus.id = to_int(toks[0], where);
      bus.area = to_int(toks[1], where);
      bus.base_kv = to_double(toks[2], where);
      if (toks[3] == "slack") bus.kind = BusKind::slack;
      else if (toks[3] == "pv") bus.kind = BusKind::pv;
      else if (toks[3] == "pq") bus.kind = BusKind::pq;
      else throw ConfigError("unknown bus kind '" + toks[3] + "' at " + where);
      bus.v_setpoint = to_double(toks[4], where);
      data.model.add_bus(bus);
    } else if (section == "[branches]") {
      // from to r x b tap status
      if (toks.size() != 7) throw ConfigError("branch record needs 7 fields at " + where);
      Branch br;
      br.id = next_branch_id++;
      br.from_bus = to_int(toks[0], where);
      br.to_bus = to_int(toks[1], where);
      br.series_z = Complex(to_double(toks[2], where), to_double(toks[3], where));
      br.charging_b = to_double(toks[4], where);
      br.tap = to_double(toks[5], where);
      br.in_service = to_int(toks[6], where) != 0;
      data.model.add_branch(br);
    } else if (section == "[generators]") {
      // id bus h d xdp r_gov t_gov p_mw
      if (toks.size() != 8) throw ConfigError("generator record needs 8 fields at " + where);
      GeneratorState gen;
      gen.id = toks[0];
      gen.bus = to_int(toks[1], where);
      gen.inertia_h = to_double(toks[2], where);
      gen.damping_d = to_double(toks[3], where);
      gen.xdp = to_double(toks[4], where);
      gen.gov_droop_r = to_double(toks[5], where);
      gen.gov_time_const = to_double(toks[6], where);
      gen.mech_power = to_double(toks[7], where) / data.base_mva;
      if (gen.inertia_h <= 0.0) throw ConfigError("generator inertia must be > 0 at " + where);
      if (gen.xdp <= 0.0) throw ConfigError("generator reactance must be > 0 at " + where);
      data.generators.push_back(gen);
    } else if (section == "[loads]") {
      // id bus p_mw q_mvar
      if (toks.size() != 4) throw ConfigError("load record needs 4 fields at " + where);
      ZipLoad load;
      load.id = toks[0];
      load.bus = to_int(toks[1], where);
      load.p_nominal = to_double(toks[2], where) / data.base_mva;
      load.q_nominal = to_double(toks[3], where) / data.base_mva;
      data.loads.push_back(load);
    } else {
      throw ConfigError("unknown section " + section + " at " + where);
    }
  }

  // Cross references
  for (const GeneratorState& gen : data.generators) {
    if (!data.model.has_bus(gen.bus)) {
      throw ConfigError("generator " + gen.id + " references unknown bus " +
                        std::to_string(gen.bus));
    }
  }
  for (const ZipLoad& load : data.loads) {
    if (!data.model.has_bus(load.bus)) {
      throw ConfigError("load " + load.id + " references unknown bus " +
                        std::to_string(load.bus));
    }
  }
  return data;
}

LoadProfile read_profile_csv(const std::string& path, const std::string& id,
                             LoadProfile::Interp interp) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile file: " + path);
  LoadProfile profile;
  profile.id = id;
  profile.interp = interp;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::vector<std::string> toks = tokenize(line);
    if (toks.empty()) continue;
    if (lineno == 1 && toks[0] == "time_s") continue;  // header
    const std::string where = path + ":" + std::to_string(lineno);
    if (toks.size() != 2) throw ConfigError("profile row needs 2 columns at " + where);
    profile.time_s.push_back(to_double(toks[0], where));
    profile.p_pu.push_back(to_double(toks[1], where));
  }
  if (profile.time_s.empty()) throw ConfigError("profile '" + id + "' is empty: " + path);
  for (size_t k = 0; k + 1 < profile.time_s.size(); ++k) {
    if (profile.time_s[k + 1] <= profile.time_s[k]) {
      throw ConfigError("profile '" + id + "' times must be strictly increasing");
    }
  }
  for (double p : profile.p_pu) {
    if (p < 0.0) throw ConfigError("profile '" + id + "' has negative power");
  }
  return profile;
}

const char* to_string(StorageDeployment d) {
  switch (d) {
    case StorageDeployment::none: return "none";
    case StorageDeployment::collocated: return "collocated";
    case StorageDeployment::embedded: return "embedded";
  }
  return "unknown";
}

std::optional<StorageDeployment> storage_deployment_from_string(const std::string& name) {
  if (name == "none") return StorageDeployment::none;
  if (name == "collocated") return StorageDeployment::collocated;
  if (name == "embedded") return StorageDeployment::embedded;
  return std::nullopt;
}

ProtectionConfig default_protection() {
  ProtectionConfig p;
  // Large-digital-load LVRT, measured at the point of interconnection.
  p.ldl_lvrt.quantity = RelayQuantity::voltage_pu;
  p.ldl_lvrt.segments = {{0.45, 0.15, ViolationSide::under},
                         {0.65, 1.00, ViolationSide::under},
                         {0.90, 3.00, ViolationSide::under}};

  p.gen_voltage.quantity = RelayQuantity::voltage_pu;
  p.gen_voltage.segments = {{0.45, 0.30, ViolationSide::under},
                            {0.65, 2.00, ViolationSide::under},
                            {0.90, 8.00, ViolationSide::under},
                            {1.30, 0.20, ViolationSide::over},
                            {1.20, 2.00, ViolationSide::over}};

  p.gen_frequency.quantity = RelayQuantity::frequency_hz;
  p.gen_frequency.segments = {{57.8, 0.00, ViolationSide::under},
                              {58.4, 30.0, ViolationSide::under},
                              {61.8, 0.00, ViolationSide::over},
                              {61.6, 30.0, ViolationSide::over}};

  p.gfm_voltage.quantity = RelayQuantity::voltage_pu;
  p.gfm_voltage.segments = {{0.10, 0.40, ViolationSide::under},
                            {0.50, 3.00, ViolationSide::under},
                            {0.85, 10.0, ViolationSide::under},
                            {1.30, 0.50, ViolationSide::over},
                            {1.20, 3.00, ViolationSide::over}};

  p.gfm_frequency.quantity = RelayQuantity::frequency_hz;
  p.gfm_frequency.segments = {{56.5, 0.30, ViolationSide::under},
                              {58.0, 20.0, ViolationSide::under},
                              {63.5, 0.30, ViolationSide::over},
                              {62.0, 20.0, ViolationSide::over}};

  p.ufls.stages = {{59.1, 0.3, 0.07}, {58.9, 0.3, 0.07}, {58.5, 0.3, 0.07}};
  p.ufls.voltage_inhibit_pu = 0.4;
  return p;
}

namespace {

RideThroughCurve parse_curve(const json& j, RelayQuantity quantity,
                             const RideThroughCurve& fallback,
                             std::vector<std::string>& errors, const std::string& name) {
  RideThroughCurve curve = fallback;
  curve.quantity = quantity;
  if (j.is_null()) return curve;
  curve.segments.clear();
  if (j.contains("hysteresis")) curve.hysteresis_frac = j["hysteresis"].get<double>();

  auto read_side = [&](const char* key, ViolationSide side) {
    if (!j.contains(key)) return;
    for (const auto& seg : j[key]) {
      if (!seg.is_array() || seg.size() != 2) {
        errors.push_back(name + ": segment must be [threshold, max_duration]");
        continue;
      }
      curve.segments.push_back({seg[0].get<double>(), seg[1].get<double>(), side});
    }
  };
  read_side("under", ViolationSide::under);
  read_side("over", ViolationSide::over);
  const std::string err = curve.validate();
  if (!err.empty()) errors.push_back(name + ": " + err);
  return curve;
}

json curve_to_json(const RideThroughCurve& curve) {
  json j;
  j["hysteresis"] = curve.hysteresis_frac;
  json under = json::array();
  json over = json::array();
  for (const CurveSegment& seg : curve.segments) {
    json pair = json::array({seg.threshold, seg.max_duration});
    if (seg.side == ViolationSide::under) under.push_back(pair);
    else over.push_back(pair);
  }
  j["under"] = under;
  j["over"] = over;
  return j;
}

std::string resolve_path(const std::string& raw, const std::string& base_dir) {
  fs::path p(raw);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (fs::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

ScenarioConfig parse_scenario_text(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario JSON parse error: ") + e.what());
  }

  std::vector<std::string> errors;
  ScenarioConfig cfg;

  auto require = [&](const char* key) -> bool {
    if (!j.contains(key)) {
      errors.push_back(std::string("missing required field '") + key + "'");
      return false;
    }
    return true;
  };

  if (require("schema_version")) {
    cfg.schema_version = j["schema_version"].get<int>();
    if (cfg.schema_version != 1) errors.push_back("unsupported schema_version");
  }
  if (require("name")) cfg.name = j["name"].get<std::string>();
  if (require("network")) {
    cfg.network_path = resolve_path(j["network"].get<std::string>(), base_dir);
    if (!fs::exists(cfg.network_path)) {
      errors.push_back("network file does not exist: " + cfg.network_path);
    }
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (s.contains("step_s")) cfg.solver.step = s["step_s"].get<double>();
    if (s.contains("horizon_s")) cfg.solver.horizon = s["horizon_s"].get<double>();
    if (s.contains("event_tolerance_s")) cfg.solver.event_tolerance = s["event_tolerance_s"].get<double>();
    else cfg.solver.event_tolerance = cfg.solver.step;
    if (s.contains("record_every")) cfg.solver.record_every = s["record_every"].get<int>();
    if (s.contains("integrator")) {
      const std::string name = s["integrator"].get<std::string>();
      if (name == "rk4") cfg.solver.integrator = IntegratorKind::rk4;
      else if (name == "trapezoidal") cfg.solver.integrator = IntegratorKind::trapezoidal;
      else errors.push_back("unknown integrator '" + name + "'");
    }
    const std::string err = cfg.solver.validate();
    if (!err.empty()) errors.push_back(err);
  }

  if (j.contains("profiles")) {
    for (const auto& p : j["profiles"]) {
      ProfileRef ref;
      ref.id = p.value("id", std::string{});
      if (ref.id.empty()) errors.push_back("profile without id");
      ref.file = resolve_path(p.value("file", std::string{}), base_dir);
      if (!fs::exists(ref.file)) errors.push_back("profile file does not exist: " + ref.file);
      const std::string interp = p.value("interpolation", std::string{"linear"});
      if (interp == "linear") ref.interp = LoadProfile::Interp::linear;
      else if (interp == "hold") ref.interp = LoadProfile::Interp::hold;
      else errors.push_back("profile '" + ref.id + "': unknown interpolation '" + interp + "'");
      cfg.profile_refs.push_back(ref);
    }
  }

  if (j.contains("ldl")) {
    for (const auto& l : j["ldl"]) {
      LdlConfig ldl;
      ldl.bus = l.value("bus", 0);
      ldl.profile_id = l.value("profile", std::string{});
      if (l.contains("zip")) {
        const auto& z = l["zip"];
        if (z.is_array() && z.size() == 3) {
          ldl.zip_z = z[0].get<double>();
          ldl.zip_i = z[1].get<double>();
          ldl.zip_p = z[2].get<double>();
        } else {
          errors.push_back("ldl zip must be [a_z, a_i, a_p]");
        }
      }
      ldl.q_to_p_ratio = l.value("q_to_p", 0.0);
      if (std::abs(ldl.zip_z + ldl.zip_i + ldl.zip_p - 1.0) > 1e-9) {
        errors.push_back("ldl at bus " + std::to_string(ldl.bus) + ": zip must sum to 1");
      }
      bool have_profile = false;
      for (const ProfileRef& ref : cfg.profile_refs) have_profile |= ref.id == ldl.profile_id;
      if (!have_profile) {
        errors.push_back("ldl at bus " + std::to_string(ldl.bus) +
                         " references unknown profile '" + ldl.profile_id + "'");
      }
      cfg.ldls.push_back(ldl);
    }
  }

  if (j.contains("storage")) {
    const json& s = j["storage"];
    const std::string dep = s.value("deployment", std::string{"none"});
    if (auto d = storage_deployment_from_string(dep)) cfg.storage.deployment = *d;
    else errors.push_back("unknown storage deployment '" + dep + "'");

    if (s.contains("buses")) cfg.storage.buses = s["buses"].get<std::vector<int>>();
    if (s.contains("penetration_pct")) {
      cfg.storage.penetration_pct = s["penetration_pct"].get<double>();
      if (*cfg.storage.penetration_pct <= 0.0 || *cfg.storage.penetration_pct > 100.0) {
        errors.push_back("penetration_pct must be in (0, 100]");
      }
    }
    cfg.storage.fleet_rating = s.value("fleet_rating_pu", 18.4);
    if (cfg.storage.fleet_rating <= 0.0) errors.push_back("fleet_rating_pu must be > 0");

    std::vector<int> sorted = cfg.storage.buses;
    std::sort(sorted.begin(), sorted.end());
    for (size_t k = 0; k + 1 < sorted.size(); ++k) {
      if (sorted[k] == sorted[k + 1]) {
        errors.push_back("duplicate storage bus " + std::to_string(sorted[k]));
      }
    }

    if (s.contains("inverter")) {
      const json& inv = s["inverter"];
      cfg.storage.active_droop = inv.value("active_droop", cfg.storage.active_droop);
      cfg.storage.reactive_droop = inv.value("reactive_droop", cfg.storage.reactive_droop);
      cfg.storage.filter_tau = inv.value("filter_tau_s", cfg.storage.filter_tau);
      cfg.storage.coupling_r = inv.value("coupling_r", cfg.storage.coupling_r);
      cfg.storage.coupling_x = inv.value("coupling_x", cfg.storage.coupling_x);
      cfg.storage.overload_factor = inv.value("overload_factor", cfg.storage.overload_factor);
      cfg.storage.capacity_hours = inv.value("capacity_hours", cfg.storage.capacity_hours);
      if (cfg.storage.active_droop <= 0.0 || cfg.storage.reactive_droop <= 0.0) {
        errors.push_back("droop gains must be > 0");
      }
    }
    if (s.contains("overrides")) {
      for (const auto& ov : s["overrides"]) {
        cfg.storage.rating_overrides[ov.value("bus", 0)] = ov.value("rating_pu", 0.0);
      }
    }
  }

  if (j.contains("coordination")) {
    const json& c = j["coordination"];
    const std::string mode = c.value("mode", std::string{"none"});
    if (auto m = coordination_mode_from_string(mode)) cfg.coordination.mode = *m;
    else errors.push_back("unknown coordination mode '" + mode + "'");

    if (c.contains("safety")) {
      const json& sf = c["safety"];
      if (sf.contains("v_band")) {
        cfg.coordination.safety.v_low = sf["v_band"][0].get<double>();
        cfg.coordination.safety.v_high = sf["v_band"][1].get<double>();
      }
      if (sf.contains("f_band_hz")) {
        cfg.coordination.safety.f_low_hz = sf["f_band_hz"][0].get<double>();
        cfg.coordination.safety.f_high_hz = sf["f_band_hz"][1].get<double>();
      }
      cfg.coordination.safety.p_gain_per_hz = sf.value("p_gain_per_hz", cfg.coordination.safety.p_gain_per_hz);
      cfg.coordination.safety.q_gain_per_pu = sf.value("q_gain_per_pu", cfg.coordination.safety.q_gain_per_pu);
      const std::string err = cfg.coordination.safety.validate();
      if (!err.empty()) errors.push_back("safety: " + err);
    }
    if (c.contains("consensus")) {
      const json& cs = c["consensus"];
      cfg.coordination.update_period = cs.value("update_period_s", cfg.coordination.update_period);
      cfg.coordination.latency = cs.value("latency_s", cfg.coordination.latency);
      cfg.coordination.gains.k_freq = cs.value("k_freq", cfg.coordination.gains.k_freq);
      cfg.coordination.gains.k_volt = cs.value("k_volt", cfg.coordination.gains.k_volt);
      cfg.coordination.gains.k_share_p = cs.value("k_share", cfg.coordination.gains.k_share_p);
      cfg.coordination.gains.k_share_q = cs.value("k_share_q", cfg.coordination.gains.k_share_q);
      cfg.coordination.gains.k_track_f = cs.value("k_track_freq", cfg.coordination.gains.k_track_f);
      cfg.coordination.gains.k_track_v = cs.value("k_track_volt", cfg.coordination.gains.k_track_v);
      cfg.coordination.gains.saturation = cs.value("saturation", cfg.coordination.gains.saturation);
      if (cfg.coordination.update_period <= 0.0) errors.push_back("update_period_s must be > 0");
    }
    if (c.contains("graph")) {
      const json& g = c["graph"];
      if (g.is_string()) {
        if (g.get<std::string>() != "electrical") {
          errors.push_back("graph must be 'electrical' or an edge-list object");
        }
      } else if (g.is_object() && g.contains("edges")) {
        for (const auto& e : g["edges"]) {
          if (!e.is_array() || e.size() != 2) {
            errors.push_back("graph edge must be [bus_a, bus_b]");
            continue;
          }
          cfg.coordination.edges.push_back({e[0].get<int>(), e[1].get<int>()});
        }
      }
      if (g.is_object() && g.contains("electrical_neighbors")) {
        cfg.coordination.electrical_neighbors = g["electrical_neighbors"].get<int>();
      }
    }
  }

  if (j.contains("protection")) {
    const json& p = j["protection"];
    const ProtectionConfig defaults = default_protection();
    cfg.protection.enabled = p.value("enabled", true);
    cfg.protection.ldl_lvrt = parse_curve(p.contains("ldl_lvrt") ? p["ldl_lvrt"] : json{},
                                          RelayQuantity::voltage_pu, defaults.ldl_lvrt,
                                          errors, "ldl_lvrt");
    if (p.contains("generator")) {
      cfg.protection.gen_voltage = parse_curve(p["generator"].contains("voltage") ? p["generator"]["voltage"] : json{},
                                               RelayQuantity::voltage_pu, defaults.gen_voltage, errors, "generator.voltage");
      cfg.protection.gen_frequency = parse_curve(p["generator"].contains("frequency") ? p["generator"]["frequency"] : json{},
                                                 RelayQuantity::frequency_hz, defaults.gen_frequency, errors, "generator.frequency");
    }
    if (p.contains("gfm")) {
      cfg.protection.gfm_voltage = parse_curve(p["gfm"].contains("voltage") ? p["gfm"]["voltage"] : json{},
                                               RelayQuantity::voltage_pu, defaults.gfm_voltage, errors, "gfm.voltage");
      cfg.protection.gfm_frequency = parse_curve(p["gfm"].contains("frequency") ? p["gfm"]["frequency"] : json{},
                                                 RelayQuantity::frequency_hz, defaults.gfm_frequency, errors, "gfm.frequency");
    }
    if (p.contains("ufls")) {
      const json& u = p["ufls"];
      cfg.protection.ufls.stages.clear();
      if (u.contains("stages")) {
        for (const auto& st : u["stages"]) {
          if (!st.is_array() || st.size() != 3) {
            errors.push_back("ufls stage must be [threshold_hz, delay_s, shed_fraction]");
            continue;
          }
          cfg.protection.ufls.stages.push_back(
              {st[0].get<double>(), st[1].get<double>(), st[2].get<double>()});
        }
      }
      cfg.protection.ufls.voltage_inhibit_pu = u.value("voltage_inhibit", 0.4);
      const std::string err = cfg.protection.ufls.validate();
      if (!err.empty()) errors.push_back("ufls: " + err);
    }
  }

  if (j.contains("events")) {
    for (const auto& e : j["events"]) {
      ScheduledEvent ev;
      ev.t = e.value("t", -1.0);
      if (ev.t < 0.0) errors.push_back("event with missing or negative time");
      const std::string kind = e.value("kind", std::string{});
      if (auto k = event_kind_from_string(kind)) ev.kind = *k;
      else {
        errors.push_back("unknown event kind '" + kind + "'");
        continue;
      }
      if (e.contains("branch")) {
        const auto& b = e["branch"];
        if (b.is_array() && b.size() == 2) {
          ev.from_bus = b[0].get<int>();
          ev.to_bus = b[1].get<int>();
        } else {
          errors.push_back("event branch must be [from_bus, to_bus]");
        }
      }
      ev.location_fraction = e.value("location", 0.5);
      ev.fault_admittance = e.value("admittance", 1.0e4);
      ev.close_branch = e.value("action", std::string{"open"}) == "close";
      ev.device = e.value("device", std::string{});
      ev.label = e.value("label", std::string{});
      if (ev.kind == EventKind::apply_fault &&
          (ev.location_fraction < 0.0 || ev.location_fraction > 1.0)) {
        errors.push_back("fault location must be in [0,1]");
      }
      cfg.events.push_back(ev);
    }
  }

  if (j.contains("load_defaults")) {
    const json& d = j["load_defaults"];
    auto read_triple = [&](const char* key, double& a, double& b, double& c) {
      if (!d.contains(key)) return;
      const auto& z = d[key];
      if (z.is_array() && z.size() == 3) {
        a = z[0].get<double>();
        b = z[1].get<double>();
        c = z[2].get<double>();
        if (std::abs(a + b + c - 1.0) > 1e-9) {
          errors.push_back(std::string(key) + " must sum to 1");
        }
      } else {
        errors.push_back(std::string(key) + " must be a 3-element array");
      }
    };
    read_triple("zip_p", cfg.load_defaults.zip_z, cfg.load_defaults.zip_i, cfg.load_defaults.zip_p);
    read_triple("zip_q", cfg.load_defaults.zq_z, cfg.load_defaults.zq_i, cfg.load_defaults.zq_p);
    cfg.load_defaults.voltage_floor = d.value("voltage_floor", 0.5);
  }

  if (!errors.empty()) {
    std::string summary = "scenario validation failed with " +
                          std::to_string(errors.size()) + " violation(s):";
    for (const std::string& e : errors) summary += "\n  - " + e;
    throw ConfigError(summary, errors);
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  const std::string text = read_text_file(path);
  const std::string dir = fs::path(path).parent_path().string();
  return parse_scenario_text(text, dir.empty() ? "." : dir);
}

std::string serialize_scenario(const ScenarioConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["name"] = cfg.name;
  j["network"] = cfg.network_path;

  j["solver"] = {
      {"step_s", cfg.solver.step},
      {"horizon_s", cfg.solver.horizon},
      {"event_tolerance_s", cfg.solver.event_tolerance},
      {"record_every", cfg.solver.record_every},
      {"integrator", cfg.solver.integrator == IntegratorKind::rk4 ? "rk4" : "trapezoidal"},
  };

  json profiles = json::array();
  for (const ProfileRef& ref : cfg.profile_refs) {
    profiles.push_back({{"id", ref.id},
                        {"file", ref.file},
                        {"interpolation",
                         ref.interp == LoadProfile::Interp::linear ? "linear" : "hold"}});
  }
  j["profiles"] = profiles;

  json ldls = json::array();
  for (const LdlConfig& l : cfg.ldls) {
    ldls.push_back({{"bus", l.bus},
                    {"profile", l.profile_id},
                    {"zip", {l.zip_z, l.zip_i, l.zip_p}},
                    {"q_to_p", l.q_to_p_ratio}});
  }
  j["ldl"] = ldls;

  json storage;
  storage["deployment"] = to_string(cfg.storage.deployment);
  storage["buses"] = cfg.storage.buses;
  if (cfg.storage.penetration_pct) storage["penetration_pct"] = *cfg.storage.penetration_pct;
  storage["fleet_rating_pu"] = cfg.storage.fleet_rating;
  storage["inverter"] = {
      {"active_droop", cfg.storage.active_droop},
      {"reactive_droop", cfg.storage.reactive_droop},
      {"filter_tau_s", cfg.storage.filter_tau},
      {"coupling_r", cfg.storage.coupling_r},
      {"coupling_x", cfg.storage.coupling_x},
      {"overload_factor", cfg.storage.overload_factor},
      {"capacity_hours", cfg.storage.capacity_hours},
  };
  json overrides = json::array();
  for (const auto& [bus, rating] : cfg.storage.rating_overrides) {
    overrides.push_back({{"bus", bus}, {"rating_pu", rating}});
  }
  storage["overrides"] = overrides;
  j["storage"] = storage;

  json coord;
  coord["mode"] = to_string(cfg.coordination.mode);
  coord["safety"] = {
      {"v_band", {cfg.coordination.safety.v_low, cfg.coordination.safety.v_high}},
      {"f_band_hz", {cfg.coordination.safety.f_low_hz, cfg.coordination.safety.f_high_hz}},
      {"p_gain_per_hz", cfg.coordination.safety.p_gain_per_hz},
      {"q_gain_per_pu", cfg.coordination.safety.q_gain_per_pu},
  };
  coord["consensus"] = {
      {"update_period_s", cfg.coordination.update_period},
      {"latency_s", cfg.coordination.latency},
      {"k_freq", cfg.coordination.gains.k_freq},
      {"k_volt", cfg.coordination.gains.k_volt},
      {"k_share", cfg.coordination.gains.k_share_p},
      {"k_share_q", cfg.coordination.gains.k_share_q},
      {"k_track_freq", cfg.coordination.gains.k_track_f},
      {"k_track_volt", cfg.coordination.gains.k_track_v},
      {"saturation", cfg.coordination.gains.saturation},
  };
  if (cfg.coordination.edges.empty()) {
    coord["graph"] = json{{"electrical_neighbors", cfg.coordination.electrical_neighbors}};
    coord["graph"]["kind"] = "electrical";
  } else {
    json edges = json::array();
    for (const auto& e : cfg.coordination.edges) edges.push_back({e[0], e[1]});
    coord["graph"] = json{{"edges", edges}};
  }
  j["coordination"] = coord;

  json prot;
  prot["enabled"] = cfg.protection.enabled;
  prot["ldl_lvrt"] = curve_to_json(cfg.protection.ldl_lvrt);
  prot["generator"] = {{"voltage", curve_to_json(cfg.protection.gen_voltage)},
                       {"frequency", curve_to_json(cfg.protection.gen_frequency)}};
  prot["gfm"] = {{"voltage", curve_to_json(cfg.protection.gfm_voltage)},
                 {"frequency", curve_to_json(cfg.protection.gfm_frequency)}};
  json stages = json::array();
  for (const UflsStage& st : cfg.protection.ufls.stages) {
    stages.push_back({st.threshold_hz, st.pickup_delay_s, st.shed_fraction});
  }
  prot["ufls"] = {{"stages", stages},
                  {"voltage_inhibit", cfg.protection.ufls.voltage_inhibit_pu}};
  j["protection"] = prot;

  json events = json::array();
  for (const ScheduledEvent& ev : cfg.events) {
    json e;
    e["t"] = ev.t;
    e["kind"] = to_string(ev.kind);
    if (ev.from_bus != 0 || ev.to_bus != 0) e["branch"] = {ev.from_bus, ev.to_bus};
    if (ev.kind == EventKind::apply_fault) {
      e["location"] = ev.location_fraction;
      e["admittance"] = ev.fault_admittance;
    }
    if (ev.kind == EventKind::switch_branch) e["action"] = ev.close_branch ? "close" : "open";
    if (!ev.device.empty()) e["device"] = ev.device;
    if (!ev.label.empty()) e["label"] = ev.label;
    events.push_back(e);
  }
  j["events"] = events;

  j["load_defaults"] = {
      {"zip_p", {cfg.load_defaults.zip_z, cfg.load_defaults.zip_i, cfg.load_defaults.zip_p}},
      {"zip_q", {cfg.load_defaults.zq_z, cfg.load_defaults.zq_i, cfg.load_defaults.zq_p}},
      {"voltage_floor", cfg.load_defaults.voltage_floor},
  };

  return j.dump(2);
}

std::string scenario_hash(const ScenarioConfig& config) {
  const std::string text = serialize_scenario(config);
  uint64_t hash = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

DeploymentPlan resolve_deployment(const ScenarioConfig& config, const NetworkData& network) {
  DeploymentPlan plan;
  const StorageConfig& st = config.storage;
  if (st.deployment == StorageDeployment::none) return plan;

  std::vector<int> buses;
  if (st.deployment == StorageDeployment::collocated) {
    for (const LdlConfig& ldl : config.ldls) buses.push_back(ldl.bus);
    if (buses.empty()) {
      throw ConfigError("collocated deployment requires at least one LDL");
    }
  } else if (!st.buses.empty()) {
    buses = st.buses;
  } else if (st.penetration_pct) {
    const std::vector<int> ordered = network.load_buses_by_size();
    const auto want = static_cast<size_t>(
        std::lround(*st.penetration_pct / 100.0 * static_cast<double>(ordered.size())));
    if (want == 0) {
      throw ConfigError("penetration_pct selects zero storage buses");
    }
    buses.assign(ordered.begin(), ordered.begin() + std::min(want, ordered.size()));
    std::sort(buses.begin(), buses.end());
  } else {
    throw ConfigError("embedded deployment needs 'buses' or 'penetration_pct'");
  }

  for (int bus : buses) {
    if (!network.model.has_bus(bus)) {
      throw ConfigError("storage bus " + std::to_string(bus) + " not in network");
    }
  }

  // Overrides pin specific buses; the remaining rating splits equally.
  double fixed = 0.0;
  int free_count = 0;
  for (int bus : buses) {
    auto it = st.rating_overrides.find(bus);
    if (it != st.rating_overrides.end()) fixed += it->second;
    else ++free_count;
  }
  if (fixed > st.fleet_rating + 1e-12) {
    throw ConfigError("rating overrides exceed the fleet rating");
  }
  const double share = free_count > 0 ? (st.fleet_rating - fixed) / free_count : 0.0;

  for (int bus : buses) {
    auto it = st.rating_overrides.find(bus);
    plan.units.push_back({bus, it != st.rating_overrides.end() ? it->second : share});
  }
  return plan;
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::apply_fault: return "apply_fault";
    case EventKind::clear_fault: return "clear_fault";
    case EventKind::switch_branch: return "switch_branch";
    case EventKind::relay_trip: return "relay_trip";
    case EventKind::ufls_shed: return "ufls_shed";
    case EventKind::profile_milestone: return "profile_milestone";
  }
  return "unknown";
}

std::optional<EventKind> event_kind_from_string(const std::string& name) {
  for (EventKind k : {EventKind::apply_fault, EventKind::clear_fault, EventKind::switch_branch,
                      EventKind::relay_trip, EventKind::ufls_shed, EventKind::profile_milestone}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

int event_priority(EventKind kind) {
  switch (kind) {
    case EventKind::apply_fault: return 0;
    case EventKind::clear_fault: return 1;
    case EventKind::switch_branch: return 2;
    case EventKind::relay_trip: return 3;
    case EventKind::ufls_shed: return 4;
    case EventKind::profile_milestone: return 5;
  }
  return 9;
}

}  // namespace gridfm
