// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/result_io.hpp"

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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct SeriesTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // column-major
};

void collect_columns(const SimulationResult& r, SeriesTable& tab) {
  tab.header.push_back("t");
  tab.columns.push_back(r.time);
  for (size_t b = 0; b < r.bus_ids.size(); ++b) {
    tab.header.push_back("vm_" + std::to_string(r.bus_ids[b]));
    tab.columns.push_back(r.bus_v_mag[b]);
    tab.header.push_back("va_" + std::to_string(r.bus_ids[b]));
    tab.columns.push_back(r.bus_v_angle[b]);
  }
  for (size_t g = 0; g < r.gen_ids.size(); ++g) {
    tab.header.push_back("gen_" + r.gen_ids[g] + "_delta");
    tab.columns.push_back(r.gen_angle[g]);
    tab.header.push_back("gen_" + r.gen_ids[g] + "_omega");
    tab.columns.push_back(r.gen_speed[g]);
  }
  for (size_t i = 0; i < r.inv_ids.size(); ++i) {
    tab.header.push_back("inv_" + r.inv_ids[i] + "_p");
    tab.columns.push_back(r.inv_p[i]);
    tab.header.push_back("inv_" + r.inv_ids[i] + "_q");
    tab.columns.push_back(r.inv_q[i]);
    tab.header.push_back("inv_" + r.inv_ids[i] + "_f");
    tab.columns.push_back(r.inv_freq[i]);
  }
  tab.header.push_back("delta_spread_deg");
  tab.columns.push_back(r.delta_spread_deg);
}

json event_to_json(const EventRecord& ev) {
  return json{{"t", ev.t},
              {"kind", to_string(ev.kind)},
              {"device", ev.device},
              {"payload", {{"detail", ev.detail},
                           {"power_mw", ev.power_mw},
                           {"fraction", ev.fraction}}}};
}

EventRecord event_from_json(const json& j) {
  EventRecord ev;
  ev.t = j.value("t", 0.0);
  if (auto k = event_kind_from_string(j.value("kind", std::string{}))) ev.kind = *k;
  ev.device = j.value("device", std::string{});
  if (j.contains("payload")) {
    ev.detail = j["payload"].value("detail", std::string{});
    ev.power_mw = j["payload"].value("power_mw", 0.0);
    ev.fraction = j["payload"].value("fraction", 0.0);
  }
  return ev;
}

}  // namespace

OutputDirLock::OutputDirLock(const std::string& dir) {
  fs::create_directories(dir);
  lock_path_ = (fs::path(dir) / ".gridfm.lock").string();
  if (fs::exists(lock_path_)) {
    throw ConfigError("output directory is locked by another run: " + dir);
  }
  std::ofstream lock(lock_path_);
  lock << "locked\n";
}

OutputDirLock::~OutputDirLock() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

void write_series_csv(const std::string& path, const SimulationResult& result) {
  SeriesTable tab;
  collect_columns(result, tab);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (size_t c = 0; c < tab.header.size(); ++c) {
    if (c) out << ",";
    out << tab.header[c];
  }
  out << "\n";
  const size_t rows = result.time.size();
  for (size_t r = 0; r < rows; ++r) {
    std::string line;
    for (size_t c = 0; c < tab.columns.size(); ++c) {
      if (c) line += ",";
      line += r < tab.columns[c].size() ? fmt(tab.columns[c][r]) : "nan";
    }
    out << line << "\n";
  }
}

void write_series_json(const std::string& path, const SimulationResult& result) {
  SeriesTable tab;
  collect_columns(result, tab);
  json j;
  for (size_t c = 0; c < tab.header.size(); ++c) j[tab.header[c]] = tab.columns[c];
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump() << "\n";
}

void write_events_json(const std::string& path, const SimulationResult& result) {
  json j = json::array();
  for (const EventRecord& ev : result.events) j.push_back(event_to_json(ev));
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_report_json(const std::string& path, const SimulationResult& result,
                       const StabilityReport& report) {
  json j;
  j["tsi"] = report.tsi;
  j["delta_max_deg"] = report.delta_max_deg;
  j["gen_loss_gw"] = report.gen_loss_gw;
  j["ufls_loss_gw"] = report.ufls_loss_gw;
  j["ldl_tripped_buses"] = report.ldl_tripped_buses;
  j["stable"] = report.stable;

  json gens = json::array();
  for (size_t g = 0; g < result.gen_ids.size(); ++g) {
    gens.push_back({{"id", result.gen_ids[g]},
                    {"bus", result.gen_buses[g]},
                    {"area", result.gen_areas[g]},
                    {"inertia_h", result.gen_inertia[g]}});
  }
  json invs = json::array();
  for (size_t i = 0; i < result.inv_ids.size(); ++i) {
    invs.push_back({{"id", result.inv_ids[i]},
                    {"bus", result.inv_buses[i]},
                    {"rating_pu", result.inv_ratings[i]}});
  }
  j["metadata"] = {
      {"scenario", result.scenario_name},
      {"config_hash", result.config_hash},
      {"status", result.status == RunStatus::completed ? "completed" : "aborted_unstable"},
      {"abort_reason", result.abort_reason},
      {"final_time_s", result.final_time},
      {"step_s", result.step},
      {"base_mva", result.base_mva},
      {"max_power_residual_pu", result.max_power_residual},
      {"generators", gens},
      {"inverters", invs},
  };

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

StabilityReport write_result_dir(const std::string& dir, const SimulationResult& result,
                                 SeriesFormat format) {
  OutputDirLock lock(dir);
  const fs::path base(dir);
  if (format == SeriesFormat::csv) {
    write_series_csv((base / "series.csv").string(), result);
  } else {
    write_series_json((base / "series.json").string(), result);
  }
  write_events_json((base / "events.json").string(), result);
  const StabilityReport report = aggregate_losses(result);
  write_report_json((base / "report.json").string(), result, report);
  return report;
}

SimulationResult read_result_dir(const std::string& dir) {
  const fs::path base(dir);
  SimulationResult result;

  // metadata first: device constants and run provenance
  {
    std::ifstream in(base / "report.json");
    if (!in) throw ConfigError("cannot open " + (base / "report.json").string());
    json j = json::parse(in);
    const json& meta = j.at("metadata");
    result.scenario_name = meta.value("scenario", std::string{});
    result.config_hash = meta.value("config_hash", std::string{});
    result.status = meta.value("status", std::string{"completed"}) == "completed"
                        ? RunStatus::completed
                        : RunStatus::aborted_unstable;
    result.abort_reason = meta.value("abort_reason", std::string{});
    result.final_time = meta.value("final_time_s", 0.0);
    result.step = meta.value("step_s", 0.0);
    result.base_mva = meta.value("base_mva", 100.0);
    result.max_power_residual = meta.value("max_power_residual_pu", 0.0);
    for (const auto& g : meta.value("generators", json::array())) {
      result.gen_ids.push_back(g.value("id", std::string{}));
      result.gen_buses.push_back(g.value("bus", 0));
      result.gen_areas.push_back(g.value("area", 1));
      result.gen_inertia.push_back(g.value("inertia_h", 1.0));
    }
    for (const auto& i : meta.value("inverters", json::array())) {
      result.inv_ids.push_back(i.value("id", std::string{}));
      result.inv_buses.push_back(i.value("bus", 0));
      result.inv_ratings.push_back(i.value("rating_pu", 0.0));
    }
  }

  {
    std::ifstream in(base / "events.json");
    if (!in) throw ConfigError("cannot open " + (base / "events.json").string());
    json j = json::parse(in);
    for (const auto& ev : j) result.events.push_back(event_from_json(ev));
  }

  result.gen_trip_time.assign(result.gen_ids.size(), -1.0);
  for (const EventRecord& ev : result.events) {
    if (ev.kind != EventKind::relay_trip || ev.device.rfind("gen:", 0) != 0) continue;
    const std::string id = ev.device.substr(4);
    for (size_t g = 0; g < result.gen_ids.size(); ++g) {
      if (result.gen_ids[g] == id) result.gen_trip_time[g] = ev.t;
    }
  }

  // series: csv preferred, json fallback
  SeriesTable tab;
  if (fs::exists(base / "series.csv")) {
    std::ifstream in(base / "series.csv");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty series.csv");
    for (const std::string& name : split_csv(line)) tab.header.push_back(name);
    tab.columns.assign(tab.header.size(), {});
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      for (size_t c = 0; c < cells.size() && c < tab.columns.size(); ++c) {
        tab.columns[c].push_back(std::strtod(cells[c].c_str(), nullptr));
      }
    }
  } else if (fs::exists(base / "series.json")) {
    std::ifstream in(base / "series.json");
    json j = json::parse(in);
    for (const auto& [key, value] : j.items()) {
      tab.header.push_back(key);
      tab.columns.push_back(value.get<std::vector<double>>());
    }
  } else {
    throw ConfigError("no series.csv or series.json in " + dir);
  }

  auto column = [&](const std::string& name) -> const std::vector<double>* {
    for (size_t c = 0; c < tab.header.size(); ++c) {
      if (tab.header[c] == name) return &tab.columns[c];
    }
    return nullptr;
  };

  if (const auto* t = column("t")) result.time = *t;
  if (const auto* spread = column("delta_spread_deg")) result.delta_spread_deg = *spread;

  for (size_t c = 0; c < tab.header.size(); ++c) {
    const std::string& name = tab.header[c];
    if (name.rfind("vm_", 0) == 0) {
      result.bus_ids.push_back(std::stoi(name.substr(3)));
      result.bus_v_mag.push_back(tab.columns[c]);
      if (const auto* va = column("va_" + name.substr(3))) {
        result.bus_v_angle.push_back(*va);
      } else {
        result.bus_v_angle.emplace_back(tab.columns[c].size(), 0.0);
      }
    }
  }
  for (size_t g = 0; g < result.gen_ids.size(); ++g) {
    const auto* delta = column("gen_" + result.gen_ids[g] + "_delta");
    const auto* omega = column("gen_" + result.gen_ids[g] + "_omega");
    if (!delta || !omega) throw ConfigError("series is missing generator columns");
    result.gen_angle.push_back(*delta);
    result.gen_speed.push_back(*omega);
  }
  for (size_t i = 0; i < result.inv_ids.size(); ++i) {
    const auto* p = column("inv_" + result.inv_ids[i] + "_p");
    const auto* q = column("inv_" + result.inv_ids[i] + "_q");
    const auto* f = column("inv_" + result.inv_ids[i] + "_f");
    result.inv_p.push_back(p ? *p : std::vector<double>{});
    result.inv_q.push_back(q ? *q : std::vector<double>{});
    result.inv_freq.push_back(f ? *f : std::vector<double>{});
  }
  return result;
}

}  // namespace gridfm
