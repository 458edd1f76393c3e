// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridfm/engine.hpp"
#include "gridfm/errors.hpp"
#include "gridfm/metrics.hpp"
#include "gridfm/result_io.hpp"
#include "gridfm/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gridfm {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAborted = 1;
constexpr int kExitConfig = 2;

struct CommonOpts {
  std::optional<double> step;
  std::optional<double> horizon;
  std::string out_dir;
  std::string format = "csv";
};

void apply_overrides(ScenarioConfig& cfg, const CommonOpts& opts) {
  if (opts.step) {
    cfg.solver.step = *opts.step;
    cfg.solver.event_tolerance = std::max(cfg.solver.event_tolerance, *opts.step);
  }
  if (opts.horizon) cfg.solver.horizon = *opts.horizon;
  const std::string err = cfg.solver.validate();
  if (!err.empty()) throw ConfigError(err);
}

SeriesFormat parse_format(const std::string& name) {
  if (name == "csv") return SeriesFormat::csv;
  if (name == "json") return SeriesFormat::json;
  throw ConfigError("unknown series format '" + name + "' (expected csv or json)");
}

void print_report(std::ostream& out, const std::string& name, const SimulationResult& result,
                  const StabilityReport& report) {
  out << "scenario:   " << name << "\n"
      << "status:     "
      << (result.status == RunStatus::completed ? "completed" : "aborted_unstable");
  if (!result.abort_reason.empty()) out << " (" << result.abort_reason << ")";
  out << "\n"
      << "TSI:        " << report.tsi << " (delta_max " << report.delta_max_deg << " deg)\n"
      << "gen loss:   " << report.gen_loss_gw << " GW\n"
      << "UFLS:       " << report.ufls_loss_gw << " GW\n"
      << "LDL trips:  ";
  if (report.ldl_tripped_buses.empty()) {
    out << "none";
  } else {
    for (size_t k = 0; k < report.ldl_tripped_buses.size(); ++k) {
      if (k) out << ", ";
      out << report.ldl_tripped_buses[k];
    }
  }
  out << "\n"
      << "balance:    max residual " << result.max_power_residual << " pu\n"
      << "events:     " << result.events.size() << "\n";
}

int cmd_run(const std::string& scenario_path, const CommonOpts& opts) {
  ScenarioConfig cfg = load_scenario(scenario_path);
  apply_overrides(cfg, opts);

  const std::string out_dir =
      opts.out_dir.empty() ? (fs::path("results") / cfg.name).string() : opts.out_dir;

  SimulationResult result = run_scenario(cfg);
  const StabilityReport report = write_result_dir(out_dir, result, parse_format(opts.format));
  print_report(std::cout, cfg.name, result, report);
  std::cout << "output:     " << out_dir << "\n";
  return result.status == RunStatus::completed ? kExitOk : kExitAborted;
}

struct BatchCell {
  std::string name;
  std::string row;
  std::string col;
  std::string scenario_path;  // empty for n/a cells
};

int cmd_batch(const std::string& sweep_path, const CommonOpts& opts, bool serial) {
  std::ifstream in(sweep_path);
  if (!in) throw ConfigError("cannot open sweep file: " + sweep_path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("sweep JSON parse error: ") + e.what());
  }

  const std::string base_dir = fs::path(sweep_path).parent_path().string();
  const std::string sweep_name = j.value("name", std::string{"sweep"});

  std::vector<BatchCell> cells;
  std::vector<ScenarioConfig> configs;
  std::vector<size_t> config_cell;  // cell index per config
  for (const auto& c : j.at("cells")) {
    BatchCell cell;
    cell.name = c.value("name", std::string{});
    cell.row = c.value("row", std::string{});
    cell.col = c.value("col", std::string{});
    if (!c.value("na", false)) {
      const std::string rel = c.at("scenario").get<std::string>();
      fs::path p(rel);
      cell.scenario_path =
          p.is_absolute() ? p.string() : (fs::path(base_dir) / p).lexically_normal().string();
      ScenarioConfig cfg = load_scenario(cell.scenario_path);
      apply_overrides(cfg, opts);
      config_cell.push_back(cells.size());
      configs.push_back(std::move(cfg));
    }
    cells.push_back(cell);
  }

  const std::string out_dir =
      opts.out_dir.empty() ? (fs::path("results") / sweep_name).string() : opts.out_dir;
  fs::create_directories(out_dir);

  const std::vector<SimulationResult> results = run_batch(configs, !serial);

  std::vector<ComparisonCell> table(cells.size());
  for (size_t k = 0; k < cells.size(); ++k) {
    table[k].row_label = cells[k].row;
    table[k].column_label = cells[k].col;
    table[k].not_applicable = cells[k].scenario_path.empty();
  }

  json report_cells = json::array();
  for (size_t r = 0; r < results.size(); ++r) {
    const size_t cell_idx = config_cell[r];
    const std::string cell_dir = (fs::path(out_dir) / cells[cell_idx].name).string();
    const SimulationResult& res = results[r];
    StabilityReport rep;
    bool failed = false;
    if (res.time.empty() && res.status == RunStatus::aborted_unstable) {
      failed = true;  // run threw before producing anything
    } else {
      rep = write_result_dir(cell_dir, res, parse_format(opts.format));
    }
    table[cell_idx].failed = failed;
    table[cell_idx].report = rep;
    report_cells.push_back({{"name", cells[cell_idx].name},
                            {"row", cells[cell_idx].row},
                            {"col", cells[cell_idx].col},
                            {"failed", failed},
                            {"status", res.status == RunStatus::completed ? "completed"
                                                                          : "aborted_unstable"},
                            {"tsi", rep.tsi},
                            {"gen_loss_gw", rep.gen_loss_gw},
                            {"ufls_loss_gw", rep.ufls_loss_gw},
                            {"ldl_tripped", rep.ldl_tripped_buses},
                            {"stable", rep.stable}});
  }

  const std::string text = format_comparison_table(table);
  std::cout << text;
  {
    std::ofstream tf(fs::path(out_dir) / "table.txt");
    tf << text;
    std::ofstream jf(fs::path(out_dir) / "table.json");
    jf << json{{"name", sweep_name}, {"cells", report_cells}}.dump(2) << "\n";
  }
  std::cout << "output:     " << out_dir << "\n";

  for (const SimulationResult& res : results) {
    if (res.status != RunStatus::completed && res.time.empty()) return kExitAborted;
  }
  return kExitOk;
}

int cmd_report(const std::string& result_dir) {
  const SimulationResult result = read_result_dir(result_dir);
  const StabilityReport report = aggregate_losses(result);
  write_report_json((fs::path(result_dir) / "report.json").string(), result, report);
  print_report(std::cout, result.scenario_name, result, report);
  return kExitOk;
}

int cmd_validate(const std::string& scenario_path) {
  const ScenarioConfig cfg = load_scenario(scenario_path);
  const NetworkData data = parse_network_file(cfg.network_path);
  const DeploymentPlan plan = resolve_deployment(cfg, data);
  for (const ProfileRef& ref : cfg.profile_refs) {
    read_profile_csv(ref.file, ref.id, ref.interp);
  }
  std::cout << "ok: " << cfg.name << " (" << data.model.bus_count() << " buses, "
            << data.model.branches().size() << " branches, " << data.generators.size()
            << " generators, " << data.loads.size() << " loads, " << plan.units.size()
            << " storage units, hash " << scenario_hash(cfg) << ")\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"gridfm - transient simulation of grid-forming storage networks"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string scenario_path, sweep_path, result_dir;
  bool serial = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--step", opts.step, "integration step override, s");
    cmd->add_option("--horizon", opts.horizon, "simulation horizon override, s");
    cmd->add_option("--out-dir", opts.out_dir, "output directory");
    cmd->add_option("--format", opts.format, "series format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* run = app.add_subcommand("run", "run one scenario and write result files");
  run->add_option("scenario", scenario_path, "scenario file")->required();
  add_common(run);

  CLI::App* batch = app.add_subcommand("batch", "run a sweep and emit a comparison table");
  batch->add_option("sweep", sweep_path, "sweep file")->required();
  batch->add_flag("--serial", serial, "run cells sequentially");
  add_common(batch);

  CLI::App* report = app.add_subcommand("report", "recompute metrics from a result directory");
  report->add_option("result", result_dir, "result directory")->required();

  CLI::App* validate = app.add_subcommand("validate", "validate a scenario file");
  validate->add_option("scenario", scenario_path, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(scenario_path, opts);
    if (batch->parsed()) return cmd_batch(sweep_path, opts, serial);
    if (report->parsed()) return cmd_report(result_dir);
    if (validate->parsed()) return cmd_validate(scenario_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InitializationError& e) {
    std::cerr << "initialization error: " << e.what() << "\n";
    return kExitAborted;
  } catch (const SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return kExitAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAborted;
  }
  return kExitConfig;
}

}  // namespace gridfm
