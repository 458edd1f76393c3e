// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "gridfm/cli.hpp"
#include "small_systems.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace gridfm;

namespace {

int cli(std::vector<std::string> args) {
  std::vector<const char*> argv{"gridfm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string quick_scenario(const fs::path& dir) {
  testutil::two_bus_net(dir);
  return testutil::write_file(dir / "quick.json", R"({
  "schema_version": 1, "name": "quick", "network": "two_bus.net",
  "solver": {"step_s": 0.001, "horizon_s": 0.3},
  "events": [{"t": 0.1, "kind": "switch_branch", "branch": [1, 2], "action": "close"}]
})");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate accepts a good scenario") {
  const auto dir = testutil::tmp_dir("cli_validate");
  CHECK(cli({"validate", quick_scenario(dir)}) == 0);
}

TEST_CASE("validate rejects a broken scenario with exit code 2") {
  const auto dir = testutil::tmp_dir("cli_validate_bad");
  const std::string path = testutil::write_file(dir / "bad.json", R"({
  "schema_version": 1, "name": "bad", "network": "missing.net"
})");
  CHECK(cli({"validate", path}) == 2);
  CHECK(cli({"validate", (dir / "does_not_exist.json").string()}) == 2);
}

TEST_CASE("run writes the result files") {
  const auto dir = testutil::tmp_dir("cli_run");
  const std::string scenario = quick_scenario(dir);
  const std::string out = (dir / "out").string();
  CHECK(cli({"run", scenario, "--out-dir", out}) == 0);
  CHECK(fs::exists(fs::path(out) / "series.csv"));
  CHECK(fs::exists(fs::path(out) / "events.json"));
  CHECK(fs::exists(fs::path(out) / "report.json"));
  CHECK(!fs::exists(fs::path(out) / ".gridfm.lock"));  // released
}

TEST_CASE("run honors step, horizon and format overrides") {
  const auto dir = testutil::tmp_dir("cli_run_json");
  const std::string scenario = quick_scenario(dir);
  const std::string out = (dir / "outj").string();
  CHECK(cli({"run", scenario, "--out-dir", out, "--format", "json", "--step", "0.002",
             "--horizon", "0.2"}) == 0);
  CHECK(fs::exists(fs::path(out) / "series.json"));
  CHECK(!fs::exists(fs::path(out) / "series.csv"));
}

TEST_CASE("report recomputes metrics from a result directory") {
  const auto dir = testutil::tmp_dir("cli_report");
  const std::string scenario = quick_scenario(dir);
  const std::string out = (dir / "out").string();
  REQUIRE(cli({"run", scenario, "--out-dir", out}) == 0);
  CHECK(cli({"report", out}) == 0);
  CHECK(cli({"report", (dir / "nowhere").string()}) != 0);
}

TEST_CASE("a locked output directory is refused") {
  const auto dir = testutil::tmp_dir("cli_lock");
  const std::string scenario = quick_scenario(dir);
  const std::string out = (dir / "busy").string();
  fs::create_directories(out);
  std::ofstream(fs::path(out) / ".gridfm.lock") << "held\n";
  CHECK(cli({"run", scenario, "--out-dir", out}) == 2);
}

TEST_CASE("batch emits a table and per-cell results") {
  const auto dir = testutil::tmp_dir("cli_batch");
  quick_scenario(dir);
  const std::string sweep = testutil::write_file(dir / "sweep.json", R"({
  "schema_version": 1,
  "name": "mini",
  "cells": [
    {"name": "a", "row": "Quick", "col": "first", "scenario": "quick.json"},
    {"name": "b", "row": "Quick", "col": "second", "scenario": "quick.json"},
    {"name": "c", "row": "Other", "col": "second", "na": true}
  ]
})");
  const std::string out = (dir / "sweep_out").string();
  CHECK(cli({"batch", sweep, "--out-dir", out, "--serial"}) == 0);
  CHECK(fs::exists(fs::path(out) / "table.txt"));
  CHECK(fs::exists(fs::path(out) / "table.json"));
  CHECK(fs::exists(fs::path(out) / "a" / "report.json"));
  CHECK(fs::exists(fs::path(out) / "b" / "series.csv"));
}

TEST_CASE("usage errors exit with the config code") {
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({}) == 2);
  CHECK(cli({"run"}) == 2);  // missing scenario argument
}

}  // TEST_SUITE
