// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gridfm/errors.hpp"
#include "gridfm/scenario.hpp"
#include "small_systems.hpp"
#include "test_util.hpp"

using namespace gridfm;
namespace fs = std::filesystem;

namespace {

std::string minimal_scenario(const fs::path& dir, const std::string& extra = "") {
  const std::string net = testutil::two_bus_net(dir);
  return testutil::write_file(dir / "scn.json", R"({
  // minimal scenario
  "schema_version": 1,
  "name": "unit",
  "network": "two_bus.net",
  "solver": {"step_s": 0.001, "horizon_s": 1.0}
)" + extra + "\n}\n");
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("minimal scenario loads with defaults") {
  const auto dir = testutil::tmp_dir("scn_minimal");
  const ScenarioConfig cfg = load_scenario(minimal_scenario(dir));
  CHECK(cfg.name == "unit");
  CHECK(cfg.solver.step == 0.001);
  CHECK(cfg.storage.deployment == StorageDeployment::none);
  CHECK(cfg.coordination.mode == CoordinationMode::none);
  CHECK(cfg.protection.ldl_lvrt.segments.size() == 3);
  CHECK(fs::path(cfg.network_path).is_absolute());
}

TEST_CASE("all violations are collected, not just the first") {
  const auto dir = testutil::tmp_dir("scn_bad");
  testutil::two_bus_net(dir);
  const std::string path = testutil::write_file(dir / "bad.json", R"({
  "schema_version": 1,
  "name": "bad",
  "network": "nope.net",
  "storage": {"deployment": "embedded", "penetration_pct": 0,
              "buses": [2, 2], "fleet_rating_pu": 18.4},
  "coordination": {"mode": "sideways"}
})");
  try {
    load_scenario(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() >= 3);
    const std::string what = e.what();
    CHECK(what.find("penetration_pct") != std::string::npos);
    CHECK(what.find("duplicate storage bus") != std::string::npos);
    CHECK(what.find("sideways") != std::string::npos);
  }
}

TEST_CASE("serialization round-trips exactly") {
  const auto dir = testutil::tmp_dir("scn_roundtrip");
  testutil::flat_profile(dir, "p.csv", 1.0);
  testutil::two_bus_net(dir);
  const std::string path = testutil::write_file(dir / "full.json", R"({
  "schema_version": 1,
  "name": "round",
  "network": "two_bus.net",
  "solver": {"step_s": 0.002, "horizon_s": 3.5, "integrator": "trapezoidal", "record_every": 4},
  "profiles": [{"id": "p", "file": "p.csv", "interpolation": "hold"}],
  "ldl": [{"bus": 2, "profile": "p", "zip": [0.2, 0.3, 0.5], "q_to_p": 0.1}],
  "storage": {"deployment": "embedded", "buses": [2], "fleet_rating_pu": 2.5,
              "inverter": {"active_droop": 0.04}, "overrides": [{"bus": 2, "rating_pu": 2.5}]},
  "coordination": {"mode": "layered",
                   "safety": {"v_band": [0.9, 1.08], "f_band_hz": [59.2, 60.8]},
                   "consensus": {"update_period_s": 0.2, "k_share": 1.5},
                   "graph": {"edges": [[2, 2]]}},
  "events": [{"t": 1.0, "kind": "switch_branch", "branch": [1, 2], "action": "open"},
             {"t": 2.0, "kind": "profile_milestone", "label": "checkpoint"}],
  "load_defaults": {"zip_p": [0.4, 0.3, 0.3], "zip_q": [0.5, 0.25, 0.25], "voltage_floor": 0.45}
})");

  const ScenarioConfig first = load_scenario(path);
  const std::string ser1 = serialize_scenario(first);
  const std::string repath = testutil::write_file(dir / "reserialized.json", ser1);
  const ScenarioConfig second = load_scenario(repath);
  const std::string ser2 = serialize_scenario(second);
  CHECK(ser1 == ser2);
  CHECK(scenario_hash(first) == scenario_hash(second));
}

TEST_CASE("hash differs when the config differs") {
  const auto dir = testutil::tmp_dir("scn_hash");
  const ScenarioConfig a = load_scenario(minimal_scenario(dir));
  ScenarioConfig b = a;
  b.solver.horizon = 2.0;
  CHECK(scenario_hash(a) != scenario_hash(b));
  CHECK(scenario_hash(a) == scenario_hash(a));
}

TEST_CASE("network parser reports location of bad records") {
  const auto dir = testutil::tmp_dir("scn_netbad");
  const std::string path = testutil::write_file(dir / "bad.net", R"(base_mva 100
[buses]
1 1 345 slack 1.0
2 1 345 banana 1.0
)");
  try {
    parse_network_file(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.net:4") != std::string::npos);
  }
}

TEST_CASE("load buses order by descending size") {
  const auto dir = testutil::tmp_dir("scn_order");
  const std::string path = testutil::write_file(dir / "n.net", R"(base_mva 100
[buses]
1 1 345 slack 1.0
2 1 345 pq 1.0
3 1 345 pq 1.0
4 1 345 pq 1.0
[branches]
1 2 0.0 0.1 0.0 1.0 1
2 3 0.0 0.1 0.0 1.0 1
3 4 0.0 0.1 0.0 1.0 1
[generators]
G1 1 5 2 0.1 0.0125 0.5 0
[loads]
L2 2 100 0
L3 3 300 0
L4 4 300 0
)");
  const NetworkData data = parse_network_file(path);
  CHECK(data.load_buses_by_size() == std::vector<int>{3, 4, 2});
}

TEST_CASE("collocated deployment splits the fleet over the LDL buses") {
  const auto dir = testutil::tmp_dir("scn_colloc");
  // Five LDL buses on a star network.
  std::string net = "base_mva 100\n[buses]\n1 1 345 slack 1.0\n";
  std::string branches = "[branches]\n";
  for (int b = 2; b <= 6; ++b) {
    net += std::to_string(b) + " 1 345 pq 1.0\n";
    branches += "1 " + std::to_string(b) + " 0.0 0.1 0.0 1.0 1\n";
  }
  net += branches;
  net += "[generators]\nG1 1 5 2 0.1 0.0125 0.5 0\n[loads]\n";
  for (int b = 2; b <= 6; ++b) net += "L" + std::to_string(b) + " " + std::to_string(b) + " 50 0\n";
  const std::string net_path = testutil::write_file(dir / "star.net", net);

  testutil::flat_profile(dir, "p.csv", 1.0);
  std::string ldl = R"("profiles": [{"id": "p", "file": "p.csv"}], "ldl": [)";
  for (int b = 2; b <= 6; ++b) {
    ldl += std::string(b > 2 ? "," : "") + R"({"bus": )" + std::to_string(b) + R"(, "profile": "p"})";
  }
  ldl += "]";
  const std::string path = testutil::write_file(dir / "s.json", R"({
  "schema_version": 1, "name": "colloc", "network": "star.net", )" + ldl + R"(,
  "storage": {"deployment": "collocated", "fleet_rating_pu": 18.4}
})");

  const ScenarioConfig cfg = load_scenario(path);
  const NetworkData data = parse_network_file(net_path);
  const DeploymentPlan plan = resolve_deployment(cfg, data);
  REQUIRE(plan.units.size() == 5);
  for (const auto& u : plan.units) CHECK(u.rating == doctest::Approx(3.68).epsilon(1e-12));
  CHECK(plan.total_rating() == doctest::Approx(18.4).epsilon(1e-9));
}

TEST_CASE("full-embedded deployment is a uniform split over load buses") {
  const auto dir = testutil::tmp_dir("scn_embed");
  testutil::two_bus_net(dir);
  const std::string path = testutil::write_file(dir / "s.json", R"({
  "schema_version": 1, "name": "full", "network": "two_bus.net",
  "storage": {"deployment": "embedded", "penetration_pct": 100, "fleet_rating_pu": 18.4}
})");
  const ScenarioConfig cfg = load_scenario(path);
  const NetworkData data = parse_network_file(cfg.network_path);
  const DeploymentPlan plan = resolve_deployment(cfg, data);
  REQUIRE(plan.units.size() == 1);  // single load bus in the two-bus system
  CHECK(plan.units[0].rating == doctest::Approx(18.4));
}

TEST_CASE("deployment resolution is deterministic") {
  const auto dir = testutil::tmp_dir("scn_det");
  const std::string net = testutil::write_file(dir / "n.net", R"(base_mva 100
[buses]
1 1 345 slack 1.0
2 1 345 pq 1.0
3 1 345 pq 1.0
4 1 345 pq 1.0
5 1 345 pq 1.0
[branches]
1 2 0.0 0.1 0.0 1.0 1
2 3 0.0 0.1 0.0 1.0 1
3 4 0.0 0.1 0.0 1.0 1
4 5 0.0 0.1 0.0 1.0 1
[generators]
G1 1 5 2 0.1 0.0125 0.5 0
[loads]
L2 2 100 0
L3 3 200 0
L4 4 150 0
L5 5 150 0
)");
  const std::string path = testutil::write_file(dir / "s.json", R"({
  "schema_version": 1, "name": "pen", "network": "n.net",
  "storage": {"deployment": "embedded", "penetration_pct": 50, "fleet_rating_pu": 4.0}
})");
  const ScenarioConfig cfg = load_scenario(path);
  const NetworkData data = parse_network_file(net);
  const DeploymentPlan a = resolve_deployment(cfg, data);
  const DeploymentPlan b = resolve_deployment(cfg, data);
  REQUIRE(a.units.size() == 2);  // half of four load buses
  CHECK(a.units[0].bus == b.units[0].bus);
  CHECK(a.units[1].bus == b.units[1].bus);
  // Largest loads picked first: bus 3 (200) and bus 4 (150, id order).
  CHECK(a.units[0].bus == 3);
  CHECK(a.units[1].bus == 4);
}

TEST_CASE("rating overrides preserve the fleet total") {
  const auto dir = testutil::tmp_dir("scn_override");
  const std::string net = testutil::write_file(dir / "n.net", R"(base_mva 100
[buses]
1 1 345 slack 1.0
2 1 345 pq 1.0
3 1 345 pq 1.0
[branches]
1 2 0.0 0.1 0.0 1.0 1
2 3 0.0 0.1 0.0 1.0 1
[generators]
G1 1 5 2 0.1 0.0125 0.5 0
[loads]
L2 2 100 0
L3 3 100 0
)");
  const std::string path = testutil::write_file(dir / "s.json", R"({
  "schema_version": 1, "name": "ov", "network": "n.net",
  "storage": {"deployment": "embedded", "buses": [2, 3], "fleet_rating_pu": 10.0,
              "overrides": [{"bus": 2, "rating_pu": 7.5}]}
})");
  const ScenarioConfig cfg = load_scenario(path);
  const DeploymentPlan plan = resolve_deployment(cfg, parse_network_file(net));
  REQUIRE(plan.units.size() == 2);
  CHECK(plan.units[0].rating == doctest::Approx(7.5));
  CHECK(plan.units[1].rating == doctest::Approx(2.5));

  ScenarioConfig over = cfg;
  over.storage.rating_overrides[2] = 12.0;  // exceeds the fleet
  CHECK_THROWS_AS(resolve_deployment(over, parse_network_file(net)), ConfigError);
}

TEST_CASE("unknown event kinds and bad branches are rejected") {
  const auto dir = testutil::tmp_dir("scn_events");
  testutil::two_bus_net(dir);
  const std::string path = testutil::write_file(dir / "s.json", R"({
  "schema_version": 1, "name": "ev", "network": "two_bus.net",
  "events": [{"t": 1.0, "kind": "teleport"}]
})");
  CHECK_THROWS_AS(load_scenario(path), ConfigError);
}

TEST_CASE("profile csv validation") {
  const auto dir = testutil::tmp_dir("scn_profiles");
  const std::string good = testutil::write_file(dir / "good.csv", "time_s,p_pu\n0,1\n1,2\n");
  const LoadProfile p = read_profile_csv(good, "good", LoadProfile::Interp::linear);
  CHECK(p.time_s.size() == 2);

  const std::string unsorted = testutil::write_file(dir / "bad1.csv", "0,1\n0,2\n");
  CHECK_THROWS_AS(read_profile_csv(unsorted, "bad1", LoadProfile::Interp::hold), ConfigError);
  const std::string negative = testutil::write_file(dir / "bad2.csv", "0,-1\n");
  CHECK_THROWS_AS(read_profile_csv(negative, "bad2", LoadProfile::Interp::hold), ConfigError);
  const std::string empty = testutil::write_file(dir / "bad3.csv", "# nothing\n");
  CHECK_THROWS_AS(read_profile_csv(empty, "bad3", LoadProfile::Interp::hold), ConfigError);
}

}  // TEST_SUITE
