// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <filesystem>

#include "gridfm/engine.hpp"
#include "gridfm/network.hpp"
#include "gridfm/power_flow.hpp"
#include "gridfm/scenario.hpp"

namespace fs = std::filesystem;
using namespace gridfm;

namespace {

std::string data_file(const char* rel) {
  return (fs::path(GRIDFM_DATA_DIR) / rel).string();
}

const NetworkData& network68() {
  static NetworkData data = parse_network_file(data_file("networks/ieee68.net"));
  return data;
}

void BM_BuildYbus68(benchmark::State& state) {
  const NetworkData& data = network68();
  for (auto _ : state) {
    benchmark::DoNotOptimize(data.model.build_ybus());
  }
}
BENCHMARK(BM_BuildYbus68);

void BM_Factorize68(benchmark::State& state) {
  const AdmittanceMatrix y = [&] {
    AdmittanceMatrix m = network68().model.build_ybus();
    for (const GeneratorState& g : network68().generators) {
      const int node = network68().model.node_of_bus(g.bus);
      m.coeffRef(node, node) += g.norton_admittance();
    }
    return m;
  }();
  NetworkSolver solver;
  for (auto _ : state) {
    solver.factorize(y);
    benchmark::DoNotOptimize(solver.ready());
  }
}
BENCHMARK(BM_Factorize68);

void BM_NetworkSolve68(benchmark::State& state) {
  AdmittanceMatrix y = network68().model.build_ybus();
  for (const GeneratorState& g : network68().generators) {
    const int node = network68().model.node_of_bus(g.bus);
    y.coeffRef(node, node) += g.norton_admittance();
  }
  NetworkSolver solver;
  solver.factorize(y);
  ComplexVector inj = ComplexVector::Constant(y.rows(), Complex(0.1, -0.02));
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver.solve(inj));
  }
}
BENCHMARK(BM_NetworkSolve68);

void BM_PowerFlow68(benchmark::State& state) {
  const NetworkData& data = network68();
  std::map<int, double> sched;
  for (const GeneratorState& g : data.generators) {
    if (data.model.bus(g.bus).kind == BusKind::pv) sched[g.bus] += g.mech_power;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_power_flow(data.model, data.loads, {}, sched));
  }
}
BENCHMARK(BM_PowerFlow68);

void BM_SimSecond68(benchmark::State& state) {
  ScenarioConfig cfg = load_scenario(data_file("scenarios/ieee68_flat.json"));
  cfg.solver.horizon = 1.0;
  cfg.solver.record_every = 1000000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_scenario(cfg));
  }
}
BENCHMARK(BM_SimSecond68)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
