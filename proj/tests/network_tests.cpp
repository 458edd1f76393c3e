// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <complex>

#include "gridfm/errors.hpp"
#include "gridfm/network.hpp"

using namespace gridfm;

namespace {

NetworkModel two_bus(Complex z = {0.0, 0.1}) {
  NetworkModel m;
  m.add_bus({.id = 1});
  m.add_bus({.id = 2});
  m.add_branch({.id = 1, .from_bus = 1, .to_bus = 2, .series_z = z});
  return m;
}

double max_abs_diff(const AdmittanceMatrix& a, const AdmittanceMatrix& b) {
  return (Eigen::MatrixXcd(a) - Eigen::MatrixXcd(b)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("ybus of a branchless network is the zero matrix") {
  NetworkModel m;
  for (int id : {1, 2, 3}) m.add_bus({.id = id});
  const AdmittanceMatrix y = build_ybus(m);
  CHECK(y.rows() == 3);
  CHECK(Eigen::MatrixXcd(y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two buses joined by z = j0.1") {
  const AdmittanceMatrix y = build_ybus(two_bus());
  const Eigen::MatrixXcd d(y);
  CHECK(std::abs(d(0, 0) - Complex(0, -10.0)) < 1e-12);
  CHECK(std::abs(d(1, 1) - Complex(0, -10.0)) < 1e-12);
  CHECK(std::abs(d(0, 1) - Complex(0, 10.0)) < 1e-12);
  CHECK(std::abs(d(1, 0) - Complex(0, 10.0)) < 1e-12);
}

TEST_CASE("three-bus triangle with equal z = j0.2") {
  NetworkModel m;
  for (int id : {1, 2, 3}) m.add_bus({.id = id});
  m.add_branch({.id = 1, .from_bus = 1, .to_bus = 2, .series_z = {0, 0.2}});
  m.add_branch({.id = 2, .from_bus = 2, .to_bus = 3, .series_z = {0, 0.2}});
  m.add_branch({.id = 3, .from_bus = 3, .to_bus = 1, .series_z = {0, 0.2}});
  const Eigen::MatrixXcd d(build_ybus(m));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Complex want = i == j ? Complex(0, -10.0) : Complex(0, 5.0);
      CHECK(std::abs(d(i, j) - want) < 1e-12);
    }
  }
}

TEST_CASE("dangling branch endpoint is rejected") {
  NetworkModel m;
  m.add_bus({.id = 1});
  CHECK_THROWS_AS(m.add_branch({.id = 1, .from_bus = 1, .to_bus = 9, .series_z = {0, 0.1}}),
                  ConfigError);
}

TEST_CASE("passive ybus is symmetric, taps included") {
  NetworkModel m;
  for (int id : {1, 2, 3, 4}) m.add_bus({.id = id});
  m.add_branch({.id = 1, .from_bus = 1, .to_bus = 2, .series_z = {0.002, 0.04}, .charging_b = 0.3});
  m.add_branch({.id = 2, .from_bus = 2, .to_bus = 3, .series_z = {0.0, 0.025}, .tap = 1.06});
  m.add_branch({.id = 3, .from_bus = 3, .to_bus = 4, .series_z = {0.001, 0.02}, .charging_b = 0.1});
  m.add_branch({.id = 4, .from_bus = 4, .to_bus = 1, .series_z = {0.0, 0.018}, .tap = 0.95});
  const Eigen::MatrixXcd d(build_ybus(m));
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("endpoint fault lands on the bus without a new node") {
  NetworkModel m = two_bus();
  const AdmittanceMatrix before = build_ybus(m);
  m.apply_fault({.branch_id = 1, .location_fraction = 0.0, .fault_admittance = {1e4, 0}});
  CHECK(m.node_count() == 2);
  CHECK(!m.fault_node().has_value());
  const Eigen::MatrixXcd d(build_ybus(m));
  CHECK(std::abs(d(0, 0) - (Eigen::MatrixXcd(before)(0, 0) + Complex(1e4, 0))) < 1e-9);
}

TEST_CASE("mid-line fault splits the branch at a transient node") {
  NetworkModel m = two_bus({0.0, 0.1});
  m.apply_fault({.branch_id = 1, .location_fraction = 0.5, .fault_admittance = {1e4, 0}});
  REQUIRE(m.node_count() == 3);
  REQUIRE(m.fault_node().has_value());
  const int f = *m.fault_node();
  const Eigen::MatrixXcd d(build_ybus(m));
  // Each half-line is z = j0.05, i.e. y = -j20.
  CHECK(std::abs(d(0, f) - Complex(0, 20.0)) < 1e-9);
  CHECK(std::abs(d(1, f) - Complex(0, 20.0)) < 1e-9);
  CHECK(std::abs(d(f, f) - (Complex(1e4, 0) + Complex(0, -40.0))) < 1e-9);
  // Original direct coupling is gone.
  CHECK(std::abs(d(0, 1)) < 1e-12);
}

TEST_CASE("fault on an open branch is a scenario error") {
  NetworkModel m = two_bus();
  m.switch_branch(1, false);
  CHECK_THROWS_AS(m.apply_fault({.branch_id = 1, .location_fraction = 0.5}), ScenarioError);
}

TEST_CASE("fault location outside [0,1] is rejected") {
  NetworkModel m = two_bus();
  CHECK_THROWS_AS(m.apply_fault({.branch_id = 1, .location_fraction = 1.5}), ScenarioError);
}

TEST_CASE("fault, clear, reconnect restores the original ybus") {
  NetworkModel m;
  for (int id : {50, 51, 52}) m.add_bus({.id = id});
  m.add_branch({.id = 1, .from_bus = 50, .to_bus = 52, .series_z = {0.0012, 0.0288}, .charging_b = 2.06});
  m.add_branch({.id = 2, .from_bus = 50, .to_bus = 51, .series_z = {0.0009, 0.0221}, .charging_b = 0.5});
  const AdmittanceMatrix original = build_ybus(m);

  m.apply_fault({.branch_id = 1, .location_fraction = 0.5, .fault_admittance = {1e4, 0}});
  CHECK(m.node_count() == 4);
  m.clear_fault();
  CHECK(m.switch_branch(1, false));
  CHECK(m.switch_branch(1, true));
  CHECK(max_abs_diff(build_ybus(m), original) < 1e-14);
}

TEST_CASE("opening the faulted branch removes the transient node") {
  NetworkModel m = two_bus();
  m.apply_fault({.branch_id = 1, .location_fraction = 0.5});
  CHECK(m.node_count() == 3);
  m.switch_branch(1, false);
  CHECK(!m.fault_active());
  CHECK(m.node_count() == 2);
}

TEST_CASE("opening a branch removes its ybus contribution") {
  NetworkModel m;
  for (int id : {1, 2, 3}) m.add_bus({.id = id});
  m.add_branch({.id = 1, .from_bus = 1, .to_bus = 2, .series_z = {0, 0.1}});
  m.add_branch({.id = 2, .from_bus = 2, .to_bus = 3, .series_z = {0, 0.2}});
  m.switch_branch(1, false);
  const Eigen::MatrixXcd d(build_ybus(m));
  CHECK(std::abs(d(0, 0)) == 0.0);
  CHECK(std::abs(d(0, 1)) == 0.0);
  CHECK(std::abs(d(1, 1) - Complex(0, -5.0)) < 1e-12);
}

TEST_CASE("closing an already-closed branch is a no-op") {
  NetworkModel m = two_bus();
  CHECK_FALSE(m.switch_branch(1, true));
  CHECK_THROWS_AS(m.switch_branch(99, true), ScenarioError);
}

TEST_CASE("solve_network: single bus is scalar division") {
  AdmittanceMatrix y(1, 1);
  y.insert(0, 0) = Complex(0, -10.0);
  ComplexVector inj(1);
  inj[0] = Complex(1.0, 0.0);
  const ComplexVector v = solve_network(y, inj);
  CHECK(std::abs(v[0] - inj[0] / Complex(0, -10.0)) < 1e-14);
}

TEST_CASE("solve_network matches a dense-inverse oracle") {
  NetworkModel m = two_bus();
  AdmittanceMatrix y = build_ybus(m);
  // Fold a source admittance so the system is regular.
  y.coeffRef(0, 0) += Complex(0.5, -5.0);
  ComplexVector inj(2);
  inj[0] = Complex(1.2, -0.3);
  inj[1] = Complex(-0.8, 0.1);

  const ComplexVector v = solve_network(y, inj);
  const Eigen::MatrixXcd dense(y);
  const ComplexVector oracle = dense.fullPivLu().solve(inj);
  CHECK((v - oracle).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((dense * v - inj).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("singular network is reported") {
  NetworkModel m = two_bus();  // no shunts, no sources: singular
  const AdmittanceMatrix y = build_ybus(m);
  ComplexVector inj = ComplexVector::Zero(2);
  CHECK_THROWS_AS(solve_network(y, inj), SimulationError);
}

TEST_CASE("cached solver reuses the factorization") {
  NetworkModel m = two_bus();
  AdmittanceMatrix y = build_ybus(m);
  y.coeffRef(0, 0) += Complex(0.0, -20.0);
  NetworkSolver solver;
  solver.factorize(y);
  ComplexVector inj(2);
  inj[0] = Complex(1.0, 0.0);
  inj[1] = Complex(0.0, 0.0);
  for (int k = 0; k < 3; ++k) {
    const ComplexVector v = solver.solve(inj);
    CHECK(solver.residual(v, inj) < 1e-12);
    inj[1] += Complex(0.1, 0.05);
  }
}

TEST_CASE("connected components track switching") {
  NetworkModel m;
  for (int id : {1, 2, 3, 4}) m.add_bus({.id = id});
  m.add_branch({.id = 1, .from_bus = 1, .to_bus = 2, .series_z = {0, 0.1}});
  m.add_branch({.id = 2, .from_bus = 3, .to_bus = 4, .series_z = {0, 0.1}});
  CHECK(m.connected_components().size() == 2);
  m.add_branch({.id = 3, .from_bus = 2, .to_bus = 3, .series_z = {0, 0.1}});
  CHECK(m.connected_components().size() == 1);
  m.switch_branch(3, false);
  CHECK(m.connected_components().size() == 2);
}

}  // TEST_SUITE
