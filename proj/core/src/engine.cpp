// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <queue>
#include <sstream>
#include <thread>

#include "gridfm/errors.hpp"

namespace gridfm {

namespace {

constexpr double kFixedPointTol = 1.0e-11;
constexpr int kFixedPointMaxIter = 80;
constexpr double kDivergenceBound = 1.0e6;
constexpr double kFreqFilterTau = 0.05;  // bus frequency estimate low-pass, s

std::string device_label(const char* prefix, const std::string& id) {
  return std::string(prefix) + ":" + id;
}

std::string branch_label(const Branch& br) {
  return "branch:" + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
}

}  // namespace

Simulation::Simulation(ScenarioConfig config) : config_(std::move(config)) {}

void Simulation::initialize() {
  if (initialized_) return;

  data_ = parse_network_file(config_.network_path);
  profiles_.clear();
  for (const ProfileRef& ref : config_.profile_refs) {
    profiles_.push_back(read_profile_csv(ref.file, ref.id, ref.interp));
  }

  build_devices();
  build_comm_graph();
  resolve_schedule();
  check_islands_sourced();
  init_steady_state();
  init_measurements();

  // protection state
  gen_v_relay_.assign(gens_.size(), {});
  gen_f_relay_.assign(gens_.size(), {});
  inv_v_relay_.assign(invs_.size(), {});
  inv_f_relay_.assign(invs_.size(), {});
  ldl_relay_.assign(loads_.size(), {});
  ufls_state_.clear();
  for (const ZipLoad& load : loads_) {
    if (!load.is_ldl && load.p_nominal > 0.0) {
      ufls_state_[load.bus] = {};
    }
  }

  // coordination state
  consensus_.assign(invs_.size(), {});
  for (size_t i = 0; i < invs_.size(); ++i) {
    consensus_[i].p_norm = invs_[i].filtered_p / invs_[i].rating;
    consensus_[i].q_norm = invs_[i].filtered_q / invs_[i].rating;
    consensus_[i].in_service = !invs_[i].tripped;
  }
  consensus_history_.clear();
  consensus_history_.push_front(consensus_);
  next_round_ = config_.coordination.update_period;

  effective_setpoints_.assign(invs_.size(), {});
  for (size_t i = 0; i < invs_.size(); ++i) {
    effective_setpoints_[i] = {invs_[i].p_setpoint, invs_[i].q_setpoint};
  }

  power_integral_.assign(invs_.size(), 0.0);
  energy_start_.resize(invs_.size());
  for (size_t i = 0; i < invs_.size(); ++i) energy_start_[i] = invs_[i].energy;

  // result skeleton
  result_ = SimulationResult{};
  result_.scenario_name = config_.name;
  result_.config_hash = scenario_hash(config_);
  result_.step = config_.solver.step;
  result_.base_mva = data_.base_mva;
  for (const Bus& bus : data_.model.buses()) result_.bus_ids.push_back(bus.id);
  result_.bus_v_mag.assign(result_.bus_ids.size(), {});
  result_.bus_v_angle.assign(result_.bus_ids.size(), {});
  for (const GeneratorState& g : gens_) {
    result_.gen_ids.push_back(g.id);
    result_.gen_buses.push_back(g.bus);
    result_.gen_areas.push_back(data_.model.bus(g.bus).area);
    result_.gen_inertia.push_back(g.inertia_h);
  }
  result_.gen_angle.assign(gens_.size(), {});
  result_.gen_speed.assign(gens_.size(), {});
  result_.gen_trip_time.assign(gens_.size(), -1.0);
  for (const GfmInverterState& inv : invs_) {
    result_.inv_ids.push_back(inv.id);
    result_.inv_buses.push_back(inv.bus);
    result_.inv_ratings.push_back(inv.rating);
  }
  result_.inv_p.assign(invs_.size(), {});
  result_.inv_q.assign(invs_.size(), {});
  result_.inv_freq.assign(invs_.size(), {});

  state_.assign(state_size(), 0.0);
  deriv_.assign(state_size(), 0.0);
  stage_state_.assign(state_size(), 0.0);
  k1_ = k2_ = k3_ = k4_ = state_;
  pack_state(state_);

  // The run must start at equilibrium: one derivative evaluation at t = 0
  // bounds the residual left by initialization.
  ComplexVector v_check = v_;
  rhs(0.0, state_, deriv_, v_check);
  max_init_derivative_ = 0.0;
  for (double d : deriv_) max_init_derivative_ = std::max(max_init_derivative_, std::abs(d));

  initialized_ = true;
}

void Simulation::build_devices() {
  gens_ = data_.generators;
  loads_ = data_.loads;

  for (ZipLoad& load : loads_) {
    load.zp_z = config_.load_defaults.zip_z;
    load.zp_i = config_.load_defaults.zip_i;
    load.zp_p = config_.load_defaults.zip_p;
    load.zq_z = config_.load_defaults.zq_z;
    load.zq_i = config_.load_defaults.zq_i;
    load.zq_p = config_.load_defaults.zq_p;
    load.voltage_floor = config_.load_defaults.voltage_floor;
  }

  for (const LdlConfig& ldl : config_.ldls) {
    if (!data_.model.has_bus(ldl.bus)) {
      throw ConfigError("LDL references unknown bus " + std::to_string(ldl.bus));
    }
    ZipLoad load;
    load.id = "LDL" + std::to_string(ldl.bus);
    load.bus = ldl.bus;
    load.zp_z = ldl.zip_z;
    load.zp_i = ldl.zip_i;
    load.zp_p = ldl.zip_p;
    load.zq_z = ldl.zip_z;
    load.zq_i = ldl.zip_i;
    load.zq_p = ldl.zip_p;
    load.q_to_p_ratio = ldl.q_to_p_ratio;
    load.voltage_floor = config_.load_defaults.voltage_floor;
    load.is_ldl = true;
    int profile_index = -1;
    for (size_t p = 0; p < profiles_.size(); ++p) {
      if (profiles_[p].id == ldl.profile_id) profile_index = static_cast<int>(p);
    }
    if (profile_index < 0) {
      throw ConfigError("LDL at bus " + std::to_string(ldl.bus) +
                        ": profile '" + ldl.profile_id + "' not loaded");
    }
    load.profile_index = profile_index;
    loads_.push_back(load);
  }

  invs_.clear();
  const DeploymentPlan plan = resolve_deployment(config_, data_);
  for (const DeploymentPlan::Unit& unit : plan.units) {
    GfmInverterState inv;
    inv.id = "S" + std::to_string(unit.bus);
    inv.bus = unit.bus;
    inv.rating = unit.rating;
    inv.active_droop = config_.storage.active_droop;
    inv.reactive_droop = config_.storage.reactive_droop;
    inv.filter_tau = config_.storage.filter_tau;
    inv.coupling_r = config_.storage.coupling_r;
    inv.coupling_x = config_.storage.coupling_x;
    inv.overload_factor = config_.storage.overload_factor;
    inv.capacity_hours = config_.storage.capacity_hours;
    inv.energy = 0.5 * inv.capacity_hours * inv.rating;  // start half charged
    invs_.push_back(inv);
  }
}

void Simulation::build_comm_graph() {
  graph_ = CommGraph{};
  graph_.node_count = static_cast<int>(invs_.size());
  graph_.update_period = config_.coordination.update_period;
  graph_.latency = config_.coordination.latency;
  if (invs_.empty()) return;

  std::map<int, int> bus_to_node;
  for (size_t i = 0; i < invs_.size(); ++i) bus_to_node[invs_[i].bus] = static_cast<int>(i);

  if (!config_.coordination.edges.empty()) {
    for (const auto& e : config_.coordination.edges) {
      const auto a = bus_to_node.find(e[0]);
      const auto b = bus_to_node.find(e[1]);
      if (a == bus_to_node.end() || b == bus_to_node.end()) {
        throw ConfigError("communication edge references a bus without storage: " +
                          std::to_string(e[0]) + "-" + std::to_string(e[1]));
      }
      graph_.edges.push_back({a->second, b->second, 1.0});
    }
    return;
  }

  // Default topology: each unit talks to its electrically nearest peers,
  // with distance measured as shortest-path series reactance.
  const int nb = data_.model.bus_count();
  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<size_t>(nb));
  for (const Branch& br : data_.model.branches()) {
    if (!br.in_service) continue;
    const int i = data_.model.node_of_bus(br.from_bus);
    const int j = data_.model.node_of_bus(br.to_bus);
    const double w = std::max(1.0e-6, std::abs(br.series_z.imag()));
    adj[static_cast<size_t>(i)].push_back({j, w});
    adj[static_cast<size_t>(j)].push_back({i, w});
  }

  auto shortest_from = [&](int src) {
    std::vector<double> dist(static_cast<size_t>(nb), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<size_t>(src)] = 0.0;
    pq.push({0.0, src});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[static_cast<size_t>(u)]) continue;
      for (auto [v, w] : adj[static_cast<size_t>(u)]) {
        if (d + w < dist[static_cast<size_t>(v)]) {
          dist[static_cast<size_t>(v)] = d + w;
          pq.push({d + w, v});
        }
      }
    }
    return dist;
  };

  const size_t n = invs_.size();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    const auto d = shortest_from(data_.model.node_of_bus(invs_[i].bus));
    for (size_t j = 0; j < n; ++j) {
      dist[i][j] = d[static_cast<size_t>(data_.model.node_of_bus(invs_[j].bus))];
    }
  }

  std::vector<std::pair<int, int>> edges;
  auto add_edge = [&](int a, int b) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    if (std::find(edges.begin(), edges.end(), std::make_pair(a, b)) == edges.end()) {
      edges.push_back({a, b});
    }
  };

  const int k = std::max(1, std::min(config_.coordination.electrical_neighbors,
                                     static_cast<int>(n) - 1));
  for (size_t i = 0; i < n; ++i) {
    std::vector<int> order;
    for (size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(static_cast<int>(j));
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (dist[i][static_cast<size_t>(a)] != dist[i][static_cast<size_t>(b)]) {
        return dist[i][static_cast<size_t>(a)] < dist[i][static_cast<size_t>(b)];
      }
      return invs_[static_cast<size_t>(a)].bus < invs_[static_cast<size_t>(b)].bus;
    });
    for (int j = 0; j < k && j < static_cast<int>(order.size()); ++j) {
      add_edge(static_cast<int>(i), order[static_cast<size_t>(j)]);
    }
  }

  for (const auto& [a, b] : edges) graph_.edges.push_back({a, b, 1.0});

  // Stitch disconnected clusters through their closest pair.
  std::vector<char> all_alive(n, 1);
  while (!graph_.connected(std::span<const char>(all_alive.data(), n))) {
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> nodes_adj(n);
    for (const CommGraph::Edge& e : graph_.edges) {
      nodes_adj[static_cast<size_t>(e.a)].push_back(e.b);
      nodes_adj[static_cast<size_t>(e.b)].push_back(e.a);
    }
    int nc = 0;
    for (size_t s = 0; s < n; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<size_t> stack{s};
      comp[s] = nc;
      while (!stack.empty()) {
        const size_t u = stack.back();
        stack.pop_back();
        for (int v : nodes_adj[u]) {
          if (comp[static_cast<size_t>(v)] < 0) {
            comp[static_cast<size_t>(v)] = nc;
            stack.push_back(static_cast<size_t>(v));
          }
        }
      }
      ++nc;
    }
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> pick{-1, -1};
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        if (comp[i] == comp[j]) continue;
        if (dist[i][j] < best) {
          best = dist[i][j];
          pick = {static_cast<int>(i), static_cast<int>(j)};
        }
      }
    }
    graph_.edges.push_back({pick.first, pick.second, 1.0});
  }
}

void Simulation::resolve_schedule() {
  schedule_.clear();
  for (const ScheduledEvent& ev : config_.events) {
    ResolvedEvent res;
    res.ev = ev;
    if (ev.kind == EventKind::apply_fault || ev.kind == EventKind::clear_fault ||
        ev.kind == EventKind::switch_branch) {
      res.branch_id = data_.model.find_branch(ev.from_bus, ev.to_bus);
      if (res.branch_id < 0) {
        throw ScenarioError("event references unknown branch " + std::to_string(ev.from_bus) +
                            "-" + std::to_string(ev.to_bus));
      }
    }
    schedule_.push_back(res);
  }
  std::stable_sort(schedule_.begin(), schedule_.end(),
                   [](const ResolvedEvent& a, const ResolvedEvent& b) {
                     if (a.ev.t != b.ev.t) return a.ev.t < b.ev.t;
                     if (event_priority(a.ev.kind) != event_priority(b.ev.kind)) {
                       return event_priority(a.ev.kind) < event_priority(b.ev.kind);
                     }
                     return a.ev.device < b.ev.device;
                   });
  next_event_ = 0;
}

void Simulation::check_islands_sourced() const {
  const auto comps = data_.model.connected_components();
  if (comps.size() <= 1 && !comps.empty()) return;
  for (const auto& comp : comps) {
    bool sourced = false;
    for (const GeneratorState& g : gens_) {
      if (!g.tripped &&
          std::find(comp.begin(), comp.end(), data_.model.node_of_bus(g.bus)) != comp.end()) {
        sourced = true;
      }
    }
    for (const GfmInverterState& inv : invs_) {
      if (!inv.tripped &&
          std::find(comp.begin(), comp.end(), data_.model.node_of_bus(inv.bus)) != comp.end()) {
        sourced = true;
      }
    }
    if (!sourced) {
      std::ostringstream ss;
      ss << "island without any source device, buses:";
      for (int node : comp) {
        if (node < data_.model.bus_count()) {
          ss << " " << data_.model.buses()[static_cast<size_t>(node)].id;
        }
      }
      throw ConfigError(ss.str());
    }
  }
}

void Simulation::init_steady_state() {
  std::map<int, double> scheduled;
  for (const GeneratorState& g : gens_) {
    if (data_.model.bus(g.bus).kind != BusKind::slack) scheduled[g.bus] += g.mech_power;
  }

  PowerFlowResult pf = solve_power_flow(data_.model, loads_, profiles_, scheduled);
  v_ = pf.voltage;

  // Back-solve device internal states from the bus solution.
  for (const auto& [bus_id, s_gen] : pf.bus_generation) {
    const int node = data_.model.node_of_bus(bus_id);
    const Complex v = v_[node];

    std::vector<size_t> gens_here;
    for (size_t g = 0; g < gens_.size(); ++g) {
      if (gens_[g].bus == bus_id) gens_here.push_back(g);
    }
    std::vector<size_t> invs_here;
    for (size_t i = 0; i < invs_.size(); ++i) {
      if (invs_[i].bus == bus_id) invs_here.push_back(i);
    }

    if (!gens_here.empty()) {
      double p_total = 0.0;
      for (size_t g : gens_here) p_total += gens_[g].mech_power;
      for (size_t g : gens_here) {
        GeneratorState& gen = gens_[g];
        const double share = p_total > 0.0 ? gen.mech_power / p_total
                                           : 1.0 / static_cast<double>(gens_here.size());
        const Complex s(s_gen.real() * share, s_gen.imag() * share);
        const Complex current = std::conj(s / v);
        const Complex emf = v + Complex(0.0, gen.xdp) * current;
        gen.emf_mag = std::abs(emf);
        gen.rotor_angle = std::arg(emf);
        gen.speed = 1.0;
        gen.gov_response = 0.0;
        gen.mech_power = (emf * std::conj(current)).real();
      }
    } else if (!invs_here.empty()) {
      const double share = 1.0 / static_cast<double>(invs_here.size());
      for (size_t i : invs_here) {
        GfmInverterState& inv = invs_[i];
        const Complex s = s_gen * share;
        const Complex current = std::conj(s / v);
        const Complex emf = v + inv.coupling_z() * current;
        inv.angle = std::arg(emf);
        inv.volt_setpoint = std::abs(emf);
        inv.p_setpoint = s.real();
        inv.q_setpoint = s.imag();
        inv.filtered_p = s.real();
        inv.filtered_q = s.imag();
      }
    } else {
      throw InitializationError("source bus " + std::to_string(bus_id) +
                                " has no generator or storage device");
    }
  }

  // Floating storage units at pq buses hold their bus voltage exactly.
  for (GfmInverterState& inv : invs_) {
    if (data_.model.bus(inv.bus).kind != BusKind::pq) continue;
    const Complex v = v_[data_.model.node_of_bus(inv.bus)];
    inv.angle = std::arg(v);
    inv.volt_setpoint = std::abs(v);
    inv.p_setpoint = 0.0;
    inv.q_setpoint = 0.0;
    inv.filtered_p = 0.0;
    inv.filtered_q = 0.0;
  }

  need_refactor_ = true;
  refactorize();
}

void Simulation::init_measurements() {
  const int nb = data_.model.bus_count();
  const double h = config_.solver.step;
  win_len_ = static_cast<size_t>(std::max(1.0, std::round(1.0 / kNominalFreqHz / h)));
  win_pos_ = 0;

  freq_est_pu_.assign(static_cast<size_t>(nb), 1.0);
  vmag_avg_.assign(static_cast<size_t>(nb), 0.0);
  freq_avg_.assign(static_cast<size_t>(nb), kNominalFreqHz);
  vmag_win_.assign(static_cast<size_t>(nb), std::vector<double>(win_len_, 0.0));
  freq_win_.assign(static_cast<size_t>(nb), std::vector<double>(win_len_, kNominalFreqHz));
  for (int k = 0; k < nb; ++k) {
    const double vm = std::abs(v_[k]);
    vmag_avg_[static_cast<size_t>(k)] = vm;
    std::fill(vmag_win_[static_cast<size_t>(k)].begin(), vmag_win_[static_cast<size_t>(k)].end(), vm);
  }
  v_prev_ = v_.head(nb);
}

void Simulation::refactorize() {
  AdmittanceMatrix y = data_.model.build_ybus();
  std::vector<Eigen::Triplet<Complex>> extra;
  for (const GeneratorState& g : gens_) {
    if (g.tripped) continue;
    const int node = data_.model.node_of_bus(g.bus);
    extra.emplace_back(node, node, g.norton_admittance());
  }
  for (const GfmInverterState& inv : invs_) {
    if (inv.tripped) continue;
    const int node = data_.model.node_of_bus(inv.bus);
    extra.emplace_back(node, node, inv.norton_admittance());
  }
  AdmittanceMatrix folded(y.rows(), y.cols());
  folded.setFromTriplets(extra.begin(), extra.end());
  y += folded;

  try {
    solver_.factorize(y);
  } catch (const SimulationError&) {
    // Name the unsourced island, if that is the cause.
    const auto comps = data_.model.connected_components();
    for (const auto& comp : comps) {
      bool sourced = false;
      for (const GeneratorState& g : gens_) {
        if (!g.tripped &&
            std::find(comp.begin(), comp.end(), data_.model.node_of_bus(g.bus)) != comp.end()) {
          sourced = true;
        }
      }
      for (const GfmInverterState& inv : invs_) {
        if (!inv.tripped &&
            std::find(comp.begin(), comp.end(), data_.model.node_of_bus(inv.bus)) != comp.end()) {
          sourced = true;
        }
      }
      if (!sourced) {
        std::ostringstream ss;
        ss << "singular network: island without source, buses:";
        for (int node : comp) {
          if (node < data_.model.bus_count()) {
            ss << " " << data_.model.buses()[static_cast<size_t>(node)].id;
          }
        }
        throw SimulationError(ss.str());
      }
    }
    throw;
  }

  // Keep the warm-start voltage aligned with the node count.
  const int n = data_.model.node_count();
  if (v_.size() != n) {
    ComplexVector v(n);
    const int keep = std::min<int>(static_cast<int>(v_.size()), data_.model.bus_count());
    v.setConstant(Complex(1.0, 0.0));
    v.head(keep) = v_.head(keep);
    if (auto fnode = data_.model.fault_node()) {
      const FaultSpec* fault = data_.model.active_fault();
      const Branch& br = data_.model.branch_by_id(fault->branch_id);
      v[*fnode] = 0.5 * (v[data_.model.node_of_bus(br.from_bus)] +
                         v[data_.model.node_of_bus(br.to_bus)]);
    }
    v_ = v;
  }
  need_refactor_ = false;
}

void Simulation::pack_state(std::vector<double>& x) const {
  x.resize(state_size());
  for (size_t g = 0; g < gens_.size(); ++g) {
    x[gen_offset(g) + 0] = gens_[g].rotor_angle;
    x[gen_offset(g) + 1] = gens_[g].speed;
    x[gen_offset(g) + 2] = gens_[g].gov_response;
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    x[inv_offset(i) + 0] = invs_[i].angle;
    x[inv_offset(i) + 1] = invs_[i].filtered_p;
    x[inv_offset(i) + 2] = invs_[i].filtered_q;
    x[inv_offset(i) + 3] = invs_[i].energy;
  }
}

void Simulation::unpack_state(const std::vector<double>& x) {
  for (size_t g = 0; g < gens_.size(); ++g) {
    gens_[g].rotor_angle = x[gen_offset(g) + 0];
    gens_[g].speed = x[gen_offset(g) + 1];
    gens_[g].gov_response = x[gen_offset(g) + 2];
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    invs_[i].angle = x[inv_offset(i) + 0];
    invs_[i].filtered_p = x[inv_offset(i) + 1];
    invs_[i].filtered_q = x[inv_offset(i) + 2];
    invs_[i].energy = std::clamp(x[inv_offset(i) + 3], 0.0,
                                 invs_[i].capacity_hours * invs_[i].rating);
  }
}

namespace {

/// Net current a grid-forming unit pushes into the network, including the
/// proportional scale-back once the converter current limit is reached.
Complex inverter_net_current(const GfmInverterState& inv, const Setpoints& eff, Complex v_bus) {
  const double vcmd = std::clamp(gfm_voltage_command(inv, eff.q), 0.0, 2.0);
  const Complex emf = std::polar(vcmd, inv.angle);
  const Complex raw = (emf - v_bus) * inv.norton_admittance();
  const double mag = std::abs(raw);
  const double imax = inv.current_limit();
  if (mag <= imax || mag == 0.0) return raw;
  return raw * (imax / mag);
}

}  // namespace

void Simulation::solve_algebraic(double t, const std::vector<double>& x, ComplexVector& v) {
  unpack_state(x);
  const int n = data_.model.node_count();
  if (v.size() != n) {
    ComplexVector tmp(n);
    tmp.setConstant(Complex(1.0, 0.0));
    tmp.head(std::min<int>(static_cast<int>(v.size()), n)) =
        v.head(std::min<int>(static_cast<int>(v.size()), n));
    v = tmp;
  }

  ComplexVector inj(n);
  for (int iter = 0; iter < kFixedPointMaxIter; ++iter) {
    inj.setZero();
    for (const GeneratorState& g : gens_) {
      if (g.tripped) continue;
      inj[data_.model.node_of_bus(g.bus)] += g.norton_admittance() * g.internal_emf();
    }
    for (size_t i = 0; i < invs_.size(); ++i) {
      const GfmInverterState& inv = invs_[i];
      if (inv.tripped) continue;
      const int node = data_.model.node_of_bus(inv.bus);
      // Net injection plus the folded-admittance return current.
      inj[node] += inverter_net_current(inv, effective_setpoints_[i], v[node]) +
                   inv.norton_admittance() * v[node];
    }
    for (const ZipLoad& load : loads_) {
      if (load.tripped) continue;
      const int node = data_.model.node_of_bus(load.bus);
      const LoadBasePower base = load_base_power(load, profiles_, t);
      inj[node] += zip_injection(load, v[node], base.p, base.q);
    }

    ComplexVector v_new = solver_.solve(inj);
    const double delta = (v_new - v).cwiseAbs().maxCoeff();
    if (iter >= 20) {
      v = 0.5 * (v + v_new);  // damp slow oscillatory iterations
    } else {
      v = std::move(v_new);
    }
    if (delta < kFixedPointTol) return;
  }
  throw SimulationError("network fixed-point iteration did not converge at t=" +
                        std::to_string(t));
}

void Simulation::eval_derivatives(double /*t*/, const std::vector<double>& /*x*/,
                                  const ComplexVector& v, std::vector<double>& dx) const {
  dx.assign(state_size(), 0.0);
  for (size_t g = 0; g < gens_.size(); ++g) {
    const GeneratorState& gen = gens_[g];
    if (gen.tripped) continue;
    const GeneratorDerivatives d =
        generator_derivatives(gen, v[data_.model.node_of_bus(gen.bus)]);
    dx[gen_offset(g) + 0] = d.d_angle;
    dx[gen_offset(g) + 1] = d.d_speed;
    dx[gen_offset(g) + 2] = d.d_gov;
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    const GfmInverterState& inv = invs_[i];
    if (inv.tripped) continue;
    const Complex vb = v[data_.model.node_of_bus(inv.bus)];
    const Complex i_net = inverter_net_current(inv, effective_setpoints_[i], vb);
    const Complex s = vb * std::conj(i_net);
    const GfmDerivatives d = gfm_derivatives(inv, s.real(), s.imag(),
                                             effective_setpoints_[i].p,
                                             effective_setpoints_[i].q);
    dx[inv_offset(i) + 0] = d.d_angle;
    dx[inv_offset(i) + 1] = d.d_filtered_p;
    dx[inv_offset(i) + 2] = d.d_filtered_q;
    dx[inv_offset(i) + 3] = d.d_energy;
  }
}

void Simulation::rhs(double t, const std::vector<double>& x, std::vector<double>& dx,
                     ComplexVector& v) {
  solve_algebraic(t, x, v);
  eval_derivatives(t, x, v, dx);
}

void Simulation::step_rk4(double t, double h) {
  const size_t n = state_size();

  // Stage P_f values feed the throughput integral with the same weights
  // RK4 applies to the energy state, keeping the two in lockstep.
  std::vector<double> pf0(invs_.size()), pfa(invs_.size()), pfb(invs_.size()), pfc(invs_.size());

  rhs(t, state_, k1_, v_);
  for (size_t i = 0; i < invs_.size(); ++i) pf0[i] = state_[inv_offset(i) + 1];

  for (size_t j = 0; j < n; ++j) stage_state_[j] = state_[j] + 0.5 * h * k1_[j];
  for (size_t i = 0; i < invs_.size(); ++i) pfa[i] = stage_state_[inv_offset(i) + 1];
  rhs(t + 0.5 * h, stage_state_, k2_, v_);

  for (size_t j = 0; j < n; ++j) stage_state_[j] = state_[j] + 0.5 * h * k2_[j];
  for (size_t i = 0; i < invs_.size(); ++i) pfb[i] = stage_state_[inv_offset(i) + 1];
  rhs(t + 0.5 * h, stage_state_, k3_, v_);

  for (size_t j = 0; j < n; ++j) stage_state_[j] = state_[j] + h * k3_[j];
  for (size_t i = 0; i < invs_.size(); ++i) pfc[i] = stage_state_[inv_offset(i) + 1];
  rhs(t + h, stage_state_, k4_, v_);

  for (size_t j = 0; j < n; ++j) {
    state_[j] += h / 6.0 * (k1_[j] + 2.0 * k2_[j] + 2.0 * k3_[j] + k4_[j]);
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    power_integral_[i] += h / 6.0 * (pf0[i] + 2.0 * pfa[i] + 2.0 * pfb[i] + pfc[i]);
  }
}

void Simulation::step_trapezoidal(double t, double h) {
  const size_t n = state_size();
  rhs(t, state_, k1_, v_);
  std::vector<double> pf0(invs_.size());
  for (size_t i = 0; i < invs_.size(); ++i) pf0[i] = state_[inv_offset(i) + 1];

  // Heun predictor followed by two fixed-point corrector sweeps.
  for (size_t j = 0; j < n; ++j) stage_state_[j] = state_[j] + h * k1_[j];
  for (int sweep = 0; sweep < 2; ++sweep) {
    rhs(t + h, stage_state_, k2_, v_);
    for (size_t j = 0; j < n; ++j) {
      stage_state_[j] = state_[j] + 0.5 * h * (k1_[j] + k2_[j]);
    }
  }
  state_ = stage_state_;
  for (size_t i = 0; i < invs_.size(); ++i) {
    power_integral_[i] += 0.5 * h * (pf0[i] + state_[inv_offset(i) + 1]);
  }
}

void Simulation::update_measurements(double dt) {
  const int nb = data_.model.bus_count();
  for (int k = 0; k < nb; ++k) {
    const auto ks = static_cast<size_t>(k);
    const double dtheta = std::arg(v_[k] * std::conj(v_prev_[k]));
    const double f_raw = 1.0 + dtheta / (kOmegaSyncRadS * dt);
    freq_est_pu_[ks] += dt / kFreqFilterTau * (f_raw - freq_est_pu_[ks]);

    const double vm = std::abs(v_[k]);
    const double f_hz = freq_est_pu_[ks] * kNominalFreqHz;
    vmag_avg_[ks] += (vm - vmag_win_[ks][win_pos_]) / static_cast<double>(win_len_);
    freq_avg_[ks] += (f_hz - freq_win_[ks][win_pos_]) / static_cast<double>(win_len_);
    vmag_win_[ks][win_pos_] = vm;
    freq_win_[ks][win_pos_] = f_hz;
  }
  win_pos_ = (win_pos_ + 1) % win_len_;
  v_prev_ = v_.head(nb);
}

void Simulation::run_consensus(double t) {
  if (invs_.empty()) return;
  const double period = config_.coordination.update_period;

  // Fresh local view: own corrections plus current sensor readings.
  std::vector<ConsensusNodeState> self(invs_.size());
  for (size_t i = 0; i < invs_.size(); ++i) {
    const GfmInverterState& inv = invs_[i];
    const auto node = static_cast<size_t>(data_.model.node_of_bus(inv.bus));
    self[i].freq_corr = inv.secondary_freq;
    self[i].volt_corr = inv.secondary_volt;
    self[i].p_norm = inv.filtered_p / inv.rating;
    self[i].q_norm = inv.filtered_q / inv.rating;
    self[i].local_freq_pu = freq_avg_[node] / kNominalFreqHz;
    self[i].local_volt_err = inv.volt_setpoint - vmag_avg_[node];
    self[i].in_service = !inv.tripped;
  }

  const auto delay_rounds = static_cast<size_t>(
      std::llround(std::floor(config_.coordination.latency / period + 1e-9)));
  const auto& remote =
      consensus_history_[std::min(delay_rounds, consensus_history_.size() - 1)];

  std::vector<ConsensusNodeState> next(invs_.size());
  consensus_update(graph_, config_.coordination.gains,
                   std::span<const ConsensusNodeState>(self),
                   std::span<const ConsensusNodeState>(remote),
                   std::span<ConsensusNodeState>(next), period);

  for (size_t i = 0; i < invs_.size(); ++i) {
    invs_[i].secondary_freq = next[i].freq_corr;
    invs_[i].secondary_volt = next[i].volt_corr;
  }
  consensus_ = next;
  consensus_history_.push_front(next);
  while (consensus_history_.size() > delay_rounds + 2) consensus_history_.pop_back();

  next_round_ += period;
  (void)t;
}

void Simulation::apply_safety_filter() {
  for (size_t i = 0; i < invs_.size(); ++i) {
    const GfmInverterState& inv = invs_[i];
    const Setpoints raw{inv.p_setpoint, inv.q_setpoint};
    if (config_.coordination.mode == CoordinationMode::none || inv.tripped) {
      effective_setpoints_[i] = raw;
      continue;
    }
    const auto node = static_cast<size_t>(data_.model.node_of_bus(inv.bus));
    effective_setpoints_[i] =
        safety_filter(vmag_avg_[node], freq_avg_[node], config_.coordination.safety, raw,
                      inv.rating, inv.overload_factor);
  }
}

void Simulation::trip_generator(size_t g, double t, TripCause cause,
                                std::vector<EventRecord>& batch) {
  GeneratorState& gen = gens_[g];
  if (gen.tripped) return;  // idempotent
  const double pe =
      generator_electrical_power(gen, v_[data_.model.node_of_bus(gen.bus)]);
  gen.tripped = true;
  need_refactor_ = true;
  result_.gen_trip_time[g] = t;
  batch.push_back({t, EventKind::relay_trip, device_label("gen", gen.id),
                   to_string(cause), pe * data_.base_mva, 0.0});
}

void Simulation::trip_inverter(size_t i, double t, TripCause cause,
                               std::vector<EventRecord>& batch) {
  GfmInverterState& inv = invs_[i];
  if (inv.tripped) return;
  inv.tripped = true;
  need_refactor_ = true;
  consensus_[i].in_service = false;
  batch.push_back({t, EventKind::relay_trip, device_label("inv", inv.id),
                   to_string(cause), inv.filtered_p * data_.base_mva, 0.0});
}

void Simulation::trip_load(size_t l, double t, TripCause cause,
                           std::vector<EventRecord>& batch) {
  ZipLoad& load = loads_[l];
  if (load.tripped) return;
  const int node = data_.model.node_of_bus(load.bus);
  const LoadBasePower base = load_base_power(load, profiles_, t);
  const Complex s = zip_power(load, v_[node], base.p, base.q);
  load.tripped = true;
  batch.push_back({t, EventKind::relay_trip, device_label(load.is_ldl ? "ldl" : "load", load.id),
                   to_string(cause), s.real() * data_.base_mva, 0.0});
}

void Simulation::evaluate_protection(double t, double dt, std::vector<EventRecord>& batch) {
  const ProtectionConfig& prot = config_.protection;

  for (size_t g = 0; g < gens_.size(); ++g) {
    GeneratorState& gen = gens_[g];
    if (gen.tripped) continue;
    const auto node = static_cast<size_t>(data_.model.node_of_bus(gen.bus));
    if (relay_step(prot.gen_voltage, gen_v_relay_[g], vmag_avg_[node], t, dt).tripped_now) {
      const bool under = prot.gen_voltage.segments[static_cast<size_t>(gen_v_relay_[g].trip_segment)].side ==
                         ViolationSide::under;
      trip_generator(g, t, under ? TripCause::under_voltage : TripCause::over_voltage, batch);
      continue;
    }
    // Machine frequency relays read rotor speed directly.
    if (relay_step(prot.gen_frequency, gen_f_relay_[g], gen.speed * kNominalFreqHz, t, dt)
            .tripped_now) {
      const bool under = prot.gen_frequency.segments[static_cast<size_t>(gen_f_relay_[g].trip_segment)].side ==
                         ViolationSide::under;
      trip_generator(g, t, under ? TripCause::under_frequency : TripCause::over_frequency, batch);
    }
  }

  for (size_t i = 0; i < invs_.size(); ++i) {
    GfmInverterState& inv = invs_[i];
    if (inv.tripped) continue;
    const auto node = static_cast<size_t>(data_.model.node_of_bus(inv.bus));
    if (relay_step(prot.gfm_voltage, inv_v_relay_[i], vmag_avg_[node], t, dt).tripped_now) {
      const bool under = prot.gfm_voltage.segments[static_cast<size_t>(inv_v_relay_[i].trip_segment)].side ==
                         ViolationSide::under;
      trip_inverter(i, t, under ? TripCause::under_voltage : TripCause::over_voltage, batch);
      continue;
    }
    const double f_hz = gfm_speed_command(inv, effective_setpoints_[i].p) * kNominalFreqHz;
    if (relay_step(prot.gfm_frequency, inv_f_relay_[i], f_hz, t, dt).tripped_now) {
      const bool under = prot.gfm_frequency.segments[static_cast<size_t>(inv_f_relay_[i].trip_segment)].side ==
                         ViolationSide::under;
      trip_inverter(i, t, under ? TripCause::under_frequency : TripCause::over_frequency, batch);
    }
  }

  for (size_t l = 0; l < loads_.size(); ++l) {
    ZipLoad& load = loads_[l];
    if (!load.is_ldl || load.tripped) continue;
    const auto node = static_cast<size_t>(data_.model.node_of_bus(load.bus));
    if (relay_step(prot.ldl_lvrt, ldl_relay_[l], vmag_avg_[node], t, dt).tripped_now) {
      trip_load(l, t, TripCause::lvrt, batch);
    }
  }

  for (auto& [bus, state] : ufls_state_) {
    const auto node = static_cast<size_t>(data_.model.node_of_bus(bus));
    const auto fired = ufls_step(prot.ufls, state, freq_avg_[node], vmag_avg_[node], dt);
    for (const ShedEvent& shed : fired) {
      double shed_mw = 0.0;
      for (ZipLoad& load : loads_) {
        if (load.bus != bus || load.is_ldl || load.tripped) continue;
        const LoadBasePower base = load_base_power(load, profiles_, t);
        shed_mw += zip_power(load, v_[static_cast<Eigen::Index>(node)], base.p, base.q).real() *
                   shed.shed_fraction * data_.base_mva;
        load.shed_fraction = combine_shed(load.shed_fraction, shed.shed_fraction);
      }
      batch.push_back({t, EventKind::ufls_shed, "bus:" + std::to_string(bus),
                       "stage" + std::to_string(shed.stage + 1), shed_mw,
                       shed.shed_fraction});
    }
  }
}

void Simulation::fire_scheduled(double t, std::vector<EventRecord>& batch) {
  while (next_event_ < schedule_.size() && schedule_[next_event_].ev.t <= t + 1e-9) {
    ResolvedEvent& res = schedule_[next_event_];
    const ScheduledEvent& ev = res.ev;
    switch (ev.kind) {
      case EventKind::apply_fault: {
        FaultSpec spec;
        spec.branch_id = res.branch_id;
        spec.location_fraction = ev.location_fraction;
        spec.fault_admittance = Complex(ev.fault_admittance, 0.0);
        data_.model.apply_fault(spec);
        need_refactor_ = true;
        batch.push_back({ev.t, ev.kind, branch_label(data_.model.branch_by_id(res.branch_id)),
                         "fault_on", 0.0, ev.location_fraction});
        break;
      }
      case EventKind::clear_fault: {
        data_.model.clear_fault();
        const bool switched = data_.model.switch_branch(res.branch_id, false);
        need_refactor_ = true;
        batch.push_back({ev.t, ev.kind, branch_label(data_.model.branch_by_id(res.branch_id)),
                         switched ? "fault_cleared_line_open" : "fault_cleared", 0.0, 0.0});
        break;
      }
      case EventKind::switch_branch: {
        const bool changed = data_.model.switch_branch(res.branch_id, ev.close_branch);
        if (changed) need_refactor_ = true;
        batch.push_back({ev.t, ev.kind, branch_label(data_.model.branch_by_id(res.branch_id)),
                         std::string(ev.close_branch ? "close" : "open") +
                             (changed ? "" : "_noop"),
                         0.0, 0.0});
        break;
      }
      case EventKind::relay_trip: {
        bool found = false;
        for (size_t g = 0; g < gens_.size(); ++g) {
          if (gens_[g].id == ev.device) {
            trip_generator(g, ev.t, TripCause::scripted, batch);
            found = true;
          }
        }
        for (size_t i = 0; i < invs_.size(); ++i) {
          if (invs_[i].id == ev.device) {
            trip_inverter(i, ev.t, TripCause::scripted, batch);
            found = true;
          }
        }
        for (size_t l = 0; l < loads_.size(); ++l) {
          if (loads_[l].id == ev.device) {
            trip_load(l, ev.t, TripCause::scripted, batch);
            found = true;
          }
        }
        if (!found) throw ScenarioError("scripted trip of unknown device '" + ev.device + "'");
        break;
      }
      case EventKind::ufls_shed:
        throw ScenarioError("ufls_shed cannot be scripted");
      case EventKind::profile_milestone:
        batch.push_back({ev.t, ev.kind, ev.device, ev.label, 0.0, 0.0});
        break;
    }
    res.fired = true;
    ++next_event_;
  }
}

double Simulation::current_spread_deg() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int alive = 0;
  for (const GeneratorState& g : gens_) {
    if (g.tripped) continue;
    lo = std::min(lo, g.rotor_angle);
    hi = std::max(hi, g.rotor_angle);
    ++alive;
  }
  if (alive < 2) return 0.0;
  return (hi - lo) * 180.0 / 3.14159265358979323846;
}

double Simulation::power_balance_residual(double t) const {
  Complex devices{0.0, 0.0};
  for (const GeneratorState& g : gens_) {
    if (g.tripped) continue;
    const Complex vb = v_[data_.model.node_of_bus(g.bus)];
    const Complex i_net = (g.internal_emf() - vb) * g.norton_admittance();
    devices += vb * std::conj(i_net);
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    if (invs_[i].tripped) continue;
    const Complex vb = v_[data_.model.node_of_bus(invs_[i].bus)];
    devices += vb * std::conj(inverter_net_current(invs_[i], effective_setpoints_[i], vb));
  }
  for (const ZipLoad& load : loads_) {
    if (load.tripped) continue;
    const Complex vb = v_[data_.model.node_of_bus(load.bus)];
    const LoadBasePower base = load_base_power(load, profiles_, t);
    devices += vb * std::conj(zip_injection(load, vb, base.p, base.q));
  }

  const AdmittanceMatrix y = data_.model.build_ybus();
  const ComplexVector iy = y * v_;
  Complex network{0.0, 0.0};
  for (Eigen::Index k = 0; k < v_.size(); ++k) network += v_[k] * std::conj(iy[k]);

  return std::abs(devices - network);
}

void Simulation::record_sample(double t, double window_spread_deg) {
  result_.time.push_back(t);
  const int nb = data_.model.bus_count();
  for (int k = 0; k < nb; ++k) {
    result_.bus_v_mag[static_cast<size_t>(k)].push_back(std::abs(v_[k]));
    result_.bus_v_angle[static_cast<size_t>(k)].push_back(std::arg(v_[k]));
  }
  for (size_t g = 0; g < gens_.size(); ++g) {
    result_.gen_angle[g].push_back(gens_[g].rotor_angle);
    result_.gen_speed[g].push_back(gens_[g].speed);
  }
  for (size_t i = 0; i < invs_.size(); ++i) {
    result_.inv_p[i].push_back(invs_[i].filtered_p);
    result_.inv_q[i].push_back(invs_[i].filtered_q);
    result_.inv_freq[i].push_back(invs_[i].tripped
                                      ? 1.0
                                      : gfm_speed_command(invs_[i], effective_setpoints_[i].p));
  }
  result_.delta_spread_deg.push_back(window_spread_deg);
}

SimulationResult Simulation::run() {
  initialize();

  const double h = config_.solver.step;
  const auto n_steps = static_cast<long>(std::llround(config_.solver.horizon / h));
  const bool layered = config_.coordination.mode == CoordinationMode::layered;

  pack_state(state_);
  record_sample(0.0, current_spread_deg());

  std::vector<EventRecord> batch;
  double window_spread = 0.0;

  try {
    for (long k = 1; k <= n_steps; ++k) {
      const double t0 = static_cast<double>(k - 1) * h;
      const double t1 = static_cast<double>(k) * h;

      if (config_.solver.integrator == IntegratorKind::rk4) {
        step_rk4(t0, h);
      } else {
        step_trapezoidal(t0, h);
      }

      // Commit: consistent network solution at the new state.
      solve_algebraic(t1, state_, v_);
      result_.max_power_residual =
          std::max(result_.max_power_residual, power_balance_residual(t1));

      update_measurements(h);
      if (layered && !invs_.empty() && t1 >= next_round_ - 1e-9) run_consensus(t1);
      apply_safety_filter();

      batch.clear();
      if (config_.protection.enabled) evaluate_protection(t1, h, batch);
      fire_scheduled(t1, batch);
      if (!batch.empty()) {
        std::stable_sort(batch.begin(), batch.end(),
                         [](const EventRecord& a, const EventRecord& b) {
                           if (event_priority(a.kind) != event_priority(b.kind)) {
                             return event_priority(a.kind) < event_priority(b.kind);
                           }
                           return a.device < b.device;
                         });
        result_.events.insert(result_.events.end(), batch.begin(), batch.end());
      }
      if (need_refactor_) refactorize();

      for (double xv : state_) {
        if (!std::isfinite(xv) || std::abs(xv) > kDivergenceBound) {
          throw SimulationError("state divergence at t=" + std::to_string(t1));
        }
      }

      window_spread = std::max(window_spread, current_spread_deg());
      if (k % config_.solver.record_every == 0 || k == n_steps) {
        record_sample(t1, window_spread);
        window_spread = 0.0;
      }
      result_.final_time = t1;
    }
    result_.status = RunStatus::completed;
  } catch (const SimulationError& err) {
    result_.status = RunStatus::aborted_unstable;
    result_.abort_reason = err.what();
  }

  result_.inv_energy_drawdown.assign(invs_.size(), 0.0);
  result_.inv_power_integral = power_integral_;
  for (size_t i = 0; i < invs_.size(); ++i) {
    result_.inv_energy_drawdown[i] = energy_start_[i] - invs_[i].energy;
  }
  return result_;
}

SimulationResult run_scenario(const ScenarioConfig& config) {
  Simulation sim(config);
  return sim.run();
}

std::vector<SimulationResult> run_batch(const std::vector<ScenarioConfig>& configs,
                                        bool concurrent) {
  std::vector<SimulationResult> results(configs.size());

  auto run_one = [](const ScenarioConfig& cfg) {
    SimulationResult res;
    try {
      res = run_scenario(cfg);
    } catch (const std::exception& err) {
      res.scenario_name = cfg.name;
      res.status = RunStatus::aborted_unstable;
      res.abort_reason = err.what();
    }
    return res;
  };

  if (!concurrent || configs.size() <= 1) {
    for (size_t k = 0; k < configs.size(); ++k) results[k] = run_one(configs[k]);
    return results;
  }

  std::vector<std::future<SimulationResult>> futures;
  futures.reserve(configs.size());
  for (const ScenarioConfig& cfg : configs) {
    futures.push_back(std::async(std::launch::async, run_one, cfg));
  }
  for (size_t k = 0; k < configs.size(); ++k) results[k] = futures[k].get();
  return results;
}

}  // namespace gridfm
