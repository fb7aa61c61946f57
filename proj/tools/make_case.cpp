// Generates the bundled synthetic curtailment feeders.
//
//   make_case 14               print the case on stdout
//   make_case 14 --check FILE  exit 1 unless FILE matches byte for byte

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "treeopf/casegen.hpp"
#include "treeopf/oracle.hpp"

using namespace treeopf;

namespace {

struct Edge {
  BusId bus;
  BusId parent;
  double r;
  double x;
};

struct Recipe {
  std::vector<Edge> edges;
  std::uint64_t seed;
  int curtailable;
  double load_lo;
  double load_hi;
};

Recipe recipe(int size) {
  switch (size) {
    case 5:
      return {{{1, 0, 0.03, 0.03}, {2, 1, 0.05, 0.04}, {3, 2, 0.06, 0.05}, {4, 1, 0.05, 0.05}}, 3, 2, 0.02, 0.09};
    case 14:
      return {{{1, 0, 0.03, 0.03},
               {2, 1, 0.04, 0.035},
               {3, 2, 0.04, 0.04},
               {4, 3, 0.05, 0.04},
               {5, 4, 0.05, 0.045},
               {6, 2, 0.05, 0.04},
               {7, 6, 0.06, 0.05},
               {8, 3, 0.05, 0.05},
               {9, 8, 0.06, 0.05},
               {10, 1, 0.04, 0.04},
               {11, 10, 0.05, 0.05},
               {12, 4, 0.06, 0.05},
               {13, 5, 0.06, 0.06}},
              22,
              7,
              0.02,
              0.09};
    case 30: {
      // Trunk 1..10 with laterals hanging off every other trunk bus.
      Recipe r{{}, 5, 10, 0.01, 0.04};
      for (BusId k = 1; k <= 10; ++k) r.edges.push_back({k, k - 1, 0.01 + 0.001 * k, 0.01 + 0.001 * k});
      BusId next = 11;
      for (BusId trunk = 2; trunk <= 10 && next < 30; trunk += 2) {
        BusId up = trunk;
        for (int depth = 0; depth < 4 && next < 30; ++depth, ++next) {
          r.edges.push_back({next, up, 0.02 + 0.002 * depth, 0.02});
          up = next;
        }
      }
      return r;
    }
    default:
      throw Error("no recipe for a " + std::to_string(size) + "-bus case");
  }
}

// Loads drawn per bus; a random subset may drop to 40% of nominal at a cost.
// The voltage floor is the one that best separates the cheapest feasible
// configuration from every cheaper infeasible one.
Network build(const Recipe& rc) {
  const auto n = rc.edges.size() + 1;
  std::mt19937_64 rng(rc.seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  std::vector<Bus> buses(n);
  std::vector<Branch> branches(n);
  buses[0].v = Interval::point(1.0);
  buses[0].P = buses[0].Q = Interval::point(0.0);
  buses[0].injection = InjectionDomain::singleton(0.0, 0.0);
  std::vector<int> ids(n - 1);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i + 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> curt(n, 0);
  for (int i = 0; i < rc.curtailable; ++i) curt[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = 1;
  for (const auto& e : rc.edges) {
    auto& b = buses[static_cast<std::size_t>(e.bus)];
    b.id = e.bus;
    b.parent = e.parent;
    branches[static_cast<std::size_t>(e.bus)] = {e.bus, e.r, e.x};
    const double p = -uni(rc.load_lo, rc.load_hi);
    const double q = 0.45 * p;
    b.injection = InjectionDomain::singleton(p, q);
    if (curt[static_cast<std::size_t>(e.bus)]) {
      b.injection.pieces.push_back(
          {Interval::point(0.4 * p), Interval::point(0.4 * q), 0.0, 0.0, uni(1.5, 4.0) * (-0.6 * p)});
    }
  }

  const Network draft(buses, branches, 1.0, 10.0);
  const auto inst = CurtailmentInstance::from_network(draft);
  const auto k = inst.loads.size();
  std::vector<std::pair<double, double>> configs;
  std::vector<int> sigma(k);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << k); ++code) {
    double cost = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sigma[j] = static_cast<int>((code >> j) & 1U);
      cost += sigma[j] ? inst.loads[j].cost_red : inst.loads[j].cost_nom;
    }
    const auto pf = solve_pf_newton(draft, inst.injections(sigma));
    if (!pf.converged()) throw InternalError("power flow failed while building the case");
    const double vmin = *std::min_element(pf.state.v.begin() + 1, pf.state.v.end());
    configs.emplace_back(cost + pf.state.p[0], vmin);
  }
  double vlo = 9.0;
  double vhi = 0.0;
  for (const auto& [c, v] : configs) {
    vlo = std::min(vlo, v);
    vhi = std::max(vhi, v);
  }
  double best_margin = 0.0;
  double floor = 0.0;
  for (double f = vlo + 0.2 * (vhi - vlo); f < vlo + 0.8 * (vhi - vlo); f += 0.0005) {
    double opt = 1e9;
    for (const auto& [c, v] : configs) {
      if (v >= f) opt = std::min(opt, c);
    }
    double margin = 1e9;
    for (const auto& [c, v] : configs) {
      if (c < opt) margin = std::min(margin, f - v);
    }
    if (margin > best_margin) {
      best_margin = margin;
      floor = f;
    }
  }
  floor = std::round(floor * 1e4) / 1e4;
  for (std::size_t j = 1; j < n; ++j) buses[j].v = {floor, 1.21};
  RootCost root;
  root.margin = 0.04;
  root.pieces = 10;
  return fit_root_pieces(Network(buses, branches, 1.0, 10.0), root);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic curtailment feeders"};
  int size = 14;
  std::string check;
  app.add_option("size", size, "Bus count (5, 14 or 30)")->required();
  app.add_option("--check", check, "Compare against an existing case file");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto text = serialize_network(build(recipe(size)));
    if (check.empty()) {
      std::cout << text;
      return 0;
    }
    std::ifstream in(check, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() == text) return 0;
    std::cerr << check << " differs from the generated " << size << "-bus case\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
