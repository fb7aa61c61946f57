#include <cmath>
#include <random>

#include "doctest.h"
#include "treeopf/powerflow.hpp"
#include "treeopf/relaxation.hpp"

using namespace treeopf;

namespace {

// Chain 0 - 1 - 2 with a wide injection piece at bus 1 and a fixed load at 2.
Network three_bus(double r = 0.02, double x = 0.03) {
  Bus root;
  root.injection.pieces.push_back({{-2.0, 2.0}, {-2.0, 2.0}, 1.0, 0.0, 0.0});
  Bus mid;
  mid.id = 1;
  mid.parent = 0;
  mid.injection.pieces.push_back({{-1.0, 1.0}, {-1.0, 1.0}, 1.0, 0.5, 0.0});
  mid.P = mid.Q = {-2.0, 2.0};
  Bus leaf;
  leaf.id = 2;
  leaf.parent = 1;
  leaf.injection = InjectionDomain::singleton(-0.3, -0.1);
  leaf.P = leaf.Q = {-2.0, 2.0};
  return Network({root, mid, leaf}, {Branch{}, Branch{1, r, x}, Branch{2, r, x}}, 1.0, 10.0);
}

Network random_tree(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> imp(0.005, 0.04);
  std::uniform_real_distribution<double> ld(-0.1, 0.0);
  std::vector<Bus> buses(1);
  buses[0].injection.pieces.push_back({{-3.0, 3.0}, {-3.0, 3.0}, 1.0, 0.0, 0.0});
  std::vector<Branch> branches(1);
  for (int k = 1; k < n; ++k) {
    Bus b;
    b.id = k;
    b.parent = static_cast<int>(rng() % static_cast<unsigned>(k));
    b.injection = InjectionDomain::singleton(ld(rng), ld(rng));
    b.P = b.Q = {-2.0, 2.0};
    buses.push_back(b);
    branches.push_back({k, imp(rng), imp(rng)});
  }
  return Network(buses, branches, 1.0, 10.0);
}

}  // namespace

TEST_CASE("square envelope") {
  const auto env = square_envelope({0.0, 1.0});
  REQUIRE(env.variables.size() == 2);
  LinearProgram lp;
  const int x = lp.add_variable({-10.0, 10.0});
  const int y = lp.add_variable({0.5, 0.5});
  const int cols[] = {x, y};
  lp.add(env, cols);
  const LpSolver solver(lp);
  CHECK(solver.solve_var(x, Sense::minimize).value == doctest::Approx(0.25));
  CHECK(solver.solve_var(x, Sense::maximize).value == doctest::Approx(0.5));

  const auto point = square_envelope({0.7, 0.7});
  for (double xv : {0.49 - 1e-3, 0.49 + 1e-3}) {
    const double vals[] = {xv, 0.7};
    CHECK_FALSE(point.satisfied(vals, 1e-6));
  }
  const double exact[] = {0.49, 0.7};
  CHECK(point.satisfied(exact, 1e-12));
}

TEST_CASE("mccormick envelope") {
  const auto env = mccormick_envelope({0.0, 1.0}, {0.0, 1.0});
  LinearProgram lp;
  const int x = lp.add_variable({-10.0, 10.0});
  const int y = lp.add_variable({0.5, 0.5});
  const int z = lp.add_variable({0.5, 0.5});
  const int cols[] = {x, y, z};
  lp.add(env, cols);
  const LpSolver solver(lp);
  CHECK(solver.solve_var(x, Sense::minimize).value == doctest::Approx(0.0));
  CHECK(solver.solve_var(x, Sense::maximize).value == doctest::Approx(0.5));

  const auto edge = mccormick_envelope({0.3, 0.3}, {-1.0, 2.0});
  for (double zv : {-1.0, 0.2, 2.0}) {
    const double on[] = {0.3 * zv, 0.3, zv};
    const double off[] = {0.3 * zv + 1e-4, 0.3, zv};
    CHECK(edge.satisfied(on, 1e-12));
    CHECK_FALSE(edge.satisfied(off, 1e-6));
  }
}

TEST_CASE("envelopes hold at sampled points") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  int violations = 0;
  for (int s = 0; s < 10000; ++s) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    double c = u(rng), d = u(rng);
    if (c > d) std::swap(c, d);
    const double y = a + t(rng) * (b - a);
    const double z = c + t(rng) * (d - c);
    const double sq[] = {y * y, y};
    const double mc[] = {y * z, y, z};
    violations += !square_envelope({a, b}).satisfied(sq, 1e-12);
    violations += !mccormick_envelope({a, b}, {c, d}).satisfied(mc, 1e-12);
  }
  CHECK(violations == 0);
}

TEST_CASE("cone outer approximation") {
  CHECK_THROWS_AS(cone_outer_approx(4), Error);
  const auto c32 = cone_outer_approx(32);
  const double apex[] = {0.0, 0.0, 0.7, 0.2};
  CHECK(c32.satisfied(apex));
  const double boundary[] = {1.0, 0.0, 1.0, 1.0};
  CHECK(c32.satisfied(boundary, 1e-12));
  const double outside[] = {1.01, 0.0, 1.0, 1.0};
  CHECK_FALSE(cone_outer_approx(64).satisfied(outside));

  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scales[] = {0.1, 0.5, 1.0, 3.0};
  const auto scaled = cone_outer_approx(16, scales);
  int violations = 0;
  for (int s = 0; s < 10000; ++s) {
    const double v = 0.5 + u(rng);
    const double i = 2.0 * u(rng);
    const double rad = std::sqrt(v * i) * u(rng);
    const double th = 2.0 * std::numbers::pi * u(rng);
    const double pt[] = {rad * std::cos(th), rad * std::sin(th), v, i};
    violations += !scaled.satisfied(pt, 1e-12);
  }
  CHECK(violations == 0);
}

TEST_CASE("prop_bound contains the exact two-edge solution") {
  const auto net = three_bus();
  std::vector<std::pair<double, double>> inj{{0.0, 0.0}, {0.1, 0.05}, {-0.3, -0.1}};
  const auto pf = solve_pf_newton(net, inj);
  REQUIRE(pf.converged());
  const auto& s = pf.state;
  const double eps = 0.01;
  auto cell = [&](std::size_t b) {
    return IntervalRegion{{s.v[b] - 0.3 * eps, s.v[b] + 0.7 * eps},
                          {s.P[b] - 0.6 * eps, s.P[b] + 0.4 * eps},
                          {s.Q[b] - 0.5 * eps, s.Q[b] + 0.5 * eps}};
  };
  const auto child_region = cell(2);
  const ChildCell child{2, child_region, current_range(child_region)};
  const auto res = prop_bound(net, 1, cell(1), std::span(&child, 1));
  REQUIRE(res);
  CHECK(res->region.contains(s.v[1], s.P[1], s.Q[1]));
  CHECK(cell(1).contains(res->region));
  CHECK(res->cost_lb <= 1.0 * 0.1 + 0.5 * 0.05 + 1e-9);
  CHECK(net.bus(1).injection.pieces[0].contains(res->p, res->q));
}

TEST_CASE("prop_bound rejects an unbalanceable child flow") {
  const auto net = three_bus();
  const IntervalRegion parent{{0.95, 1.0}, {-0.1, 0.0}, {-0.1, 0.0}};
  const IntervalRegion child_region{{0.95, 1.0}, {1.8, 1.85}, {0.0, 0.05}};
  const ChildCell child{2, child_region, current_range(child_region)};
  CHECK_FALSE(prop_bound(net, 1, parent, std::span(&child, 1)));
}

TEST_CASE("relaxation admits every exact point inside the cells") {
  const auto net = three_bus();
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int s = 0; s < 300; ++s) {
    const double p1 = -1.0 + 2.0 * u(rng);
    const double q1 = -1.0 + 2.0 * u(rng);
    const double p2 = -0.5 * u(rng);
    const double q2 = -0.3 * u(rng);
    Bus b2 = net.bus(2);
    b2.injection = InjectionDomain::singleton(p2, q2);
    const Network local({net.bus(0), net.bus(1), b2}, net.branches(), 1.0, 10.0);
    std::vector<std::pair<double, double>> inj{{0.0, 0.0}, {p1, q1}, {p2, q2}};
    const auto pf = solve_pf_newton(local, inj);
    if (!pf.converged()) continue;
    const auto& st = pf.state;
    const double eps = 0.02;
    auto cell = [&](std::size_t b) {
      const double o = u(rng) * eps;
      return IntervalRegion{{st.v[b] - o, st.v[b] - o + eps},
                            {st.P[b] - eps * u(rng), st.P[b] + eps * u(rng)},
                            {st.Q[b] - eps * u(rng), st.Q[b] + eps * u(rng)}};
    };
    const auto pc = cell(1);
    const auto cr = cell(2);
    const ChildCell child{2, cr, current_range(cr)};
    const auto prog = build_prop_bound_program(net, 1, pc, std::span(&child, 1),
                                               net.bus(1).injection.pieces[0]);
    std::vector<double> x(static_cast<std::size_t>(prog.lp.num_variables()), 0.0);
    auto put = [&](int col, double val) { x[static_cast<std::size_t>(col)] = val; };
    put(prog.v, st.v[1]);
    put(prog.P, st.P[1]);
    put(prog.Q, st.Q[1]);
    put(prog.p, p1);
    put(prog.q, q1);
    const auto& c = prog.children[0];
    const double i2 = (st.P[2] * st.P[2] + st.Q[2] * st.Q[2]) / st.v[2];
    put(c.v, st.v[2]);
    put(c.P, st.P[2]);
    put(c.Q, st.Q[2]);
    put(c.i, i2);
    put(c.sqP, st.P[2] * st.P[2]);
    put(c.sqQ, st.Q[2] * st.Q[2]);
    put(c.prod, st.v[2] * i2);
    violations += prog.lp.max_violation(x) > 1e-9;
  }
  CHECK(violations == 0);
}

TEST_CASE("pinned root cell keeps only the cost program") {
  const auto net = three_bus();
  std::vector<std::pair<double, double>> inj{{0.0, 0.0}, {0.0, 0.0}, {-0.3, -0.1}};
  const auto pf = solve_pf_newton(net, inj);
  REQUIRE(pf.converged());
  const auto& s = pf.state;
  const IntervalRegion root{Interval::point(1.0), Interval::point(0.0), Interval::point(0.0)};
  const IntervalRegion cr{{s.v[1] - 0.005, s.v[1] + 0.005}, {s.P[1] - 0.005, s.P[1] + 0.005},
                          {s.Q[1] - 0.005, s.Q[1] + 0.005}};
  const ChildCell child{1, cr, current_range(cr)};
  const auto res = prop_bound(net, 0, root, std::span(&child, 1));
  REQUIRE(res);
  CHECK(res->region == root);
  CHECK(res->cost_lb <= s.p[0] + 1e-9);
  CHECK(res->cost_lb >= s.p[0] - 0.02);
}

TEST_CASE("tightening a loose two-bus feeder") {
  Bus root;
  root.injection.pieces.push_back({{-5.0, 5.0}, {-5.0, 5.0}, 1.0, 0.0, 0.0});
  Bus load;
  load.id = 1;
  load.parent = 0;
  load.injection = InjectionDomain::singleton(-0.5, -0.2);
  load.P = load.Q = {-10.0, 10.0};
  const Network net({root, load}, {Branch{}, Branch{1, 0.01, 0.02}}, 1.0, 10.0);
  const auto res = tighten_bounds(net);
  const auto& b = res.bounds[1];
  CHECK(b.P.lo == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(b.P.hi == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(b.Q.width() < 1e-6);
  CHECK(b.v.width() < 0.1);
  CHECK(res.iterations <= 10);
}

TEST_CASE("tightening is monotone, safe and reaches a fixed point") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const auto net = random_tree(rng, 6 + trial);
    const auto res = tighten_bounds(net);
    REQUIRE(res.history.size() == static_cast<std::size_t>(res.iterations) + 1);
    for (std::size_t k = 1; k < res.history.size(); ++k) {
      for (std::size_t b = 0; b < net.size(); ++b) {
        const auto& now = res.history[k].buses[b];
        const auto& before = res.history[k - 1].buses[b];
        CHECK(before.v.contains(now.v));
        CHECK(before.P.contains(now.P));
        CHECK(before.Q.contains(now.Q));
        CHECK(before.i.contains(now.i));
      }
    }
    CHECK(res.changes.back() < 1e-6);

    std::vector<std::pair<double, double>> inj;
    for (const auto& bus : net.buses()) inj.emplace_back(bus.injection.pieces[0].p.lo, bus.injection.pieces[0].q.lo);
    const auto pf = solve_pf_newton(net, inj);
    REQUIRE(pf.converged());
    for (std::size_t b = 1; b < net.size(); ++b) {
      const auto& bb = res.bounds.buses[b];
      const auto& s = pf.state;
      CHECK(bb.v.contains(s.v[b], 1e-9));
      CHECK(bb.P.contains(s.P[b], 1e-9));
      CHECK(bb.Q.contains(s.Q[b], 1e-9));
      CHECK(bb.i.contains((s.P[b] * s.P[b] + s.Q[b] * s.Q[b]) / s.v[b], 1e-9));
    }

    const auto again = tighten_bounds(net, res.bounds);
    CHECK(again.iterations == 1);
    CHECK(again.changes[0] < 1e-6);
  }
}

TEST_CASE("tightening detects an infeasible feeder") {
  Bus root;
  root.injection.pieces.push_back({{-5.0, 5.0}, {-5.0, 5.0}, 1.0, 0.0, 0.0});
  Bus load;
  load.id = 1;
  load.parent = 0;
  load.injection = InjectionDomain::singleton(-0.5, -0.2);
  load.v = {1.1, 1.21};
  load.P = load.Q = {-1.0, 1.0};
  const Network net({root, load}, {Branch{}, Branch{1, 0.05, 0.05}}, 1.0, 10.0);
  CHECK_THROWS_AS(tighten_bounds(net), InfeasibleError);
}
