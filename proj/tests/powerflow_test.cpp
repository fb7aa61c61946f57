#include <cmath>
#include <random>

#include "doctest.h"
#include "treeopf/powerflow.hpp"

using namespace treeopf;

namespace {

Network two_bus(double r, double x, double p1 = -1.0, double q1 = 0.0) {
  Bus root;
  root.injection.pieces.push_back({{-5.0, 5.0}, {-5.0, 5.0}, 1.0, 0.0, 0.0});
  Bus load;
  load.id = 1;
  load.parent = 0;
  load.injection = InjectionDomain::singleton(p1, q1);
  load.P = {-2.0, 2.0};
  load.Q = {-2.0, 2.0};
  return Network({root, load}, {Branch{}, Branch{1, r, x}}, 1.0, 10.0);
}

Network random_tree(std::mt19937& rng, int n, int max_deg) {
  std::uniform_real_distribution<double> imp(0.002, 0.03);
  std::uniform_real_distribution<double> ld(-0.08, 0.02);
  std::vector<Bus> buses(1);
  buses[0].injection.pieces.push_back({{-10.0, 10.0}, {-10.0, 10.0}, 1.0, 0.0, 0.0});
  std::vector<Branch> branches(1);
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (int k = 1; k < n; ++k) {
    int par = 0;
    do {
      par = static_cast<int>(rng() % static_cast<unsigned>(k));
    } while (deg[static_cast<std::size_t>(par)] >= max_deg);
    ++deg[static_cast<std::size_t>(par)];
    Bus b;
    b.id = k;
    b.parent = par;
    b.injection = InjectionDomain::singleton(ld(rng), ld(rng));
    b.P = b.Q = {-3.0, 3.0};
    buses.push_back(b);
    branches.push_back({k, imp(rng), imp(rng)});
  }
  return Network(buses, branches, 1.0, 10.0);
}

std::vector<std::pair<double, double>> nominal(const Network& net) {
  std::vector<std::pair<double, double>> inj;
  for (const auto& b : net.buses()) inj.emplace_back(b.injection.pieces[0].p.lo, b.injection.pieces[0].q.lo);
  return inj;
}

PFState random_state(std::mt19937& rng, const Network& net) {
  std::uniform_real_distribution<double> vd(0.8, 1.2);
  std::uniform_real_distribution<double> fd(-0.5, 0.5);
  PFState s(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    s.v[i] = vd(rng);
    s.P[i] = fd(rng);
    s.Q[i] = fd(rng);
    s.p[i] = fd(rng);
    s.q[i] = fd(rng);
  }
  return s;
}

}  // namespace

TEST_CASE("leaf balance is exact when flow equals injection") {
  const auto net = two_bus(0.01, 0.01);
  PFState s(2);
  s.v = {1.0, 0.95};
  s.P[1] = s.p[1] = -0.3;
  s.Q[1] = s.q[1] = 0.1;
  const auto r = pf_residual(net, s);
  CHECK(r.real[1] == 0.0);
  CHECK(r.reactive[1] == 0.0);
}

TEST_CASE("voltage drop residual on the two-bus edge") {
  const auto net = two_bus(0.01, 0.01);
  PFState s(2);
  s.v = {0.9802, 1.0};
  s.P[1] = 1.0;
  auto r = pf_residual(net, s);
  CHECK(r.drop[1] == doctest::Approx(0.0).epsilon(1e-12));
  s.v[0] = 1.0;
  r = pf_residual(net, s);
  CHECK(r.drop[1] == doctest::Approx(1.0 - 0.9802).epsilon(1e-12));
}

TEST_CASE("division guard") {
  const auto net = two_bus(0.01, 0.01);
  PFState s(2);
  s.v = {1.0, 0.0};
  CHECK_THROWS_AS(pf_residual(net, s), DomainError);
}

TEST_CASE("root balance responds to a child flow perturbation") {
  const auto net = two_bus(0.02, 0.01);
  PFState s(2);
  s.v = {1.0, 0.97};
  s.P[1] = -0.4;
  s.Q[1] = 0.2;
  const double d = 1e-6;
  const auto r0 = pf_residual(net, s).real[0];
  s.P[1] += d;
  const auto r1 = pf_residual(net, s).real[0];
  const double P = -0.4;
  const double expected = -(d - 0.02 * 2.0 * P * d / 0.97);
  CHECK(r1 - r0 == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("residual is affine in injections") {
  std::mt19937 rng(3);
  const auto net = random_tree(rng, 8, 3);
  auto s = random_state(rng, net);
  const auto r0 = pf_residual(net, s);
  s.p[2] += 0.3;
  s.q[5] -= 0.7;
  const auto r1 = pf_residual(net, s);
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(r1.real[i] - r0.real[i] == doctest::Approx(i == 2 ? -0.3 : 0.0));
    CHECK(r1.reactive[i] - r0.reactive[i] == doctest::Approx(i == 5 ? 0.7 : 0.0));
    CHECK(r1.drop[i] == r0.drop[i]);
  }
}

TEST_CASE("analytic jacobian matches central differences") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = random_tree(rng, 3 + trial % 6, 2 + trial % 3);
    const auto s = random_state(rng, net);
    const auto J = pf_jacobian(net, s);
    const auto n = net.size();
    const double h = 1e-6;
    auto stacked = [&](const PFState& st) {
      const auto r = pf_residual(net, st);
      Eigen::VectorXd F(static_cast<Eigen::Index>(3 * (n - 1)));
      for (std::size_t k = 1; k < n; ++k) {
        F(static_cast<Eigen::Index>(3 * (k - 1))) = r.real[k];
        F(static_cast<Eigen::Index>(3 * (k - 1) + 1)) = r.reactive[k];
        F(static_cast<Eigen::Index>(3 * (k - 1) + 2)) = r.drop[k];
      }
      return F;
    };
    for (std::size_t k = 1; k < n; ++k) {
      for (int comp = 0; comp < 3; ++comp) {
        auto plus = s;
        auto minus = s;
        auto& fp = comp == 0 ? plus.v : comp == 1 ? plus.P : plus.Q;
        auto& fm = comp == 0 ? minus.v : comp == 1 ? minus.P : minus.Q;
        fp[k] += h;
        fm[k] -= h;
        const Eigen::VectorXd fd = (stacked(plus) - stacked(minus)) / (2 * h);
        const Eigen::VectorXd an = J.col(static_cast<Eigen::Index>(3 * (k - 1) + comp));
        CHECK((fd - an).norm() <= 1e-5 * std::max(1.0, an.norm()));
      }
    }
  }
}

TEST_CASE("flat start is exact with zero injections") {
  std::mt19937 rng(5);
  const auto net = random_tree(rng, 6, 3);
  std::vector<std::pair<double, double>> zero(net.size(), {0.0, 0.0});
  const auto res = solve_pf_newton(net, zero);
  REQUIRE(res.converged());
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(res.state.v[i] == 1.0);
    CHECK(res.state.P[i] == 0.0);
  }
  CHECK(pf_residual(net, res.state).max_abs() == 0.0);
}

TEST_CASE("two-bus newton matches the closed form") {
  for (auto [r, x, p, q] : {std::tuple{0.01, 0.01, -1.0, 0.0}, std::tuple{0.03, 0.05, -0.6, -0.3},
                           std::tuple{0.02, 0.01, 0.4, 0.1}}) {
    const auto net = two_bus(r, x, p, q);
    const auto res = solve_pf_newton(net, nominal(net));
    REQUIRE(res.converged());
    const double z2 = r * r + x * x;
    const double B = 1.0 + 2.0 * (p * r + q * x);
    const double v1 = 0.5 * (B + std::sqrt(B * B - 4.0 * z2 * (p * p + q * q)));
    CHECK(res.state.v[1] == doctest::Approx(v1).epsilon(1e-10));
    CHECK(std::abs(res.state.v[1] - v1) <= 1e-8);
    CHECK(res.state.P[1] == doctest::Approx(p));
    CHECK(res.state.p[0] == doctest::Approx(-(p - r * (p * p + q * q) / v1)));
    if (p < 0) CHECK(res.state.v[1] < 1.0);
  }
}

TEST_CASE("newton residual is tiny on random trees") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto net = random_tree(rng, 2 + trial % 15, 4);
    const auto res = solve_pf_newton(net, nominal(net));
    REQUIRE(res.converged());
    CHECK(pf_residual(net, res.state).max_abs() <= 1e-8);
    CHECK(res.state.v[0] == 1.0);
  }
}

TEST_CASE("absurd load fails to converge") {
  const auto net = two_bus(0.01, 0.01, -1e6, 0.0);
  const auto res = solve_pf_newton(net, nominal(net));
  CHECK_FALSE(res.converged());
}

TEST_CASE("violation report") {
  std::mt19937 rng(23);
  const auto net = random_tree(rng, 6, 2);
  const auto res = solve_pf_newton(net, nominal(net));
  REQUIRE(res.converged());
  auto rep = violation_report(net, res.state);
  CHECK(rep.max() <= 1e-8);

  auto s = res.state;
  auto buses = net.buses();
  buses[3].v.hi = s.v[3] - 0.004;
  const Network tight(buses, net.branches(), net.v_ref(), net.M());
  rep = violation_report(tight, s);
  CHECK(rep.max_v_violation == doctest::Approx(0.004));
  CHECK(rep.worst_v_bus == 3);

  s.p[2] += 0.25;
  rep = violation_report(net, s);
  CHECK(rep.max_injection_violation == doctest::Approx(0.25));
  CHECK(rep.worst_injection_bus == 2);
  CHECK(rep.max_pf_residual == doctest::Approx(0.25));
}

TEST_CASE("cost evaluation") {
  Bus root;
  root.injection.pieces = {{{0.0, 0.0}, {0.0, 0.0}, 0.0, 0.0, 0.0}};
  Bus cur;
  cur.id = 1;
  cur.parent = 0;
  cur.injection.pieces = {{{-0.2, -0.2}, {0.0, 0.0}, 0.0, 0.0, 0.0},
                          {{-0.1, -0.1}, {0.0, 0.0}, 0.0, 0.0, 5.0}};
  Bus over;
  over.id = 2;
  over.parent = 0;
  over.injection.pieces = {{{0.0, 1.0}, {0.0, 1.0}, 0.0, 0.0, 7.0},
                           {{0.0, 1.0}, {0.0, 1.0}, 0.0, 0.0, 3.0}};
  const Network net({root, cur, over}, {Branch{}, Branch{1, 0.0, 0.0}, Branch{2, 0.0, 0.0}}, 1.0, 10.0);
  std::vector<std::pair<double, double>> inj{{0.0, 0.0}, {-0.2, 0.0}, {0.5, 0.5}};
  CHECK(evaluate_cost(net, inj) == doctest::Approx(3.0));
  inj[1] = {-0.1, 0.0};
  CHECK(evaluate_cost(net, inj) == doctest::Approx(8.0));
  inj[1] = {-0.15, 0.0};
  CHECK_THROWS_AS(evaluate_cost(net, inj), DomainError);
}

TEST_CASE("extended states satisfy the transformed equations") {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const auto net = random_tree(rng, 3 + trial % 18, 6);
    const auto res = solve_pf_newton(net, nominal(net));
    REQUIRE(res.converged());
    const auto tree = to_binary_tree(net);
    const auto ext = extend_state(tree, res.state);
    CHECK(pf_residual(tree.network, ext).max_abs() <= 1e-8);
    const auto back = restrict_state(tree.map, ext);
    CHECK(back.v == res.state.v);
    CHECK(back.P == res.state.P);
    CHECK(pf_residual(net, back).max_abs() <= 1e-8);
  }
}
