#include <algorithm>

#include "doctest.h"
#include "treeopf/casegen.hpp"
#include "treeopf/oracle.hpp"

using namespace treeopf;

namespace {

double min_voltage(const PFState& s) { return *std::min_element(s.v.begin() + 1, s.v.end()); }

}  // namespace

TEST_CASE("random curtailment trees are reproducible and overloaded") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto net = random_curtailment_tree(seed);
    CHECK(serialize_network(net) == serialize_network(random_curtailment_tree(seed)));
    CHECK(net.size() >= 3);
    CHECK(net.size() <= 8);
    CHECK(net.max_children() <= 3);
    CHECK(validate_assumptions(net).ok());

    const auto inst = CurtailmentInstance::from_network(net);
    REQUIRE(!inst.loads.empty());
    CHECK(inst.loads.size() <= 6);
    const double floor = net.bus(1).v.lo;
    const std::vector<int> none(inst.loads.size(), 0);
    const std::vector<int> all(inst.loads.size(), 1);
    const auto nominal = solve_pf_newton(net, inst.injections(none));
    const auto reduced = solve_pf_newton(net, inst.injections(all));
    REQUIRE(nominal.converged());
    REQUIRE(reduced.converged());
    CHECK(min_voltage(nominal.state) < floor);
    CHECK(min_voltage(reduced.state) > floor);
    for (const auto& l : inst.loads) {
      CHECK(l.cost_red > 0.0);
      CHECK(l.p_red > l.p_nom);
    }
  }
}

TEST_CASE("root pieces cover every configuration's slack injection") {
  const auto net = random_curtailment_tree(9);
  const auto inst = CurtailmentInstance::from_network(net);
  const auto& root = net.bus(kRootBus).injection;
  CHECK(static_cast<double>(root.pieces.size()) <= net.M());
  for (const auto& t : root.pieces) CHECK(t.width() <= 1.0 / net.M());
  std::vector<int> sigma(inst.loads.size());
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << sigma.size()); ++code) {
    for (std::size_t j = 0; j < sigma.size(); ++j) sigma[j] = static_cast<int>((code >> j) & 1U);
    const auto pf = solve_pf_newton(net, inst.injections(sigma));
    REQUIRE(pf.converged());
    const bool covered = std::any_of(root.pieces.begin(), root.pieces.end(), [&](const InjectionPiece& t) {
      return t.p.contains(pf.state.p[0]) && t.q.contains(pf.state.q[0]);
    });
    CHECK(covered);
  }
}

TEST_CASE("chain networks") {
  const auto net = chain_network(5, 0.01, 0.02, -0.03, -0.01);
  CHECK(net.size() == 5);
  CHECK(net.max_children() == 1);
  CHECK(net.branch(4).x == 0.02);
  CHECK(net.bus(4).injection.pieces.front().p.lo == -0.03);
  CHECK(chain_network(1).size() == 1);
  CHECK_THROWS_AS(chain_network(0), Error);
}

TEST_CASE("load perturbation scales each bus by one factor") {
  const auto net = random_curtailment_tree(5);
  std::mt19937_64 rng(1);
  const auto same = perturb_loads(net, 0.0, rng);
  CHECK(serialize_network(same) == serialize_network(net));

  const auto moved = perturb_loads(net, 0.1, rng);
  for (const auto& b : net.buses()) {
    const auto& after = moved.bus(b.id).injection.pieces;
    if (b.id == kRootBus) {
      CHECK(after == b.injection.pieces);
      continue;
    }
    const double f = after[0].p.lo / b.injection.pieces[0].p.lo;
    CHECK(f >= 0.9);
    CHECK(f <= 1.1);
    for (std::size_t t = 0; t < after.size(); ++t) {
      CHECK(after[t].p.lo == doctest::Approx(f * b.injection.pieces[t].p.lo));
      CHECK(after[t].q.lo == doctest::Approx(f * b.injection.pieces[t].q.lo));
    }
  }
  CHECK_THROWS_AS(perturb_loads(net, 1.0, rng), Error);
}
