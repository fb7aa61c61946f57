#include <limits>
#include <optional>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "treeopf/lp.hpp"

using namespace treeopf;

namespace {

// Exhaustive vertex enumeration: every n-subset of constraints (rows and
// bounds) that is nonsingular yields a candidate vertex.
std::optional<double> vertex_oracle(const LinearProgram& lp, const std::vector<double>& c, Sense sense) {
  const int n = lp.num_variables();
  std::vector<Eigen::VectorXd> g;
  std::vector<double> h;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(j) = -1.0;
    g.push_back(e);
    h.push_back(-lp.bounds(j).lo);
    e(j) = 1.0;
    g.push_back(e);
    h.push_back(lp.bounds(j).hi);
  }
  for (const auto& r : lp.rows()) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const auto& [j, v] : r.terms) a(j) += v;
    g.push_back(a);
    h.push_back(r.rhs);
  }
  const int m = static_cast<int>(g.size());
  std::optional<double> best;
  std::vector<int> pick(static_cast<std::size_t>(n));
  auto recurse = [&](auto&& self, int start, int depth) -> void {
    if (depth == n) {
      Eigen::MatrixXd B(n, n);
      Eigen::VectorXd rhs(n);
      for (int k = 0; k < n; ++k) {
        B.row(k) = g[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])].transpose();
        rhs(k) = h[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
      if (lu.rank() < n) return;
      const Eigen::VectorXd x = lu.solve(rhs);
      std::vector<double> xv(x.data(), x.data() + n);
      if (lp.max_violation(xv) > 1e-9) return;
      double val = 0.0;
      for (int j = 0; j < n; ++j) val += c[static_cast<std::size_t>(j)] * x(j);
      if (!best || (sense == Sense::minimize ? val < *best : val > *best)) best = val;
      return;
    }
    for (int k = start; k < m; ++k) {
      pick[static_cast<std::size_t>(depth)] = k;
      self(self, k + 1, depth + 1);
    }
  };
  recurse(recurse, 0, 0);
  return best;
}

}  // namespace

TEST_CASE("single bounded variable") {
  LinearProgram lp;
  lp.add_variable({2.0, 5.0});
  const std::vector<double> c{1.0};
  const auto s = solve_convex_subproblem(lp, c);
  REQUIRE(s.optimal());
  CHECK(s.value == 2.0);
  CHECK(s.x[0] == 2.0);
  const auto t = solve_convex_subproblem(lp, c, Sense::maximize);
  CHECK(t.value == 5.0);
}

TEST_CASE("contradictory rows are infeasible") {
  LinearProgram lp;
  const int x = lp.add_variable({-10.0, 10.0});
  lp.add_le({{x, 1.0}}, 1.0);
  lp.add_ge({{x, 1.0}}, 2.0);
  const std::vector<double> c{1.0};
  CHECK_FALSE(solve_convex_subproblem(lp, c).optimal());
}

TEST_CASE("infeasibility needing several pivots") {
  LinearProgram lp;
  const int x = lp.add_variable({0.0, 1.0});
  const int y = lp.add_variable({0.0, 1.0});
  lp.add_ge({{x, 1.0}, {y, 1.0}}, 1.5);
  lp.add_le({{x, 1.0}, {y, -1.0}}, -0.8);
  lp.add_le({{x, -1.0}, {y, 1.0}}, -0.8);
  const std::vector<double> c{1.0, 1.0};
  CHECK_FALSE(solve_convex_subproblem(lp, c).optimal());
}

TEST_CASE("equality rows and fixed variables") {
  LinearProgram lp;
  const int x = lp.add_variable({0.0, 4.0});
  const int y = lp.add_variable({1.0, 1.0});
  const int z = lp.add_variable({-3.0, 3.0});
  lp.add_eq({{x, 1.0}, {y, 1.0}, {z, 1.0}}, 2.0);
  lp.add_le({{x, 1.0}, {z, -1.0}}, 0.5);
  const std::vector<double> c{1.0, 0.0, -2.0};
  const auto s = solve_convex_subproblem(lp, c);
  REQUIRE(s.optimal());
  CHECK(s.value == doctest::Approx(-2.0));
  CHECK(lp.max_violation(s.x) <= 1e-9);
}

TEST_CASE("random LPs agree with vertex enumeration") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  int feasible = 0;
  int infeasible = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + static_cast<int>(rng() % 6);
    LinearProgram lp;
    for (int j = 0; j < n; ++j) {
      const double a = 2.0 * coef(rng);
      lp.add_variable({a - 1.0, a + 1.0 + std::abs(coef(rng))});
    }
    for (int r = 0; r < m; ++r) {
      std::vector<std::pair<int, double>> terms;
      for (int j = 0; j < n; ++j) {
        if (rng() % 4 != 0) terms.emplace_back(j, coef(rng));
      }
      const double rhs = coef(rng);
      if (rng() % 7 == 0) {
        lp.add_eq(terms, rhs);
      } else {
        lp.add_le(terms, rhs);
      }
    }
    std::vector<double> c(static_cast<std::size_t>(n));
    for (auto& v : c) v = coef(rng);
    for (Sense sense : {Sense::minimize, Sense::maximize}) {
      const auto oracle = vertex_oracle(lp, c, sense);
      const auto sol = solve_convex_subproblem(lp, c, sense);
      if (oracle) {
        ++feasible;
        REQUIRE(sol.optimal());
        CHECK(sol.value == doctest::Approx(*oracle).epsilon(1e-7));
        CHECK(lp.max_violation(sol.x) <= 1e-8);
        // The dual bound never crosses the true optimum and stays close to it.
        if (sense == Sense::minimize) {
          CHECK(sol.bound <= *oracle + 1e-9);
        } else {
          CHECK(sol.bound >= *oracle - 1e-9);
        }
        CHECK(std::abs(sol.bound - *oracle) <= 1e-5 * (1.0 + std::abs(*oracle)));
      } else {
        ++infeasible;
        CHECK_FALSE(sol.optimal());
      }
    }
  }
  CHECK(feasible > 100);
  CHECK(infeasible > 20);
}

TEST_CASE("warm-started solves over one constraint set agree with vertex enumeration") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + trial % 3;
    LinearProgram lp;
    for (int j = 0; j < n; ++j) lp.add_variable({-1.0 - std::abs(coef(rng)), 1.0 + std::abs(coef(rng))});
    for (int r = 0; r < 6; ++r) {
      std::vector<std::pair<int, double>> terms;
      for (int j = 0; j < n; ++j) terms.emplace_back(j, coef(rng));
      // Rows pass near the origin so the problem stays feasible.
      lp.add_le(terms, 0.2 + 0.3 * std::abs(coef(rng)));
    }
    if (trial % 5 == 0) lp.add_eq({{0, 1.0}, {1, -1.0}}, 0.1 * coef(rng));
    const LpSolver solver(lp);
    for (int k = 0; k < 8; ++k) {
      std::vector<double> c(static_cast<std::size_t>(n));
      for (auto& v : c) v = coef(rng);
      const Sense sense = k % 2 == 0 ? Sense::minimize : Sense::maximize;
      const auto oracle = vertex_oracle(lp, c, sense);
      REQUIRE(oracle);
      const auto sol = solver.solve(c, sense);
      REQUIRE(sol.optimal());
      CHECK(sol.value == doctest::Approx(*oracle).epsilon(1e-7));
      CHECK(lp.max_violation(sol.x) <= 1e-8);
      CHECK((sense == Sense::minimize ? sol.bound <= *oracle + 1e-9 : sol.bound >= *oracle - 1e-9));
      ++checked;
    }
  }
  CHECK(checked == 960);
}

TEST_CASE("degenerate problems terminate") {
  // Many redundant rows through the same vertex.
  LinearProgram lp;
  const int x = lp.add_variable({-1.0, 1.0});
  const int y = lp.add_variable({-1.0, 1.0});
  const int z = lp.add_variable({-1.0, 1.0});
  for (int k = 1; k <= 30; ++k) {
    const double a = 1.0 / k;
    lp.add_le({{x, a}, {y, 1.0 - a}, {z, 0.5}}, 0.0);
    lp.add_le({{x, -a}, {y, a - 1.0}, {z, 0.5}}, 0.0);
  }
  const std::vector<double> c{-1.0, -1.0, -1.0};
  const auto s = solve_convex_subproblem(lp, c);
  REQUIRE(s.optimal());
  const auto oracle = vertex_oracle(lp, c, Sense::minimize);
  REQUIRE(oracle);
  CHECK(s.value == doctest::Approx(*oracle).epsilon(1e-9));
}

TEST_CASE("solver reuse across objectives") {
  LinearProgram lp;
  const int x = lp.add_variable({0.0, 3.0});
  const int y = lp.add_variable({0.0, 3.0});
  lp.add_le({{x, 1.0}, {y, 1.0}}, 4.0);
  lp.add_ge({{x, 1.0}, {y, -1.0}}, -1.0);
  const LpSolver solver(lp);
  CHECK(solver.solve_var(x, Sense::maximize).value == doctest::Approx(3.0));
  CHECK(solver.solve_var(y, Sense::maximize).value == doctest::Approx(2.5));
  CHECK(solver.solve_var(y, Sense::minimize).value == doctest::Approx(0.0));
  CHECK(solver.solve_var(x, Sense::minimize).value == doctest::Approx(0.0));
}

TEST_CASE("constraint sets map onto columns") {
  LinearConstraintSet set;
  set.variables = {"a", "b"};
  set.rows.push_back({{{0, 1.0}, {1, 1.0}}, 1.0});
  const std::vector<double> inside{0.5, 0.5};
  const std::vector<double> outside{1.0, 0.5};
  CHECK(set.satisfied(inside));
  CHECK(set.max_violation(outside) == doctest::Approx(0.5));

  LinearProgram lp;
  const int u = lp.add_variable({0.0, 1.0});
  const int v = lp.add_variable({0.0, 1.0});
  const std::vector<int> cols{v, u};
  lp.add(set, cols);
  const std::vector<double> c{-1.0, -2.0};
  CHECK(solve_convex_subproblem(lp, c).value == doctest::Approx(-2.0));
}
