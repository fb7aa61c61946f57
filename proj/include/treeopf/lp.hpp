#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "treeopf/interval.hpp"

namespace treeopf {

/// Sparse inequality sum(coef * var) <= rhs.
struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;

  double activity(std::span<const double> x) const;
};

/// Inequalities over a small set of named local variables. Envelope and cone
/// builders return these; a LinearProgram maps the names onto its columns.
struct LinearConstraintSet {
  std::vector<std::string> variables;
  std::vector<LinearRow> rows;

  /// Largest violation max(0, activity - rhs) at a point given in variable order.
  double max_violation(std::span<const double> values) const;
  bool satisfied(std::span<const double> values, double tol = 1e-12) const {
    return max_violation(values) <= tol;
  }
};

enum class Sense { minimize, maximize };

/// Linear program over box-bounded variables with inequality rows.
class LinearProgram {
 public:
  int add_variable(Interval bounds, std::string name = {});
  void set_bounds(int var, Interval bounds);
  void add_le(std::vector<std::pair<int, double>> terms, double rhs);
  void add_ge(std::vector<std::pair<int, double>> terms, double rhs);
  void add_eq(std::vector<std::pair<int, double>> terms, double rhs);
  /// Appends every row of `set`, with set.variables[j] mapped to column columns[j].
  void add(const LinearConstraintSet& set, std::span<const int> columns);

  int num_variables() const { return static_cast<int>(bounds_.size()); }
  std::size_t num_rows() const { return rows_.size(); }
  const std::vector<Interval>& bounds() const { return bounds_; }
  const Interval& bounds(int var) const { return bounds_.at(static_cast<std::size_t>(var)); }
  const std::vector<LinearRow>& rows() const { return rows_; }
  const std::string& name(int var) const { return names_.at(static_cast<std::size_t>(var)); }

  /// Largest row or bound violation at x.
  double max_violation(std::span<const double> x) const;

 private:
  std::vector<Interval> bounds_;
  std::vector<std::string> names_;
  std::vector<LinearRow> rows_;
};

enum class LpStatus { optimal, infeasible };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  /// Weak-duality bound on the optimum: a lower bound when minimizing and an
  /// upper bound when maximizing, valid regardless of rounding in the basis.
  double bound = 0.0;
  std::vector<double> x;
  int iterations = 0;

  bool optimal() const { return status == LpStatus::optimal; }
};

struct LpOptions {
  double feas_tol = 1e-9;
  double pivot_tol = 1e-9;
  int refactor_every = 40;
};

/// Dual simplex on the bounded-variable form. Construction presolves the
/// constraint system once; each solve() reuses it for a new objective.
class LpSolver {
 public:
  explicit LpSolver(const LinearProgram& lp, LpOptions options = {});

  /// True when presolve already proved the rows inconsistent with the box.
  bool trivially_infeasible() const { return infeasible_; }
  std::size_t active_rows() const { return rows_.size(); }

  /// Warm-starts from the last optimal basis, so a solver object must not be
  /// shared across threads.
  LpSolution solve(std::span<const double> objective, Sense sense = Sense::minimize) const;
  /// Optimizes a single variable.
  LpSolution solve_var(int var, Sense sense) const;

 private:
  int n_ = 0;
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<LinearRow> rows_;
  bool infeasible_ = false;
  LpOptions opt_;
  mutable std::vector<int> warm_;
  mutable std::vector<double> warm_inverse_;
  mutable int warm_age_ = 0;
};

/// One-shot convenience wrapper.
LpSolution solve_convex_subproblem(const LinearProgram& lp, std::span<const double> objective,
                                   Sense sense = Sense::minimize, LpOptions options = {});

}  // namespace treeopf
