#pragma once

#include <optional>
#include <span>
#include <vector>

#include "treeopf/lp.hpp"
#include "treeopf/netmodel.hpp"
#include "treeopf/region.hpp"

namespace treeopf {

/// Cuts over (x, y) with x standing for y^2: tangents at the two ends and the
/// midpoint of the interval, plus the secant from above.
LinearConstraintSet square_envelope(Interval y);

/// The four McCormick inequalities over (x, y, z) with x standing for y*z.
LinearConstraintSet mccormick_envelope(Interval y, Interval z);

/// Polyhedral outer approximation of P^2 + Q^2 <= v*i over (P, Q, v, i):
/// P cos(t) + Q sin(t) <= (s*v + i/s)/2 for angles t = 2*pi*j/facets and
/// every scale s in `scales` (s = 1 when empty).
LinearConstraintSet cone_outer_approx(int facets, std::span<const double> scales = {});

/// Per-bus bounds on voltage, flows and squared current.
struct BusBounds {
  Interval v;
  Interval P;
  Interval Q;
  Interval i;

  IntervalRegion region() const { return {v, P, Q}; }
  friend bool operator==(const BusBounds&, const BusBounds&) = default;
};

struct BoundsSet {
  std::vector<BusBounds> buses;

  const BusBounds& operator[](BusId b) const { return buses.at(static_cast<std::size_t>(b)); }
  BusBounds& operator[](BusId b) { return buses.at(static_cast<std::size_t>(b)); }
  std::size_t size() const { return buses.size(); }
};

/// Bounds read from the case, with the root pinned to (v_ref, 0, 0) and the
/// squared current bounded by the worst-case quotient (P^2+Q^2)max / v_lo.
BoundsSet initial_bounds(const Network& net);

/// Upper end of the squared-current range implied by a (v, P, Q) box.
Interval current_range(const IntervalRegion& box);

struct RelaxOptions {
  int facets = 32;
  LpOptions lp;
};

/// A child cell fed into prop_bound.
struct ChildCell {
  BusId bus = 0;
  IntervalRegion region;
  Interval i;
};

/// Column indices of the LP assembled for one injection piece.
struct PropBoundProgram {
  struct ChildColumns {
    int v, P, Q, i, sqP, sqQ, prod;
  };
  LinearProgram lp;
  int v = -1;
  int P = -1;
  int Q = -1;
  int p = -1;
  int q = -1;
  std::vector<ChildColumns> children;
  std::vector<double> cost;
};

/// Relaxed balance, voltage-drop and current-definition constraints linking
/// the parent cell to its child cells with the parent injection in `piece`.
PropBoundProgram build_prop_bound_program(const Network& net, BusId bus,
                                          const IntervalRegion& parent_cell,
                                          std::span<const ChildCell> children,
                                          const InjectionPiece& piece,
                                          const RelaxOptions& options = {});

struct PropBoundResult {
  IntervalRegion region;
  double p = 0.0;
  double q = 0.0;
  double cost_lb = 0.0;
  int piece = -1;
};

/// Shrinks the parent cell to the hull of its relaxation-feasible points over
/// all injection pieces and returns the cheapest relaxed injection. Empty when
/// no piece admits a feasible point.
std::optional<PropBoundResult> prop_bound(const Network& net, BusId bus,
                                          const IntervalRegion& parent_cell,
                                          std::span<const ChildCell> children,
                                          const RelaxOptions& options = {});

struct TightenOptions {
  int max_iters = 10;
  double stall_tol = 1e-6;
  RelaxOptions relax;
};

struct TightenResult {
  BoundsSet bounds;
  /// history[k] holds the bounds after k iterations (history[0] = input).
  std::vector<BoundsSet> history;
  /// Largest endpoint movement per iteration.
  std::vector<double> changes;
  int iterations = 0;
};

/// Iterated whole-network relaxation: minimizes and maximizes v, P, Q and the
/// squared current of every non-root bus and feeds the result back into the
/// envelopes until the bounds stop moving.
TightenResult tighten_bounds(const Network& net, const TightenOptions& options = {});
TightenResult tighten_bounds(const Network& net, BoundsSet start, const TightenOptions& options = {});

}  // namespace treeopf
