#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treeopf/netmodel.hpp"
#include "treeopf/powerflow.hpp"
#include "treeopf/region.hpp"
#include "treeopf/relaxation.hpp"

namespace treeopf {

/// Uniform grid over [lo, hi] with step eps; the last piece is truncated at
/// hi. A zero-width interval yields one piece.
std::vector<Interval> partition_interval(Interval range, double eps);

/// Grid cells of a (v, P, Q) box, v slowest. `scale` multiplies eps per
/// variable.
std::vector<IntervalRegion> partition(const IntervalRegion& box, double eps,
                                      std::array<double, 3> scale = {1.0, 1.0, 1.0});

struct PrefilterResult {
  Interval P;
  Interval Q;
  /// Child voltage implied by the parent slab, one per child cell.
  std::vector<Interval> child_v;

  bool empty() const;
};

/// Interval evaluation of the balance and voltage-drop equations: maps the
/// parent region and the child cells to the parent flows and child voltages
/// they allow. Child squared currents are taken from `child_i` when given and
/// from the cell's (P^2+Q^2)/v range otherwise.
PrefilterResult interval_prefilter(const Network& net, BusId bus, const IntervalRegion& parent,
                                   std::span<const IntervalRegion> child_cells,
                                   std::span<const Interval> child_i = {});

struct MessageEntry {
  IntervalRegion region;
  /// Lower bound on the cost of the subtree below and including this bus.
  double cost_lb = 0.0;
  double p = 0.0;
  double q = 0.0;
  /// Cost of (p, q) at this bus alone.
  double local_cost = 0.0;
  int piece = -1;
  /// Entry indices into the children's messages, -1 where absent.
  std::array<int, 2> back{-1, -1};
};

struct Message {
  BusId bus = 0;
  std::vector<MessageEntry> entries;
};

struct DpOptions {
  double epsilon = 0.02;
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  RelaxOptions relax;
  TightenOptions tighten;
  bool tighten_first = true;
  /// Bounds on the degree-3 tree to start from, e.g. those of an earlier
  /// solve of the same network. Skips tightening when set.
  std::optional<BoundsSet> bounds;
};

/// Leaf update: one entry per voltage slab and injection piece whose box
/// meets the flow bounds, charged the closed-form minimum of the piece cost.
Message leaf_update(const Network& net, BusId bus, const BoundsSet& bounds, const DpOptions& options);

/// Interior update over at most two children. `calls` accumulates the number
/// of prop_bound invocations.
Message node_update(const Network& net, BusId bus, std::span<const Message> children,
                    const BoundsSet& bounds, const DpOptions& options, long& calls);

struct RootChoice {
  int entry = -1;
  double cost = 0.0;
};

struct ForwardResult {
  /// Indexed by bus. The root message holds the pinned root step.
  std::vector<Message> messages;
  std::optional<RootChoice> root;
  std::vector<BusId> order;
  long propbound_calls = 0;
};

/// Messages from the leaves up, then the pinned root step. `root` is empty
/// when no combination survives at the root.
ForwardResult forward_pass(const Network& net, const BoundsSet& bounds, const DpOptions& options);

struct BusChoice {
  int entry = -1;
  IntervalRegion region;
  double v = 0.0;
  double P = 0.0;
  double Q = 0.0;
  double p = 0.0;
  double q = 0.0;
  double local_cost = 0.0;
  int piece = -1;
};

struct Solution {
  /// Indexed by bus of the network the DP ran on.
  std::vector<BusChoice> buses;
  double cost_lb = 0.0;
  /// Buses in the order their entries were fixed.
  std::vector<BusId> order;

  PFState midpoint_state() const;
  std::vector<std::pair<double, double>> injections() const;
};

/// Follows the back-pointers from the root choice down to the leaves.
Solution backward_pass(const Network& net, const ForwardResult& forward);

/// Midpoint state of the DP solution restricted to the original buses.
PFState map_solution_back(const BinaryTree& tree, const Solution& solution);

struct SolveStats {
  double epsilon = 0.0;
  long propbound_calls = 0;
  double wall_ms = 0.0;
  std::vector<std::size_t> message_sizes;
  double lower_bound = 0.0;
  double max_violation = 0.0;
  double resolved_violation = 0.0;
  int tighten_iterations = 0;
};

enum class SolveStatus { solved, infeasible };

struct SolveResult {
  SolveStatus status = SolveStatus::infeasible;
  std::string message;
  std::vector<ValidationIssue> issues;
  std::optional<BinaryTree> tree;
  BoundsSet bounds;
  ForwardResult forward;
  Solution solution;
  /// Region midpoints and stored injections on the original buses.
  PFState midpoint;
  ViolationReport violations;
  /// Power flow re-solved at the DP injections.
  NewtonResult resolved;
  ViolationReport resolved_violations;
  double resolved_cost = 0.0;
  SolveStats stats;

  bool solved() const { return status == SolveStatus::solved; }
};

/// Validation, degree-3 transform, bound tightening, forward and backward
/// passes, and violation reports of the midpoint and re-solved states.
SolveResult solve(const Network& net, const DpOptions& options = {});

}  // namespace treeopf
