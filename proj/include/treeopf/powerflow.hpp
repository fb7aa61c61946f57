#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "treeopf/netmodel.hpp"

namespace treeopf {

/// Branch-flow state, one entry per bus. v is the squared voltage magnitude,
/// (P, Q) the flow a bus sends to its parent and (p, q) its net injection.
struct PFState {
  std::vector<double> v;
  std::vector<double> P;
  std::vector<double> Q;
  std::vector<double> p;
  std::vector<double> q;

  PFState() = default;
  explicit PFState(std::size_t n) : v(n, 0.0), P(n, 0.0), Q(n, 0.0), p(n, 0.0), q(n, 0.0) {}
  std::size_t size() const { return v.size(); }
};

/// Per-bus residuals of the real and reactive balance and, for every
/// non-root bus k, of the voltage-drop equation on the edge (parent(k), k).
/// drop[0] is always 0.
struct PFResidual {
  std::vector<double> real;
  std::vector<double> reactive;
  std::vector<double> drop;

  double max_abs() const;
};

PFResidual pf_residual(const Network& net, const PFState& state);

/// Jacobian of the non-root residuals (real, reactive, drop for buses
/// 1..n-1, in that order per bus) with respect to (v, P, Q) of buses 1..n-1.
Eigen::MatrixXd pf_jacobian(const Network& net, const PFState& state);

struct NewtonOptions {
  int max_iters = 50;
  double tol = 1e-8;
};

enum class NewtonStatus { converged, no_convergence, singular, domain };

struct NewtonResult {
  NewtonStatus status = NewtonStatus::no_convergence;
  PFState state;
  int iterations = 0;
  double residual = 0.0;

  bool converged() const { return status == NewtonStatus::converged; }
};

/// Solves the branch-flow equations for fixed non-root injections with the
/// root held at (v_ref, P=0, Q=0). The root injection is returned as slack.
NewtonResult solve_pf_newton(const Network& net, std::span<const std::pair<double, double>> injections,
                             const NewtonOptions& options = {});

std::string to_string(NewtonStatus s);

struct ViolationReport {
  double max_v_violation = 0.0;
  double max_flow_violation = 0.0;
  double max_injection_violation = 0.0;
  double max_pf_residual = 0.0;
  BusId worst_v_bus = -1;
  BusId worst_flow_bus = -1;
  BusId worst_injection_bus = -1;
  BusId worst_pf_bus = -1;

  double max() const;
};

/// Distance of the state outside every bound of the problem, plus the largest
/// power-flow residual. Root voltage is measured against v_ref and root flows
/// against zero.
ViolationReport violation_report(const Network& net, const PFState& state);

/// Total cost; each bus is charged the cheapest piece containing its
/// injection (within tol).
double evaluate_cost(const Network& net, std::span<const std::pair<double, double>> injections,
                     double tol = 1e-9);
double evaluate_cost(const Network& net, const PFState& state, double tol = 1e-9);

/// Restricts a state on the degree-3 transform to the original buses.
PFState restrict_state(const NodeMap& map, const PFState& state);

/// Lifts a state on the original network to its degree-3 transform. Synthetic
/// buses get zero injection, the voltage of the bus they were split from and
/// the flow their children deliver.
PFState extend_state(const BinaryTree& tree, const PFState& state);

}  // namespace treeopf
