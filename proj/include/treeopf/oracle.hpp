#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "treeopf/netmodel.hpp"
#include "treeopf/powerflow.hpp"

namespace treeopf {

/// A load that can run at its nominal or its reduced consumption.
struct CurtailableLoad {
  BusId bus = 0;
  double p_nom = 0.0;
  double q_nom = 0.0;
  double p_red = 0.0;
  double q_red = 0.0;
  double cost_nom = 0.0;
  double cost_red = 0.0;
};

struct CurtailmentInstance {
  Network base;
  std::vector<CurtailableLoad> loads;

  /// Reads the curtailment structure off the injection domains: a non-root
  /// bus with two singleton pieces is curtailable (piece 0 nominal, piece 1
  /// reduced); every other non-root bus must have one singleton piece.
  static CurtailmentInstance from_network(const Network& net);

  /// Non-root injections for a curtailment vector, root entry zero.
  std::vector<std::pair<double, double>> injections(std::span<const int> sigma) const;
};

struct OracleOptions {
  int cap = 20;
  double tol = 1e-6;
  NewtonOptions newton;
};

struct OracleResult {
  bool feasible = false;
  double cost = 0.0;
  std::vector<int> sigma;
  PFState state;
  std::uint64_t configurations = 0;
  std::uint64_t non_convergent = 0;
};

/// Enumerates every curtailment vector, solves the power flow and keeps the
/// cheapest state whose violation report stays within tol. Ties go to the
/// lexicographically smallest vector.
OracleResult brute_force_opf(const CurtailmentInstance& inst, const OracleOptions& options = {});

}  // namespace treeopf
