#pragma once

#include <cstdint>
#include <random>

#include "treeopf/netmodel.hpp"

namespace treeopf {

struct RootCost {
  double a = 1.0;
  double b = 0.0;
  double margin = 0.01;
  /// Preferred number of pieces, capped by M.
  int pieces = 1;
};

/// Replaces the root injection domain by boxes of side at most 1/M that
/// cover the slack injection of every curtailment configuration (padded by
/// `margin`), all charged the same affine cost.
Network fit_root_pieces(const Network& net, const RootCost& cost = {});

struct RandomCaseOptions {
  int min_buses = 3;
  int max_buses = 8;
  int max_children = 3;
  int max_curtailable = 6;
  double M = 10.0;
};

/// Random feeder whose loads overload it: running every load at nominal
/// breaks the voltage floor while curtailing all of them restores it.
Network random_curtailment_tree(std::uint64_t seed, const RandomCaseOptions& options = {});

/// Line of n buses (root included), each non-root bus with a fixed load.
Network chain_network(int n, double r = 0.005, double x = 0.005, double p = -0.01, double q = -0.005);

/// Scales each non-root bus's injection boxes (nominal and reduced alike) by
/// an independent factor drawn uniformly from [1 - fraction, 1 + fraction].
Network perturb_loads(const Network& net, double fraction, std::mt19937_64& rng);

}  // namespace treeopf
