#include "treeopf/oracle.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "treeopf/errors.hpp"

namespace treeopf {

namespace {

bool is_singleton(const InjectionPiece& t) { return t.p.width() == 0.0 && t.q.width() == 0.0; }

}  // namespace

CurtailmentInstance CurtailmentInstance::from_network(const Network& net) {
  CurtailmentInstance inst{net, {}};
  for (const auto& bus : net.buses()) {
    if (bus.id == kRootBus) continue;
    const auto& pieces = bus.injection.pieces;
    const bool discrete = !pieces.empty() && pieces.size() <= 2 &&
                          std::all_of(pieces.begin(), pieces.end(), is_singleton);
    if (!discrete) throw Error("bus " + std::to_string(bus.id) + " does not have a discrete injection domain");
    if (pieces.size() == 2) {
      inst.loads.push_back({bus.id, pieces[0].p.lo, pieces[0].q.lo, pieces[1].p.lo, pieces[1].q.lo,
                            pieces[0].cost(pieces[0].p.lo, pieces[0].q.lo),
                            pieces[1].cost(pieces[1].p.lo, pieces[1].q.lo)});
    }
  }
  return inst;
}

std::vector<std::pair<double, double>> CurtailmentInstance::injections(std::span<const int> sigma) const {
  if (sigma.size() != loads.size()) throw Error("curtailment vector has wrong length");
  std::vector<std::pair<double, double>> inj(base.size(), {0.0, 0.0});
  for (const auto& bus : base.buses()) {
    if (bus.id == kRootBus) continue;
    const auto& t = bus.injection.pieces.front();
    inj[static_cast<std::size_t>(bus.id)] = {t.p.lo, t.q.lo};
  }
  for (std::size_t k = 0; k < loads.size(); ++k) {
    const auto& l = loads[k];
    inj[static_cast<std::size_t>(l.bus)] = sigma[k] ? std::pair{l.p_red, l.q_red} : std::pair{l.p_nom, l.q_nom};
  }
  return inj;
}

OracleResult brute_force_opf(const CurtailmentInstance& inst, const OracleOptions& options) {
  const auto k = inst.loads.size();
  if (static_cast<int>(k) > options.cap) {
    throw CapExceededError(std::to_string(k) + " curtailable loads exceed the enumeration cap of " +
                           std::to_string(options.cap));
  }
  OracleResult best;
  std::vector<int> sigma(k, 0);
  const std::uint64_t total = std::uint64_t{1} << k;
  for (std::uint64_t code = 0; code < total; ++code) {
    // Most significant bit first, so increasing codes are lexicographic.
    for (std::size_t j = 0; j < k; ++j) sigma[j] = static_cast<int>((code >> (k - 1 - j)) & 1U);
    ++best.configurations;
    const auto inj = inst.injections(sigma);
    const auto pf = solve_pf_newton(inst.base, inj, options.newton);
    if (!pf.converged()) {
      ++best.non_convergent;
      spdlog::debug("oracle: configuration {} did not converge ({})", code, to_string(pf.status));
      continue;
    }
    if (violation_report(inst.base, pf.state).max() > options.tol) continue;
    const double cost = evaluate_cost(inst.base, pf.state, options.tol);
    if (!best.feasible || cost < best.cost) {
      best.feasible = true;
      best.cost = cost;
      best.sigma = sigma;
      best.state = pf.state;
    }
  }
  return best;
}

}  // namespace treeopf
