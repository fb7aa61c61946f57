#include "treeopf/casegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "treeopf/errors.hpp"
#include "treeopf/oracle.hpp"
#include "treeopf/powerflow.hpp"

namespace treeopf {

namespace {

Network rebuild(const Network& net, std::vector<Bus> buses) {
  return Network(std::move(buses), net.branches(), net.v_ref(), net.M());
}

}  // namespace

Network fit_root_pieces(const Network& net, const RootCost& cost) {
  const auto inst = CurtailmentInstance::from_network(net);
  const auto k = inst.loads.size();
  if (k > 16) throw CapExceededError("too many curtailable loads to fit root pieces");
  std::vector<std::pair<double, double>> slack;
  std::vector<int> sigma(k);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << k); ++code) {
    for (std::size_t j = 0; j < k; ++j) sigma[j] = static_cast<int>((code >> j) & 1U);
    const auto pf = solve_pf_newton(net, inst.injections(sigma));
    if (pf.converged()) slack.emplace_back(pf.state.p[0], pf.state.q[0]);
  }
  if (slack.empty()) throw InfeasibleError("no curtailment configuration has a power flow solution");
  std::sort(slack.begin(), slack.end());

  const double side = 1.0 / net.M();
  const double lo = slack.front().first - cost.margin;
  const double hi = slack.back().first + cost.margin;
  // Narrow p-windows keep each piece's reactive window short.
  const auto count = std::max(static_cast<int>(std::ceil((hi - lo) / (0.9999 * side))),
                              std::min(static_cast<int>(net.M()), cost.pieces));
  const double step = (hi - lo) / count;
  InjectionDomain root;
  for (int t = 0; t < count; ++t) {
    const Interval p{lo + t * step, t + 1 == count ? hi : lo + (t + 1) * step};
    Interval q = Interval::empty_set();
    for (const auto& [sp, sq] : slack) {
      if (p.padded(cost.margin).contains(sp)) q = hull(q, Interval::point(sq));
    }
    if (q.empty()) continue;
    q = q.padded(cost.margin);
    if (q.width() > side) q = {q.mid() - 0.4999 * side, q.mid() + 0.4999 * side};
    root.pieces.push_back({p, q, cost.a, cost.b, 0.0});
  }
  if (static_cast<double>(root.pieces.size()) > net.M()) throw Error("slack range needs more than M root pieces");
  auto buses = net.buses();
  buses[0].injection = std::move(root);
  return rebuild(net, std::move(buses));
}

namespace {

// One draw of the random feeder; empty when curtailing every load does not
// lift the lowest voltage.
std::optional<Network> draw_curtailment_tree(std::mt19937_64& rng, const RandomCaseOptions& options) {
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  const int n = pick(options.min_buses, options.max_buses);
  std::vector<Bus> buses(static_cast<std::size_t>(n));
  std::vector<Branch> branches(static_cast<std::size_t>(n));
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  buses[0].v = Interval::point(1.0);
  buses[0].P = buses[0].Q = Interval::point(0.0);
  buses[0].injection = InjectionDomain::singleton(0.0, 0.0);
  std::vector<double> p_nom(static_cast<std::size_t>(n)), q_nom(static_cast<std::size_t>(n));
  for (int k = 1; k < n; ++k) {
    int par = 0;
    do {
      par = pick(0, k - 1);
    } while (degree[static_cast<std::size_t>(par)] >= options.max_children);
    ++degree[static_cast<std::size_t>(par)];
    auto& b = buses[static_cast<std::size_t>(k)];
    b.id = k;
    b.parent = par;
    branches[static_cast<std::size_t>(k)] = {k, uni(0.02, 0.1), uni(0.02, 0.1)};
    p_nom[static_cast<std::size_t>(k)] = -uni(0.03, 0.1);
    q_nom[static_cast<std::size_t>(k)] = p_nom[static_cast<std::size_t>(k)] * uni(0.3, 0.6);
    b.injection = InjectionDomain::singleton(p_nom[static_cast<std::size_t>(k)], q_nom[static_cast<std::size_t>(k)]);
  }

  std::vector<int> ids(static_cast<std::size_t>(n - 1));
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int k = pick(1, std::min(options.max_curtailable, n - 1));
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    const auto j = static_cast<std::size_t>(id);
    const double keep = uni(0.2, 0.5);
    const double weight = uni(1.5, 4.0);
    const double pr = keep * p_nom[j];
    const double qr = keep * q_nom[j];
    buses[j].injection.pieces.push_back(
        {Interval::point(pr), Interval::point(qr), 0.0, 0.0, weight * (pr - p_nom[j])});
  }

  const Network draft(buses, branches, 1.0, options.M);
  const auto inst = CurtailmentInstance::from_network(draft);
  const std::vector<int> none(inst.loads.size(), 0);
  const std::vector<int> all(inst.loads.size(), 1);
  const auto nominal = solve_pf_newton(draft, inst.injections(none));
  const auto reduced = solve_pf_newton(draft, inst.injections(all));
  if (!nominal.converged() || !reduced.converged()) throw InternalError("random case has no power flow solution");
  auto vmin = [](const PFState& s) { return *std::min_element(s.v.begin() + 1, s.v.end()); };
  const double lo = vmin(nominal.state);
  if (vmin(reduced.state) - lo < 1e-3) return std::nullopt;
  const double floor = lo + uni(0.3, 0.7) * (vmin(reduced.state) - lo);
  for (int j = 1; j < n; ++j) buses[static_cast<std::size_t>(j)].v = {floor, 1.21};
  return fit_root_pieces(Network(buses, branches, 1.0, options.M));
}

}  // namespace

Network random_curtailment_tree(std::uint64_t seed, const RandomCaseOptions& options) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (auto net = draw_curtailment_tree(rng, options)) return *std::move(net);
  }
  throw InternalError("no overloaded feeder found for seed " + std::to_string(seed));
}

Network chain_network(int n, double r, double x, double p, double q) {
  if (n < 1) throw Error("a chain needs at least one bus");
  std::vector<Bus> buses(static_cast<std::size_t>(n));
  std::vector<Branch> branches(static_cast<std::size_t>(n));
  buses[0].v = Interval::point(1.0);
  buses[0].P = buses[0].Q = Interval::point(0.0);
  buses[0].injection = InjectionDomain::singleton(0.0, 0.0);
  for (int k = 1; k < n; ++k) {
    auto& b = buses[static_cast<std::size_t>(k)];
    b.id = k;
    b.parent = k - 1;
    b.v = {0.64, 1.21};
    b.injection = InjectionDomain::singleton(p, q);
    branches[static_cast<std::size_t>(k)] = {k, r, x};
  }
  return fit_root_pieces(Network(buses, branches, 1.0, 10.0));
}

Network perturb_loads(const Network& net, double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("perturbation must lie in [0, 1)");
  auto buses = net.buses();
  std::uniform_real_distribution<double> dist(1.0 - fraction, 1.0 + fraction);
  for (auto& b : buses) {
    if (b.id == kRootBus) continue;
    const double f = fraction > 0.0 ? dist(rng) : 1.0;
    for (auto& t : b.injection.pieces) {
      t.p = f * t.p;
      t.q = f * t.q;
    }
  }
  return rebuild(net, std::move(buses));
}

}  // namespace treeopf
