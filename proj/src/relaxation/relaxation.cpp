#include "treeopf/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

namespace treeopf {

LinearConstraintSet square_envelope(Interval y) {
  LinearConstraintSet set;
  set.variables = {"x", "y"};
  // Tangent at a: x >= 2a*y - a^2.
  for (double a : {y.lo, y.mid(), y.hi}) set.rows.push_back({{{0, -1.0}, {1, 2.0 * a}}, a * a});
  set.rows.push_back({{{0, 1.0}, {1, -(y.lo + y.hi)}}, -y.lo * y.hi});
  return set;
}

LinearConstraintSet mccormick_envelope(Interval y, Interval z) {
  LinearConstraintSet set;
  set.variables = {"x", "y", "z"};
  set.rows.push_back({{{0, -1.0}, {1, z.lo}, {2, y.lo}}, y.lo * z.lo});
  set.rows.push_back({{{0, -1.0}, {1, z.hi}, {2, y.hi}}, y.hi * z.hi});
  set.rows.push_back({{{0, 1.0}, {1, -z.lo}, {2, -y.hi}}, -y.hi * z.lo});
  set.rows.push_back({{{0, 1.0}, {1, -z.hi}, {2, -y.lo}}, -y.lo * z.hi});
  return set;
}

LinearConstraintSet cone_outer_approx(int facets, std::span<const double> scales) {
  if (facets < 8) throw Error("cone approximation needs at least 8 facets");
  LinearConstraintSet set;
  set.variables = {"P", "Q", "v", "i"};
  const double unit[] = {1.0};
  const auto use = scales.empty() ? std::span<const double>(unit) : scales;
  for (double s : use) {
    if (!(s > 0.0)) throw Error("cone scale must be positive");
    for (int j = 0; j < facets; ++j) {
      const double t = 2.0 * std::numbers::pi * j / facets;
      set.rows.push_back({{{0, std::cos(t)}, {1, std::sin(t)}, {2, -0.5 * s}, {3, -0.5 / s}}, 0.0});
    }
  }
  return set;
}

Interval current_range(const IntervalRegion& box) {
  if (box.empty() || !(box.v.lo > 0.0)) {
    throw DomainError("current range needs a nonempty box with positive voltage");
  }
  const Interval S = square(box.P) + square(box.Q);
  return {S.lo / box.v.hi, S.hi / box.v.lo};
}

BoundsSet initial_bounds(const Network& net) {
  BoundsSet out;
  out.buses.resize(net.size());
  for (const auto& bus : net.buses()) {
    auto& b = out[bus.id];
    if (bus.id == kRootBus) {
      b = {Interval::point(net.v_ref()), Interval::point(0.0), Interval::point(0.0),
           Interval::point(0.0)};
      continue;
    }
    b.v = bus.v;
    b.P = bus.P;
    b.Q = bus.Q;
    b.i = current_range(b.region());
  }
  return out;
}

namespace {

// Scales at which the cone facets touch the cone across the current range.
std::vector<double> cone_scales(Interval v, Interval i) {
  const double hi = std::sqrt(std::max(i.hi, 0.0) / v.lo);
  if (!(hi > 1e-9)) return {1.0};
  const double lo = std::max(std::sqrt(std::max(i.lo, 0.0) / v.hi), hi * 1e-2);
  if (hi / lo < 1.05) return {std::sqrt(lo * hi)};
  constexpr int kScales = 4;
  std::vector<double> s;
  const double ratio = std::pow(hi / lo, 1.0 / (kScales - 1));
  for (int k = 0; k < kScales; ++k) s.push_back(lo * std::pow(ratio, k));
  return s;
}

// Adds the relaxation of v*i = P^2 + Q^2 for one bus and returns the columns
// of its auxiliary variables.
struct CurrentColumns {
  int sqP, sqQ, prod;
};

CurrentColumns add_current_relaxation(LinearProgram& lp, int v, int P, int Q, int i,
                                      const RelaxOptions& opt) {
  const Interval vb = lp.bounds(v);
  const Interval Pb = lp.bounds(P);
  const Interval Qb = lp.bounds(Q);
  const Interval ib = lp.bounds(i);
  const int sqP = lp.add_variable(square(Pb));
  const int sqQ = lp.add_variable(square(Qb));
  const int prod = lp.add_variable(vb * ib);
  lp.add_eq({{sqP, 1.0}, {sqQ, 1.0}, {prod, -1.0}}, 0.0);
  const int c1[] = {sqP, P};
  lp.add(square_envelope(Pb), c1);
  const int c2[] = {sqQ, Q};
  lp.add(square_envelope(Qb), c2);
  const int c3[] = {prod, v, i};
  lp.add(mccormick_envelope(vb, ib), c3);
  const auto scales = cone_scales(vb, ib);
  const int c4[] = {P, Q, v, i};
  lp.add(cone_outer_approx(opt.facets, scales), c4);
  return {sqP, sqQ, prod};
}

}  // namespace

PropBoundProgram build_prop_bound_program(const Network& net, BusId bus,
                                          const IntervalRegion& parent_cell,
                                          std::span<const ChildCell> children,
                                          const InjectionPiece& piece, const RelaxOptions& opt) {
  PropBoundProgram prog;
  auto& lp = prog.lp;
  prog.v = lp.add_variable(parent_cell.v, "v");
  prog.P = lp.add_variable(parent_cell.P, "P");
  prog.Q = lp.add_variable(parent_cell.Q, "Q");
  prog.p = lp.add_variable(piece.p, "p");
  prog.q = lp.add_variable(piece.q, "q");

  std::vector<std::pair<int, double>> real{{prog.P, 1.0}, {prog.p, -1.0}};
  std::vector<std::pair<int, double>> reactive{{prog.Q, 1.0}, {prog.q, -1.0}};
  for (const auto& child : children) {
    if (net.parent(child.bus) != bus) throw Error("prop_bound child is not a child of the bus");
    const auto& br = net.branch(child.bus);
    PropBoundProgram::ChildColumns cols{};
    cols.v = lp.add_variable(child.region.v);
    cols.P = lp.add_variable(child.region.P);
    cols.Q = lp.add_variable(child.region.Q);
    cols.i = lp.add_variable(child.i);
    const auto aux = add_current_relaxation(lp, cols.v, cols.P, cols.Q, cols.i, opt);
    cols.sqP = aux.sqP;
    cols.sqQ = aux.sqQ;
    cols.prod = aux.prod;

    real.emplace_back(cols.P, -1.0);
    real.emplace_back(cols.i, br.r);
    reactive.emplace_back(cols.Q, -1.0);
    reactive.emplace_back(cols.i, br.x);
    lp.add_eq({{prog.v, 1.0},
               {cols.v, -1.0},
               {cols.i, -br.z2()},
               {cols.P, 2.0 * br.r},
               {cols.Q, 2.0 * br.x}},
              0.0);
    prog.children.push_back(cols);
  }
  lp.add_eq(std::move(real), 0.0);
  lp.add_eq(std::move(reactive), 0.0);

  prog.cost.assign(static_cast<std::size_t>(lp.num_variables()), 0.0);
  prog.cost[static_cast<std::size_t>(prog.p)] = piece.a;
  prog.cost[static_cast<std::size_t>(prog.q)] = piece.b;
  return prog;
}

std::optional<PropBoundResult> prop_bound(const Network& net, BusId bus,
                                          const IntervalRegion& parent_cell,
                                          std::span<const ChildCell> children,
                                          const RelaxOptions& opt) {
  if (parent_cell.empty()) return std::nullopt;
  for (const auto& c : children) {
    if (c.region.empty() || c.i.empty()) return std::nullopt;
  }
  std::optional<PropBoundResult> best;
  IntervalRegion hull_region{Interval::empty_set(), Interval::empty_set(), Interval::empty_set()};
  const auto& pieces = net.bus(bus).injection.pieces;
  for (std::size_t t = 0; t < pieces.size(); ++t) {
    const auto& piece = pieces[t];
    const auto prog = build_prop_bound_program(net, bus, parent_cell, children, piece, opt);
    const LpSolver solver(prog.lp, opt.lp);
    if (solver.trivially_infeasible()) continue;
    const auto sol = solver.solve(prog.cost);
    if (!sol.optimal()) continue;

    IntervalRegion region = parent_cell;
    auto shrink = [&](int col, Interval& iv) {
      if (iv.width() <= 1e-12) return;
      const auto lo = solver.solve_var(col, Sense::minimize);
      const auto hi = solver.solve_var(col, Sense::maximize);
      const double plo = lo.optimal() ? lo.bound - 1e-9 * (1.0 + std::abs(lo.bound)) : iv.lo;
      const double phi = hi.optimal() ? hi.bound + 1e-9 * (1.0 + std::abs(hi.bound)) : iv.hi;
      const Interval merged = intersect(iv, Interval{plo, phi});
      iv = merged.empty() ? Interval::point(iv.clamp(0.5 * (plo + phi))) : merged;
    };
    shrink(prog.v, region.v);
    shrink(prog.P, region.P);
    shrink(prog.Q, region.Q);
    region = intersect(region, parent_cell);
    if (region.empty()) continue;
    hull_region = hull(hull_region, region);

    double p = piece.p.clamp(sol.x[static_cast<std::size_t>(prog.p)]);
    double q = piece.q.clamp(sol.x[static_cast<std::size_t>(prog.q)]);
    // Slide (p, q) down to the certified bound so the stored cost is both
    // a valid lower bound and the cost of the stored injection.
    const double floor = minimize_affine(piece, piece.p, piece.q).cost;
    const double target = std::max(floor, std::min(piece.cost(p, q), sol.bound + piece.c));
    if (piece.a != 0.0 && piece.cost(p, q) > target) {
      p = piece.p.clamp(p - (piece.cost(p, q) - target) / piece.a);
    }
    if (piece.b != 0.0 && piece.cost(p, q) > target) {
      q = piece.q.clamp(q - (piece.cost(p, q) - target) / piece.b);
    }
    const double cost = piece.cost(p, q);
    if (!best || cost < best->cost_lb) best = PropBoundResult{{}, p, q, cost, static_cast<int>(t)};
  }
  if (best) best->region = hull_region;
  return best;
}

// ---------------------------------------------------------------------------

namespace {

struct NetworkColumns {
  std::vector<int> v, P, Q, i, p, q;
};

LinearProgram build_network_program(const Network& net, const BoundsSet& b, const RelaxOptions& opt,
                                    NetworkColumns& cols) {
  LinearProgram lp;
  const auto n = net.size();
  cols = {};
  for (std::size_t k = 0; k < n; ++k) {
    const auto bid = static_cast<BusId>(k);
    const auto& bus = net.bus(bid);
    cols.v.push_back(lp.add_variable(b[bid].v));
    cols.P.push_back(lp.add_variable(b[bid].P));
    cols.Q.push_back(lp.add_variable(b[bid].Q));
    cols.i.push_back(k == 0 ? -1 : lp.add_variable(b[bid].i));
    cols.p.push_back(lp.add_variable(bus.injection.p_hull()));
    cols.q.push_back(lp.add_variable(bus.injection.q_hull()));
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto bid = static_cast<BusId>(k);
    std::vector<std::pair<int, double>> real{{cols.P[k], 1.0}, {cols.p[k], -1.0}};
    std::vector<std::pair<int, double>> reactive{{cols.Q[k], 1.0}, {cols.q[k], -1.0}};
    for (BusId c : net.children(bid)) {
      const auto cc = static_cast<std::size_t>(c);
      real.emplace_back(cols.P[cc], -1.0);
      real.emplace_back(cols.i[cc], net.branch(c).r);
      reactive.emplace_back(cols.Q[cc], -1.0);
      reactive.emplace_back(cols.i[cc], net.branch(c).x);
    }
    lp.add_eq(std::move(real), 0.0);
    lp.add_eq(std::move(reactive), 0.0);
    if (k == 0) continue;
    const auto& br = net.branch(bid);
    const auto par = static_cast<std::size_t>(net.parent(bid));
    lp.add_eq({{cols.v[par], 1.0},
               {cols.v[k], -1.0},
               {cols.i[k], -br.z2()},
               {cols.P[k], 2.0 * br.r},
               {cols.Q[k], 2.0 * br.x}},
              0.0);
    add_current_relaxation(lp, cols.v[k], cols.P[k], cols.Q[k], cols.i[k], opt);
  }
  return lp;
}

double max_change(const BoundsSet& a, const BoundsSet& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& x = a.buses[k];
    const auto& y = b.buses[k];
    for (auto [u, w] : {std::pair{x.v, y.v}, {x.P, y.P}, {x.Q, y.Q}, {x.i, y.i}}) {
      m = std::max({m, std::abs(u.lo - w.lo), std::abs(u.hi - w.hi)});
    }
  }
  return m;
}

}  // namespace

TightenResult tighten_bounds(const Network& net, const TightenOptions& options) {
  return tighten_bounds(net, initial_bounds(net), options);
}

TightenResult tighten_bounds(const Network& net, BoundsSet start, const TightenOptions& options) {
  if (start.size() != net.size()) throw Error("bounds set does not match the network");
  for (std::size_t k = 1; k < start.size(); ++k) {
    auto& b = start.buses[k];
    if (b.region().empty() || !(b.v.lo > 0.0)) {
      throw InfeasibleError("bus " + std::to_string(k) + " has empty bounds");
    }
    b.i = intersect(intersect(b.i, Interval{0.0, b.i.hi}), current_range(b.region()));
    if (b.i.empty()) throw InfeasibleError("bus " + std::to_string(k) + " has empty current bounds");
  }
  TightenResult out;
  out.history.push_back(start);
  BoundsSet cur = std::move(start);
  const auto n = net.size();

  for (int it = 0; it < options.max_iters; ++it) {
    NetworkColumns cols;
    const auto lp = build_network_program(net, cur, options.relax, cols);
    const LpSolver solver(lp, options.relax.lp);
    std::vector<double> zero(static_cast<std::size_t>(lp.num_variables()), 0.0);
    if (solver.trivially_infeasible() || !solver.solve(zero).optimal()) {
      throw InfeasibleError("the network relaxation has no feasible point");
    }
    // Same-sense solves run back to back so each warm start stays close.
    std::vector<int> targets;
    for (std::size_t k = 1; k < n; ++k) {
      for (int col : {cols.v[k], cols.P[k], cols.Q[k], cols.i[k]}) targets.push_back(col);
    }
    std::vector<double> lower(targets.size());
    std::vector<double> upper(targets.size());
    for (const auto [sense, out] : {std::pair{Sense::minimize, &lower}, {Sense::maximize, &upper}}) {
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto sol = solver.solve_var(targets[t], sense);
        if (!sol.optimal()) throw InfeasibleError("the network relaxation has no feasible point");
        (*out)[t] = sol.bound;
      }
    }
    BoundsSet next = cur;
    for (std::size_t k = 1, t = 0; k < n; ++k) {
      auto& nb = next.buses[k];
      for (Interval* iv : {&nb.v, &nb.P, &nb.Q, &nb.i}) {
        const Interval fresh{lower[t] - 1e-9 * (1.0 + std::abs(lower[t])),
                             upper[t] + 1e-9 * (1.0 + std::abs(upper[t]))};
        ++t;
        const Interval merged = intersect(*iv, fresh);
        *iv = merged.empty() ? *iv : merged;
      }
      nb.i = intersect(nb.i, current_range(nb.region()));
      if (nb.i.empty()) nb.i = cur.buses[k].i;
    }
    const double change = max_change(cur, next);
    out.changes.push_back(change);
    out.history.push_back(next);
    cur = std::move(next);
    out.iterations = it + 1;
    spdlog::debug("bound tightening iteration {}: max change {:.3e}", it + 1, change);
    if (change < options.stall_tol) break;
  }
  out.bounds = std::move(cur);
  return out;
}

}  // namespace treeopf
