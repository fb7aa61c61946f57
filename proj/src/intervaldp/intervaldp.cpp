#include "treeopf/intervaldp.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <tuple>

#include <spdlog/spdlog.h>

#include "treeopf/errors.hpp"

namespace treeopf {

std::vector<Interval> partition_interval(Interval range, double eps) {
  if (!(eps > 0.0)) throw Error("partition step must be positive");
  if (range.empty()) return {};
  const double w = range.width();
  const auto count = std::max<long>(1, static_cast<long>(std::ceil(w / eps - 1e-9)));
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long m = 0; m < count; ++m) {
    const double lo = range.lo + static_cast<double>(m) * eps;
    const double hi = m + 1 == count ? range.hi : std::min(range.lo + static_cast<double>(m + 1) * eps, range.hi);
    out.push_back({lo, hi});
  }
  return out;
}

std::vector<IntervalRegion> partition(const IntervalRegion& box, double eps, std::array<double, 3> scale) {
  std::vector<IntervalRegion> out;
  for (const auto& v : partition_interval(box.v, eps * scale[0])) {
    for (const auto& P : partition_interval(box.P, eps * scale[1])) {
      for (const auto& Q : partition_interval(box.Q, eps * scale[2])) out.push_back({v, P, Q});
    }
  }
  return out;
}

bool PrefilterResult::empty() const {
  if (P.empty() || Q.empty()) return true;
  for (const auto& v : child_v) {
    if (v.empty()) return true;
  }
  return false;
}

namespace {

Interval cell_current(const IntervalRegion& cell, const Interval* given) {
  Interval i = given ? *given : current_range(cell);
  return intersect(i, Interval{0.0, std::numeric_limits<double>::infinity()});
}

// Child voltage from the parent voltage and the child's own flow and current:
// v_k = v_i - |z_k|^2 i_k + 2 (r_k P_k + x_k Q_k).
Interval implied_child_v(const Branch& br, Interval parent_v, const IntervalRegion& cell, Interval i) {
  const Interval v = parent_v - br.z2() * i + (2.0 * br.r) * cell.P + (2.0 * br.x) * cell.Q;
  return intersect(v, cell.v);
}

struct Grid {
  double lo = 0.0;
  double step = 1.0;
  long count = 1;

  Grid(Interval range, double eps)
      : lo(range.lo), step(eps),
        count(std::max<long>(1, static_cast<long>(std::ceil(range.width() / eps - 1e-9)))) {}

  Interval cell(long k) const {
    const double a = lo + static_cast<double>(k) * step;
    return {a, k + 1 == count ? std::numeric_limits<double>::infinity() : lo + static_cast<double>(k + 1) * step};
  }

  long index(double x) const {
    const auto k = static_cast<long>(std::floor((x - lo) / step));
    return std::clamp<long>(k, 0, count - 1);
  }
};

struct CellCandidate {
  MessageEntry best;
  IntervalRegion hull;
};

}  // namespace

PrefilterResult interval_prefilter(const Network& net, BusId bus, const IntervalRegion& parent,
                                   std::span<const IntervalRegion> child_cells,
                                   std::span<const Interval> child_i) {
  const auto& kids = net.children(bus);
  if (child_cells.size() != kids.size()) throw Error("one cell per child is required");
  if (!child_i.empty() && child_i.size() != kids.size()) throw Error("one current interval per child is required");
  const auto& inj = net.bus(bus).injection;
  PrefilterResult out;
  out.P = inj.p_hull();
  out.Q = inj.q_hull();
  for (std::size_t c = 0; c < kids.size(); ++c) {
    const auto& cell = child_cells[c];
    const auto& br = net.branch(kids[c]);
    const Interval i = cell_current(cell, child_i.empty() ? nullptr : &child_i[c]);
    out.P = out.P + (cell.P - br.r * i);
    out.Q = out.Q + (cell.Q - br.x * i);
    out.child_v.push_back(i.empty() ? Interval::empty_set() : implied_child_v(br, parent.v, cell, i));
  }
  out.P = intersect(out.P, parent.P);
  out.Q = intersect(out.Q, parent.Q);
  return out;
}

Message leaf_update(const Network& net, BusId bus, const BoundsSet& bounds, const DpOptions& options) {
  if (!net.is_leaf(bus)) throw Error("leaf update called on a bus with children");
  const auto& dom = bounds[bus];
  Message out;
  out.bus = bus;
  const auto& pieces = net.bus(bus).injection.pieces;
  for (const auto& slab : partition_interval(dom.v, options.epsilon * options.scale[0])) {
    for (std::size_t t = 0; t < pieces.size(); ++t) {
      const auto& piece = pieces[t];
      const Interval IP = intersect(dom.P, piece.p);
      const Interval IQ = intersect(dom.Q, piece.q);
      if (IP.empty() || IQ.empty()) continue;
      const auto m = minimize_affine(piece, IP, IQ);
      MessageEntry e;
      e.region = {slab, IP, IQ};
      e.cost_lb = m.cost;
      e.local_cost = m.cost;
      e.p = m.p;
      e.q = m.q;
      e.piece = static_cast<int>(t);
      out.entries.push_back(e);
    }
  }
  return out;
}

Message node_update(const Network& net, BusId bus, std::span<const Message> children,
                    const BoundsSet& bounds, const DpOptions& options, long& calls) {
  const auto& kids = net.children(bus);
  if (kids.empty() || kids.size() > 2) throw Error("node update needs one or two children");
  if (children.size() != kids.size()) throw Error("one message per child is required");
  for (std::size_t c = 0; c < kids.size(); ++c) {
    if (children[c].bus != kids[c]) throw Error("child messages are out of order");
  }
  const auto& dom = bounds[bus];
  const double eps = options.epsilon;
  const auto slabs = partition_interval(dom.v, eps * options.scale[0]);
  const Grid gP(dom.P, eps * options.scale[1]);
  const Grid gQ(dom.Q, eps * options.scale[2]);
  const std::size_t nc = kids.size();

  // Current ranges of every child entry, clipped by the tightened bounds.
  std::vector<std::vector<Interval>> cur(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    for (const auto& e : children[c].entries) {
      cur[c].push_back(intersect(bounds[kids[c]].i, cell_current(e.region, nullptr)));
    }
  }

  std::map<std::tuple<long, long, long>, CellCandidate> cells;
  std::vector<IntervalRegion> cell_regions(nc);
  std::vector<Interval> cell_i(nc);
  std::vector<ChildCell> child_cells(nc);

  for (std::size_t s = 0; s < slabs.size(); ++s) {
    const IntervalRegion base{slabs[s], dom.P, dom.Q};
    std::vector<std::vector<int>> compat(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& br = net.branch(kids[c]);
      for (std::size_t e = 0; e < children[c].entries.size(); ++e) {
        const auto& i = cur[c][e];
        if (i.empty()) continue;
        if (!implied_child_v(br, slabs[s], children[c].entries[e].region, i).empty()) {
          compat[c].push_back(static_cast<int>(e));
        }
      }
    }
    const std::vector<int> none{-1};
    const auto& second = nc == 2 ? compat[1] : none;

    for (int mj : compat[0]) {
      for (int mk : second) {
        const std::array<int, 2> back{mj, mk};
        for (std::size_t c = 0; c < nc; ++c) {
          const auto e = static_cast<std::size_t>(back[c]);
          cell_regions[c] = children[c].entries[e].region;
          cell_i[c] = cur[c][e];
        }
        const auto pf = interval_prefilter(net, bus, base, cell_regions, cell_i);
        if (pf.empty()) continue;
        bool ok = true;
        for (std::size_t c = 0; c < nc && ok; ++c) {
          IntervalRegion r = cell_regions[c];
          r.v = pf.child_v[c];
          const Interval i = intersect(bounds[kids[c]].i, current_range(r));
          ok = !i.empty();
          child_cells[c] = {kids[c], r, i};
        }
        if (!ok) continue;

        for (long a = gP.index(pf.P.lo); a <= gP.index(pf.P.hi); ++a) {
          const Interval P = intersect(pf.P, gP.cell(a));
          if (P.empty()) continue;
          for (long b = gQ.index(pf.Q.lo); b <= gQ.index(pf.Q.hi); ++b) {
            const Interval Q = intersect(pf.Q, gQ.cell(b));
            if (Q.empty()) continue;
            ++calls;
            const auto res = prop_bound(net, bus, {slabs[s], P, Q}, child_cells, options.relax);
            if (!res || res->region.empty()) continue;

            double kappa = res->cost_lb;
            for (std::size_t c = 0; c < nc; ++c) {
              kappa += children[c].entries[static_cast<std::size_t>(back[c])].cost_lb;
            }
            MessageEntry cand;
            cand.region = res->region;
            cand.cost_lb = kappa;
            cand.p = res->p;
            cand.q = res->q;
            cand.local_cost = res->cost_lb;
            cand.piece = res->piece;
            cand.back = back;
            auto [it, fresh] = cells.try_emplace(std::make_tuple(static_cast<long>(s), a, b),
                                                 CellCandidate{cand, res->region});
            if (!fresh) {
              it->second.hull = hull(it->second.hull, res->region);
              if (kappa < it->second.best.cost_lb) it->second.best = cand;
            }
          }
        }
      }
    }
  }

  Message out;
  out.bus = bus;
  out.entries.reserve(cells.size());
  for (auto& [key, cell] : cells) {
    cell.best.region = cell.hull;
    out.entries.push_back(cell.best);
  }
  return out;
}

ForwardResult forward_pass(const Network& net, const BoundsSet& bounds, const DpOptions& options) {
  if (!(options.epsilon > 0.0)) throw Error("epsilon must be positive");
  if (net.max_children() > 2) throw Error("the interval DP needs a tree with at most two children per bus");
  if (bounds.size() != net.size()) throw Error("bounds do not match the network");
  ForwardResult out;
  out.messages.resize(net.size());
  for (BusId b : net.bottom_up()) {
    auto& msg = out.messages[static_cast<std::size_t>(b)];
    if (net.is_leaf(b)) {
      msg = leaf_update(net, b, bounds, options);
    } else {
      std::vector<Message> kids;
      for (BusId c : net.children(b)) kids.push_back(out.messages[static_cast<std::size_t>(c)]);
      msg = node_update(net, b, kids, bounds, options, out.propbound_calls);
    }
    out.order.push_back(b);
    spdlog::debug("bus {}: {} message entries", b, msg.entries.size());
  }
  const auto& root = out.messages[static_cast<std::size_t>(kRootBus)].entries;
  for (std::size_t e = 0; e < root.size(); ++e) {
    if (!out.root || root[e].cost_lb < out.root->cost) out.root = RootChoice{static_cast<int>(e), root[e].cost_lb};
  }
  return out;
}

Solution backward_pass(const Network& net, const ForwardResult& forward) {
  if (!forward.root) throw Error("the forward pass found no feasible root combination");
  if (forward.messages.size() != net.size()) throw InternalError("message count does not match the network");
  Solution sol;
  sol.buses.resize(net.size());
  sol.cost_lb = forward.root->cost;
  std::deque<std::pair<BusId, int>> queue{{kRootBus, forward.root->entry}};
  while (!queue.empty()) {
    const auto [b, idx] = queue.front();
    queue.pop_front();
    const auto& entries = forward.messages[static_cast<std::size_t>(b)].entries;
    if (idx < 0 || static_cast<std::size_t>(idx) >= entries.size()) {
      throw InternalError("dangling back-pointer at bus " + std::to_string(b));
    }
    const auto& e = entries[static_cast<std::size_t>(idx)];
    const auto mid = e.region.mid();
    sol.buses[static_cast<std::size_t>(b)] = {idx, e.region, mid[0], mid[1], mid[2], e.p, e.q, e.local_cost, e.piece};
    sol.order.push_back(b);
    const auto& kids = net.children(b);
    for (std::size_t c = 0; c < kids.size(); ++c) queue.emplace_back(kids[c], e.back[c]);
  }
  return sol;
}

PFState Solution::midpoint_state() const {
  PFState s(buses.size());
  for (std::size_t k = 0; k < buses.size(); ++k) {
    s.v[k] = buses[k].v;
    s.P[k] = buses[k].P;
    s.Q[k] = buses[k].Q;
    s.p[k] = buses[k].p;
    s.q[k] = buses[k].q;
  }
  return s;
}

std::vector<std::pair<double, double>> Solution::injections() const {
  std::vector<std::pair<double, double>> out;
  out.reserve(buses.size());
  for (const auto& b : buses) out.emplace_back(b.p, b.q);
  return out;
}

PFState map_solution_back(const BinaryTree& tree, const Solution& solution) {
  return restrict_state(tree.map, solution.midpoint_state());
}

SolveResult solve(const Network& net, const DpOptions& options) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  if (!(options.epsilon > 0.0)) throw Error("epsilon must be positive");
  SolveResult out;
  out.stats.epsilon = options.epsilon;
  auto finish = [&]() {
    out.stats.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return std::move(out);
  };

  out.issues = validate_assumptions(net).issues;
  for (const auto& i : out.issues) spdlog::warn("bus {}: {} ({})", i.bus, i.clause, i.detail);
  out.tree = to_binary_tree(net);
  const Network& tn = out.tree->network;

  try {
    if (options.bounds) {
      if (options.bounds->size() != tn.size()) throw Error("given bounds do not match the transformed network");
      out.bounds = *options.bounds;
    } else if (options.tighten_first) {
      auto t = tighten_bounds(tn, options.tighten);
      out.bounds = std::move(t.bounds);
      out.stats.tighten_iterations = t.iterations;
    } else {
      out.bounds = initial_bounds(tn);
    }
  } catch (const InfeasibleError& e) {
    out.message = std::string("infeasible: ") + e.what();
    return finish();
  }

  out.forward = forward_pass(tn, out.bounds, options);
  out.stats.propbound_calls = out.forward.propbound_calls;
  for (const auto& m : out.forward.messages) out.stats.message_sizes.push_back(m.entries.size());
  if (!out.forward.root) {
    out.message = "infeasible at resolution epsilon = " + std::to_string(options.epsilon) +
                  ": no combination survives at the root, so the relaxation and the instance are infeasible";
    return finish();
  }

  out.status = SolveStatus::solved;
  out.solution = backward_pass(tn, out.forward);
  out.stats.lower_bound = out.solution.cost_lb;
  out.midpoint = map_solution_back(*out.tree, out.solution);
  out.violations = violation_report(net, out.midpoint);
  out.stats.max_violation = out.violations.max();

  std::vector<std::pair<double, double>> inj;
  for (std::size_t k = 0; k < net.size(); ++k) inj.emplace_back(out.midpoint.p[k], out.midpoint.q[k]);
  out.resolved = solve_pf_newton(net, inj);
  out.stats.resolved_violation = std::numeric_limits<double>::infinity();
  out.resolved_cost = std::numeric_limits<double>::quiet_NaN();
  if (out.resolved.converged()) {
    out.resolved_violations = violation_report(net, out.resolved.state);
    out.stats.resolved_violation = out.resolved_violations.max();
    try {
      out.resolved_cost = evaluate_cost(net, out.resolved.state, 1e-6);
    } catch (const DomainError&) {
    }
  } else {
    spdlog::warn("power flow at the DP injections did not converge: {}", to_string(out.resolved.status));
  }
  return finish();
}

}  // namespace treeopf
