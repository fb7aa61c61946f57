#include "treeopf/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace treeopf {

namespace {

std::size_t idx(BusId i) { return static_cast<std::size_t>(i); }

void check_sizes(const Network& net, const PFState& s) {
  const auto n = net.size();
  if (s.v.size() != n || s.P.size() != n || s.Q.size() != n || s.p.size() != n ||
      s.q.size() != n) {
    throw Error("state has " + std::to_string(s.v.size()) + " buses, network has " +
                std::to_string(n));
  }
}

// Power a child delivers upstream after series losses.
std::pair<double, double> delivered(const Branch& br, double v, double P, double Q) {
  const double l = (P * P + Q * Q) / v;
  return {P - br.r * l, Q - br.x * l};
}

}  // namespace

double PFResidual::max_abs() const {
  double m = 0.0;
  for (const auto* vec : {&real, &reactive, &drop}) {
    for (double x : *vec) m = std::max(m, std::abs(x));
  }
  return m;
}

PFResidual pf_residual(const Network& net, const PFState& s) {
  check_sizes(net, s);
  const auto n = net.size();
  for (std::size_t k = 1; k < n; ++k) {
    if (!(s.v[k] > 0.0)) {
      throw DomainError("squared voltage at bus " + std::to_string(k) + " is not positive");
    }
  }
  PFResidual res;
  res.real.resize(n);
  res.reactive.resize(n);
  res.drop.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double a = s.P[i] - s.p[i];
    double b = s.Q[i] - s.q[i];
    for (BusId k : net.children(static_cast<BusId>(i))) {
      const auto [dp, dq] = delivered(net.branch(k), s.v[idx(k)], s.P[idx(k)], s.Q[idx(k)]);
      a -= dp;
      b -= dq;
    }
    res.real[i] = a;
    res.reactive[i] = b;
  }
  for (std::size_t k = 1; k < n; ++k) {
    const auto& br = net.branch(static_cast<BusId>(k));
    const double S = s.P[k] * s.P[k] + s.Q[k] * s.Q[k];
    const double vi = s.v[idx(net.parent(static_cast<BusId>(k)))];
    res.drop[k] = vi - s.v[k] - br.z2() * S / s.v[k] + 2.0 * (s.P[k] * br.r + s.Q[k] * br.x);
  }
  return res;
}

Eigen::MatrixXd pf_jacobian(const Network& net, const PFState& s) {
  check_sizes(net, s);
  const auto n = net.size();
  const auto dim = static_cast<Eigen::Index>(3 * (n - 1));
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
  auto base = [](std::size_t bus) { return static_cast<Eigen::Index>(3 * (bus - 1)); };

  for (std::size_t k = 1; k < n; ++k) {
    const auto& br = net.branch(static_cast<BusId>(k));
    const double v = s.v[k];
    const double P = s.P[k];
    const double Q = s.Q[k];
    const double S = P * P + Q * Q;
    const Eigen::Index row = base(k);
    const Eigen::Index col = base(k);

    J(row, col + 1) = 1.0;
    J(row + 1, col + 2) = 1.0;

    J(row + 2, col) = -1.0 + br.z2() * S / (v * v);
    J(row + 2, col + 1) = -2.0 * br.z2() * P / v + 2.0 * br.r;
    J(row + 2, col + 2) = -2.0 * br.z2() * Q / v + 2.0 * br.x;
    const auto par = idx(net.parent(static_cast<BusId>(k)));
    if (par != 0) J(row + 2, base(par)) = 1.0;

    // Contribution of k to its parent's balance equations.
    if (par != 0) {
      const Eigen::Index prow = base(par);
      J(prow, col) = -br.r * S / (v * v);
      J(prow, col + 1) = -(1.0 - 2.0 * br.r * P / v);
      J(prow, col + 2) = 2.0 * br.r * Q / v;
      J(prow + 1, col) = -br.x * S / (v * v);
      J(prow + 1, col + 1) = 2.0 * br.x * P / v;
      J(prow + 1, col + 2) = -(1.0 - 2.0 * br.x * Q / v);
    }
  }
  return J;
}

std::string to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::converged: return "converged";
    case NewtonStatus::no_convergence: return "no_convergence";
    case NewtonStatus::singular: return "singular";
    case NewtonStatus::domain: return "domain";
  }
  return "unknown";
}

namespace {

Eigen::VectorXd stack_residual(const PFResidual& r) {
  const auto n = r.real.size();
  Eigen::VectorXd F(static_cast<Eigen::Index>(3 * (n - 1)));
  for (std::size_t k = 1; k < n; ++k) {
    const auto b = static_cast<Eigen::Index>(3 * (k - 1));
    F(b) = r.real[k];
    F(b + 1) = r.reactive[k];
    F(b + 2) = r.drop[k];
  }
  return F;
}

void fill_slack(const Network& net, PFState& s) {
  s.v[0] = net.v_ref();
  s.P[0] = 0.0;
  s.Q[0] = 0.0;
  double p0 = 0.0;
  double q0 = 0.0;
  for (BusId k : net.children(kRootBus)) {
    const auto [dp, dq] = delivered(net.branch(k), s.v[idx(k)], s.P[idx(k)], s.Q[idx(k)]);
    p0 -= dp;
    q0 -= dq;
  }
  s.p[0] = p0;
  s.q[0] = q0;
}

}  // namespace

NewtonResult solve_pf_newton(const Network& net,
                             std::span<const std::pair<double, double>> injections,
                             const NewtonOptions& options) {
  const auto n = net.size();
  if (injections.size() != n) {
    throw Error("expected " + std::to_string(n) + " injections, got " +
                std::to_string(injections.size()));
  }
  NewtonResult out;
  PFState s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.v[i] = net.v_ref();
    s.p[i] = injections[i].first;
    s.q[i] = injections[i].second;
  }
  fill_slack(net, s);
  if (n == 1) {
    out.status = NewtonStatus::converged;
    out.state = std::move(s);
    return out;
  }

  auto apply = [&](PFState& t, const Eigen::VectorXd& x, double step, const PFState& from) {
    for (std::size_t k = 1; k < n; ++k) {
      const auto b = static_cast<Eigen::Index>(3 * (k - 1));
      t.v[k] = from.v[k] + step * x(b);
      t.P[k] = from.P[k] + step * x(b + 1);
      t.Q[k] = from.Q[k] + step * x(b + 2);
    }
  };
  auto positive = [&](const PFState& t) {
    for (std::size_t k = 1; k < n; ++k) {
      if (!(t.v[k] > 0.0)) return false;
    }
    return true;
  };

  Eigen::VectorXd F = stack_residual(pf_residual(net, s));
  double norm = F.norm();
  int polish = 0;
  for (int it = 0; it < options.max_iters; ++it) {
    out.iterations = it;
    if (F.lpNorm<Eigen::Infinity>() <= options.tol) {
      // One extra full step drives the residual well below tol.
      if (polish++ > 0) break;
    }
    const Eigen::MatrixXd J = pf_jacobian(net, s);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    if (!(lu.rcond() > 1e-14)) {
      out.status = NewtonStatus::singular;
      out.state = std::move(s);
      out.residual = F.lpNorm<Eigen::Infinity>();
      return out;
    }
    const Eigen::VectorXd dx = lu.solve(-F);
    if (!dx.allFinite()) {
      out.status = NewtonStatus::singular;
      out.state = std::move(s);
      return out;
    }

    PFState trial = s;
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      apply(trial, dx, step, s);
      if (!positive(trial)) continue;
      const Eigen::VectorXd Ft = stack_residual(pf_residual(net, trial));
      const double nt = Ft.norm();
      if (std::isfinite(nt) && (nt < norm || nt <= options.tol * 1e-3)) {
        F = Ft;
        norm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (F.lpNorm<Eigen::Infinity>() <= options.tol) break;
      apply(trial, dx, 1.0, s);
      out.status = positive(trial) ? NewtonStatus::no_convergence : NewtonStatus::domain;
      out.state = std::move(s);
      out.residual = F.lpNorm<Eigen::Infinity>();
      return out;
    }
    s = std::move(trial);
  }
  out.residual = F.lpNorm<Eigen::Infinity>();
  out.status = out.residual <= options.tol ? NewtonStatus::converged : NewtonStatus::no_convergence;
  fill_slack(net, s);
  out.state = std::move(s);
  return out;
}

double ViolationReport::max() const {
  return std::max({max_v_violation, max_flow_violation, max_injection_violation,
                   max_pf_residual});
}

ViolationReport violation_report(const Network& net, const PFState& s) {
  check_sizes(net, s);
  ViolationReport r;
  auto bump = [](double& slot, BusId& who, double value, BusId bus) {
    if (value > slot) {
      slot = value;
      who = bus;
    }
  };
  const auto n = net.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto bid = static_cast<BusId>(i);
    const auto& bus = net.bus(bid);
    if (i == 0) {
      bump(r.max_v_violation, r.worst_v_bus, std::abs(s.v[0] - net.v_ref()), bid);
      bump(r.max_flow_violation, r.worst_flow_bus, std::max(std::abs(s.P[0]), std::abs(s.Q[0])),
           bid);
    } else {
      bump(r.max_v_violation, r.worst_v_bus, bus.v.distance(s.v[i]), bid);
      bump(r.max_flow_violation, r.worst_flow_bus,
           std::max(bus.P.distance(s.P[i]), bus.Q.distance(s.Q[i])), bid);
    }
    double d = std::numeric_limits<double>::infinity();
    for (const auto& t : bus.injection.pieces) {
      d = std::min(d, std::max(t.p.distance(s.p[i]), t.q.distance(s.q[i])));
    }
    bump(r.max_injection_violation, r.worst_injection_bus, d, bid);
  }

  bool positive = true;
  for (std::size_t k = 1; k < n; ++k) positive = positive && s.v[k] > 0.0;
  if (!positive) {
    r.max_pf_residual = std::numeric_limits<double>::infinity();
    return r;
  }
  const auto res = pf_residual(net, s);
  for (std::size_t i = 0; i < n; ++i) {
    const double m =
        std::max({std::abs(res.real[i]), std::abs(res.reactive[i]), std::abs(res.drop[i])});
    bump(r.max_pf_residual, r.worst_pf_bus, m, static_cast<BusId>(i));
  }
  return r;
}

double evaluate_cost(const Network& net, std::span<const std::pair<double, double>> injections,
                     double tol) {
  if (injections.size() != net.size()) throw Error("injection vector size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto [p, q] = injections[i];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : net.bus(static_cast<BusId>(i)).injection.pieces) {
      if (t.contains(p, q, tol)) best = std::min(best, t.cost(p, q));
    }
    if (!std::isfinite(best)) {
      throw DomainError("injection at bus " + std::to_string(i) + " lies outside every piece");
    }
    total += best;
  }
  return total;
}

double evaluate_cost(const Network& net, const PFState& state, double tol) {
  check_sizes(net, state);
  std::vector<std::pair<double, double>> inj(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) inj[i] = {state.p[i], state.q[i]};
  return evaluate_cost(net, inj, tol);
}

PFState restrict_state(const NodeMap& map, const PFState& s) {
  PFState out;
  out.v = restrict_to_original<double>(map, s.v);
  out.P = restrict_to_original<double>(map, s.P);
  out.Q = restrict_to_original<double>(map, s.Q);
  out.p = restrict_to_original<double>(map, s.p);
  out.q = restrict_to_original<double>(map, s.q);
  return out;
}

PFState extend_state(const BinaryTree& tree, const PFState& s) {
  const auto& net = tree.network;
  const auto& map = tree.map;
  if (s.size() != map.original_to_transformed.size()) {
    throw Error("state size does not match the original network");
  }
  PFState out(net.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto t = idx(map.original_to_transformed[i]);
    out.v[t] = s.v[i];
    out.P[t] = s.P[i];
    out.Q[t] = s.Q[i];
    out.p[t] = s.p[i];
    out.q[t] = s.q[i];
  }
  for (auto it = map.auxiliary.rbegin(); it != map.auxiliary.rend(); ++it) {
    const auto syn = *it;
    out.v[idx(syn)] = out.v[idx(map.origin[idx(syn)])];
    double P = 0.0;
    double Q = 0.0;
    for (BusId c : net.children(syn)) {
      const auto [dp, dq] = delivered(net.branch(c), out.v[idx(c)], out.P[idx(c)], out.Q[idx(c)]);
      P += dp;
      Q += dq;
    }
    out.P[idx(syn)] = P;
    out.Q[idx(syn)] = Q;
  }
  return out;
}

}  // namespace treeopf
