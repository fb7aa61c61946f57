#include "treeopf/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "treeopf/errors.hpp"

namespace treeopf {

double LinearRow::activity(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& [j, a] : terms) s += a * x[static_cast<std::size_t>(j)];
  return s;
}

double LinearConstraintSet::max_violation(std::span<const double> values) const {
  if (values.size() != variables.size()) throw Error("point has wrong dimension");
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.activity(values) - r.rhs);
  return worst;
}

int LinearProgram::add_variable(Interval bounds, std::string name) {
  if (!std::isfinite(bounds.lo) || !std::isfinite(bounds.hi)) {
    throw Error("LP variables must have finite bounds");
  }
  bounds_.push_back(bounds);
  names_.push_back(std::move(name));
  return static_cast<int>(bounds_.size()) - 1;
}

void LinearProgram::set_bounds(int var, Interval bounds) {
  bounds_.at(static_cast<std::size_t>(var)) = bounds;
}

void LinearProgram::add_le(std::vector<std::pair<int, double>> terms, double rhs) {
  for (const auto& [j, a] : terms) {
    if (j < 0 || j >= num_variables()) throw Error("row references an undeclared variable");
    if (!std::isfinite(a)) throw Error("row coefficient is not finite");
  }
  if (!std::isfinite(rhs)) throw Error("row bound is not finite");
  rows_.push_back({std::move(terms), rhs});
}

void LinearProgram::add_ge(std::vector<std::pair<int, double>> terms, double rhs) {
  for (auto& t : terms) t.second = -t.second;
  add_le(std::move(terms), -rhs);
}

void LinearProgram::add_eq(std::vector<std::pair<int, double>> terms, double rhs) {
  add_le(terms, rhs);
  add_ge(std::move(terms), rhs);
}

void LinearProgram::add(const LinearConstraintSet& set, std::span<const int> columns) {
  if (columns.size() != set.variables.size()) throw Error("column map has wrong size");
  for (const auto& r : set.rows) {
    std::vector<std::pair<int, double>> terms;
    terms.reserve(r.terms.size());
    for (const auto& [j, a] : r.terms) terms.emplace_back(columns[static_cast<std::size_t>(j)], a);
    add_le(std::move(terms), r.rhs);
  }
}

double LinearProgram::max_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < bounds_.size(); ++j) worst = std::max(worst, bounds_[j].distance(x[j]));
  for (const auto& r : rows_) worst = std::max(worst, r.activity(x) - r.rhs);
  return worst;
}

// ---------------------------------------------------------------------------

LpSolver::LpSolver(const LinearProgram& lp, LpOptions options) : opt_(options) {
  n_ = lp.num_variables();
  lo_.resize(static_cast<std::size_t>(n_));
  hi_.resize(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) {
    const auto& b = lp.bounds(j);
    lo_[static_cast<std::size_t>(j)] = b.lo;
    hi_[static_cast<std::size_t>(j)] = b.hi;
    if (b.lo > b.hi + opt_.feas_tol) infeasible_ = true;
    if (b.lo > b.hi) hi_[static_cast<std::size_t>(j)] = b.lo;
  }

  for (const auto& r : lp.rows()) {
    // Merge duplicate columns and drop zeros.
    std::vector<std::pair<int, double>> terms = r.terms;
    std::sort(terms.begin(), terms.end());
    std::vector<std::pair<int, double>> merged;
    for (const auto& t : terms) {
      if (!merged.empty() && merged.back().first == t.first) {
        merged.back().second += t.second;
      } else {
        merged.push_back(t);
      }
    }
    std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });

    double norm = 0.0;
    for (const auto& t : merged) norm += t.second * t.second;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      if (r.rhs < -opt_.feas_tol) infeasible_ = true;
      continue;
    }
    LinearRow row;
    row.rhs = r.rhs / norm;
    double amin = 0.0;
    double amax = 0.0;
    for (auto [j, a] : merged) {
      a /= norm;
      const auto jj = static_cast<std::size_t>(j);
      amin += a > 0.0 ? a * lo_[jj] : a * hi_[jj];
      amax += a > 0.0 ? a * hi_[jj] : a * lo_[jj];
      row.terms.emplace_back(j, a);
    }
    if (amin > row.rhs + opt_.feas_tol) infeasible_ = true;
    if (amax <= row.rhs) continue;
    rows_.push_back(std::move(row));
  }
}

LpSolution LpSolver::solve_var(int var, Sense sense) const {
  std::vector<double> c(static_cast<std::size_t>(n_), 0.0);
  c.at(static_cast<std::size_t>(var)) = 1.0;
  return solve(c, sense);
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Simplex in the active-set view: the basis is a set of n linearly
// independent tight constraints drawn from the bound rows and general rows.
// Bound rows are indexed 2j (lower, -x_j <= -lo_j) and 2j+1 (upper,
// x_j <= hi_j); general row r has index 2n + r. With D the inverse of the
// basis matrix, x = D h and the multipliers solve c + B^T y = 0.
class Simplex {
  static constexpr double kDualTol = 1e-12;
  static constexpr double kPerturb = 1e-8;
  static constexpr double kRelPivot = 1e-7;

 public:
  Simplex(int n, const std::vector<double>& lo, const std::vector<double>& hi,
          const std::vector<LinearRow>& rows, const LpOptions& opt, std::span<const double> c)
      : n_(n), lo_(lo), hi_(hi), rows_(rows), opt_(opt), c_(c.begin(), c.end()), cp_(c_) {
    // Deterministic cost perturbation keeps the multipliers away from ties.
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::size_t j = 0; j < cp_.size(); ++j) {
      h ^= h >> 31;
      h *= 0xbf58476d1ce4e5b9ULL;
      h ^= h >> 27;
      const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      const double xi = kPerturb * (1.0 + u) * (1.0 + std::abs(c_[j]));
      cp_[j] += c_[j] >= 0.0 ? xi : -xi;
    }
    max_iters_ = 200 * (n_ + static_cast<int>(rows_.size()) + 10);
  }

  const std::vector<int>& basis() const { return basis_; }
  const RowMatrix& inverse() const { return D_; }
  // Rank-one updates applied to the inverse since it was last factored.
  int age() const { return age_; }

  // Dual simplex from the bound basis picked by the cost signs.
  LpSolution run_dual() {
    basis_.resize(static_cast<std::size_t>(n_));
    y_.resize(n_);
    for (int j = 0; j < n_; ++j) {
      const double cj = cp_[static_cast<std::size_t>(j)];
      basis_[static_cast<std::size_t>(j)] = cj >= 0.0 ? 2 * j : 2 * j + 1;
      y_(j) = std::abs(cj);
    }
    D_ = RowMatrix::Zero(n_, n_);
    for (int j = 0; j < n_; ++j) D_(j, j) = basis_[static_cast<std::size_t>(j)] % 2 == 0 ? -1.0 : 1.0;
    compute_x();

    LpSolution out;
    int since_refactor = 0;
    int stalled = 0;
    int verified = 0;
    for (int it = 0;; ++it) {
      if (it > max_iters_) throw InternalError("LP iteration limit reached");
      if (since_refactor >= opt_.refactor_every) {
        dual_refactor();
        since_refactor = 0;
      }
      const bool bland = stalled > 50;
      const int r = pick_violated(bland);
      if (r < 0) {
        if (since_refactor > 0 && verified < 3) {
          ++verified;
          dual_refactor();
          since_refactor = 0;
          continue;
        }
        out.status = LpStatus::optimal;
        out.iterations = it;
        break;
      }

      const Eigen::RowVectorXd alpha = row_times_D(r);
      const int p = bland ? ratio_test_bland(alpha) : ratio_test_harris(alpha);
      if (p < 0) {
        // Dual ray: confirm on a fresh factorization before declaring infeasible.
        if (since_refactor > 0) {
          dual_refactor();
          since_refactor = 0;
          continue;
        }
        if (!certifies_infeasibility(r, alpha)) throw InternalError("LP stalled without an infeasibility certificate");
        out.status = LpStatus::infeasible;
        out.iterations = it;
        return out;
      }

      const double t = std::max(y_(p), 0.0) / alpha(p);
      stalled = t <= 1e-14 ? stalled + 1 : 0;
      pivot(p, r, alpha);
      y_ = y_.cwiseMax(0.0);
      ++since_refactor;
      if (!growth_ok()) {
        dual_refactor();
        since_refactor = 0;
      } else {
        compute_x();
      }
    }
    age_ = since_refactor;
    return finish(out);
  }

  // Primal simplex from a basis whose vertex is feasible, typically the
  // optimum of an earlier objective, with its inverse after `age` updates.
  // Empty when the basis cannot be used.
  std::optional<LpSolution> run_primal(const std::vector<int>& start, std::span<const double> inverse, int age) {
    if (start.size() != static_cast<std::size_t>(n_)) return std::nullopt;
    basis_ = start;
    if (inverse.size() == static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_)) {
      D_ = Eigen::Map<const RowMatrix>(inverse.data(), n_, n_);
      dmax_ = D_.cwiseAbs().maxCoeff();
      compute_x();
      age_ = age;
    } else {
      if (!factor()) return std::nullopt;
      age_ = 0;
    }
    if (max_violation() > 10.0 * opt_.feas_tol) {
      if (age_ == 0 || !factor()) return std::nullopt;
      age_ = 0;
      if (max_violation() > 10.0 * opt_.feas_tol) return std::nullopt;
    }
    compute_y();

    LpSolution out;
    int stalled = 0;
    for (int it = 0;; ++it) {
      if (it > max_iters_) return std::nullopt;
      if (age_ >= opt_.refactor_every) {
        if (!factor()) return std::nullopt;
        compute_y();
        age_ = 0;
      }
      const bool bland = stalled > 50;
      const int k = pick_negative(bland);
      if (k < 0) {
        out.status = LpStatus::optimal;
        out.iterations = it;
        break;
      }

      // Leave row k: move along d with g_k.d = -1 and the other basis rows tight.
      const Eigen::VectorXd d = -D_.col(k);
      const int r = primal_ratio_test(d, bland);
      if (r < 0) return std::nullopt;
      const Eigen::RowVectorXd alpha = row_times_D(r);
      if (!(std::abs(alpha(k)) > opt_.pivot_tol)) return std::nullopt;
      stalled = slack(r) <= 1e-14 ? stalled + 1 : 0;
      pivot(k, r, alpha);
      ++age_;
      if (!growth_ok()) {
        if (!factor()) return std::nullopt;
        compute_y();
        age_ = 0;
      } else {
        compute_x();
      }
    }
    if (max_violation() > 10.0 * opt_.feas_tol) return std::nullopt;
    y_ = y_.cwiseMax(0.0);
    return finish(out);
  }

 private:
  LpSolution finish(LpSolution out) const {
    out.x.assign(x_.data(), x_.data() + n_);
    for (int j = 0; j < n_; ++j) {
      auto& v = out.x[static_cast<std::size_t>(j)];
      v = std::clamp(v, lo_[static_cast<std::size_t>(j)], hi_[static_cast<std::size_t>(j)]);
    }
    out.value = 0.0;
    for (std::size_t j = 0; j < out.x.size(); ++j) out.value += c_[j] * out.x[j];
    out.bound = std::min(lagrangian_bound(), out.value);
    return out;
  }

  // Replaces basis row p by constraint r, where alpha = g_r D.
  void pivot(int p, int r, const Eigen::RowVectorXd& alpha) {
    const double t = y_(p) / alpha(p);
    y_ -= t * alpha.transpose();
    y_(p) = t;
    const Eigen::VectorXd dp = D_.col(p);
    Eigen::RowVectorXd beta = alpha / alpha(p);
    beta(p) = 1.0 - 1.0 / alpha(p);
    D_.noalias() -= dp * beta;
    dmax_ += dp.cwiseAbs().maxCoeff() * beta.cwiseAbs().maxCoeff();
    basis_[static_cast<std::size_t>(p)] = r;
  }

  // dmax_ bounds max|D| from above between refactorizations.
  bool growth_ok() {
    if (std::isfinite(dmax_) && dmax_ <= 1e8) return true;
    if (!D_.allFinite()) return false;
    dmax_ = D_.cwiseAbs().maxCoeff();
    return dmax_ <= 1e8;
  }

  // Two-pass ratio test: bound the step with dual infeasibility relaxed by
  // kDualTol, then take the largest pivot among the rows within that bound.
  int ratio_test_harris(const Eigen::RowVectorXd& alpha) const {
    const double amax = alpha.cwiseAbs().maxCoeff();
    for (const double tol : {std::max(opt_.pivot_tol, kRelPivot * amax), opt_.pivot_tol}) {
      double bound = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n_; ++k) {
        if (alpha(k) > tol) bound = std::min(bound, (std::max(y_(k), 0.0) + kDualTol) / alpha(k));
      }
      int p = -1;
      for (int k = 0; k < n_; ++k) {
        if (alpha(k) <= tol || std::max(y_(k), 0.0) / alpha(k) > bound) continue;
        if (p < 0 || alpha(k) > alpha(p)) p = k;
      }
      if (p >= 0) return p;
    }
    return -1;
  }

  int ratio_test_bland(const Eigen::RowVectorXd& alpha) const {
    int p = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_; ++k) {
      if (alpha(k) <= opt_.pivot_tol) continue;
      const double ratio = std::max(y_(k), 0.0) / alpha(k);
      if (ratio < best || (ratio == best && basis_[static_cast<std::size_t>(k)] < basis_[static_cast<std::size_t>(p)])) {
        best = ratio;
        p = k;
      }
    }
    return p;
  }

  int pick_negative(bool bland) const {
    int best = -1;
    for (int k = 0; k < n_; ++k) {
      if (y_(k) >= -kDualTol) continue;
      if (bland) {
        if (best < 0 || basis_[static_cast<std::size_t>(k)] < basis_[static_cast<std::size_t>(best)]) best = k;
      } else if (best < 0 || y_(k) < y_(best)) {
        best = k;
      }
    }
    return best;
  }

  double rate(int g, const Eigen::VectorXd& d) const {
    if (g < 2 * n_) return g % 2 == 0 ? -d(g / 2) : d(g / 2);
    double s = 0.0;
    for (const auto& [j, a] : rows_[static_cast<std::size_t>(g - 2 * n_)].terms) s += a * d(j);
    return s;
  }

  double slack(int g) const {
    if (g < 2 * n_) {
      const auto j = static_cast<std::size_t>(g / 2);
      return std::max(g % 2 == 0 ? x_(g / 2) - lo_[j] : hi_[j] - x_(g / 2), 0.0);
    }
    const auto& row = rows_[static_cast<std::size_t>(g - 2 * n_)];
    double act = 0.0;
    for (const auto& [j, a] : row.terms) act += a * x_(j);
    return std::max(row.rhs - act, 0.0);
  }

  int primal_ratio_test(const Eigen::VectorXd& d, bool bland) const {
    std::vector<char> basic(static_cast<std::size_t>(2 * n_) + rows_.size(), 0);
    for (int g : basis_) basic[static_cast<std::size_t>(g)] = 1;
    const int total = 2 * n_ + static_cast<int>(rows_.size());
    std::vector<std::pair<int, double>> cand;
    double bound = std::numeric_limits<double>::infinity();
    for (int g = 0; g < total; ++g) {
      if (basic[static_cast<std::size_t>(g)]) continue;
      const double a = rate(g, d);
      if (a <= opt_.pivot_tol) continue;
      cand.emplace_back(g, a);
      bound = std::min(bound, (slack(g) + (bland ? 0.0 : opt_.feas_tol)) / a);
    }
    int best = -1;
    double best_a = 0.0;
    for (const auto& [g, a] : cand) {
      if (slack(g) / a > bound) continue;
      if (best < 0 || (bland ? g < best : a > best_a)) {
        best = g;
        best_a = a;
      }
    }
    return best;
  }

  // Lagrangian of the general rows over the box: min over the box of
  // d.x - sum m_r b_r with d = c + sum m_r a_r. For c = 0 a positive value
  // means no point of the box satisfies the weighted rows.
  double box_lagrangian(const std::vector<std::pair<int, double>>& multipliers, std::span<const double> c) const {
    std::vector<double> d(c.begin(), c.end());
    double val = 0.0;
    for (const auto& [g, m] : multipliers) {
      if (g < 2 * n_ || m <= 0.0) continue;
      const auto& row = rows_[static_cast<std::size_t>(g - 2 * n_)];
      for (const auto& [j, a] : row.terms) d[static_cast<std::size_t>(j)] += m * a;
      val -= m * row.rhs;
    }
    for (std::size_t j = 0; j < d.size(); ++j) val += std::min(d[j] * lo_[j], d[j] * hi_[j]);
    return val;
  }

  double lagrangian_bound() const {
    std::vector<std::pair<int, double>> m;
    for (int k = 0; k < n_; ++k) m.emplace_back(basis_[static_cast<std::size_t>(k)], std::max(y_(k), 0.0));
    return box_lagrangian(m, c_);
  }

  bool certifies_infeasibility(int r, const Eigen::RowVectorXd& alpha) const {
    std::vector<std::pair<int, double>> m{{r, 1.0}};
    double scale = 1.0;
    for (int k = 0; k < n_; ++k) {
      const double w = std::max(-alpha(k), 0.0);
      m.emplace_back(basis_[static_cast<std::size_t>(k)], w);
      scale += w;
    }
    const std::vector<double> zero(static_cast<std::size_t>(n_), 0.0);
    return box_lagrangian(m, zero) > 1e-12 * scale;
  }

  double rhs(int k) const {
    if (k < 2 * n_) {
      const auto j = static_cast<std::size_t>(k / 2);
      return k % 2 == 0 ? -lo_[j] : hi_[j];
    }
    return rows_[static_cast<std::size_t>(k - 2 * n_)].rhs;
  }

  void compute_x() {
    Eigen::VectorXd h(n_);
    for (int k = 0; k < n_; ++k) h(k) = rhs(basis_[static_cast<std::size_t>(k)]);
    x_ = D_ * h;
  }

  void compute_y() {
    const Eigen::Map<const Eigen::VectorXd> c(cp_.data(), n_);
    y_ = -(D_.transpose() * c);
  }

  Eigen::RowVectorXd row_times_D(int k) const {
    if (k < 2 * n_) {
      const Eigen::RowVectorXd d = D_.row(k / 2);
      return k % 2 == 0 ? Eigen::RowVectorXd(-d) : d;
    }
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n_);
    for (const auto& [j, v] : rows_[static_cast<std::size_t>(k - 2 * n_)].terms) a += v * D_.row(j);
    return a;
  }

  int pick_violated(bool bland) const {
    int best = -1;
    double worst = opt_.feas_tol;
    for (int j = 0; j < n_; ++j) {
      const double below = lo_[static_cast<std::size_t>(j)] - x_(j);
      const double above = x_(j) - hi_[static_cast<std::size_t>(j)];
      if (below > worst) {
        if (bland) return 2 * j;
        worst = below;
        best = 2 * j;
      }
      if (above > worst) {
        if (bland) return 2 * j + 1;
        worst = above;
        best = 2 * j + 1;
      }
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const auto& row = rows_[r];
      double act = 0.0;
      for (const auto& [j, a] : row.terms) act += a * x_(j);
      const double viol = act - row.rhs;
      if (viol > worst) {
        if (bland && best < 0) return 2 * n_ + static_cast<int>(r);
        worst = viol;
        best = 2 * n_ + static_cast<int>(r);
      }
    }
    return best;
  }

  double max_violation() const {
    double worst = 0.0;
    for (int j = 0; j < n_; ++j) {
      worst = std::max({worst, lo_[static_cast<std::size_t>(j)] - x_(j), x_(j) - hi_[static_cast<std::size_t>(j)]});
    }
    for (const auto& row : rows_) {
      double act = 0.0;
      for (const auto& [j, a] : row.terms) act += a * x_(j);
      worst = std::max(worst, act - row.rhs);
    }
    return worst;
  }

  // Rebuilds D from the basis rows; false when the basis is singular.
  bool factor() {
    RowMatrix B = RowMatrix::Zero(n_, n_);
    for (int k = 0; k < n_; ++k) {
      const int g = basis_[static_cast<std::size_t>(k)];
      if (g < 2 * n_) {
        B(k, g / 2) = g % 2 == 0 ? -1.0 : 1.0;
      } else {
        for (const auto& [j, a] : rows_[static_cast<std::size_t>(g - 2 * n_)].terms) B(k, j) = a;
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    if (!(lu.rcond() > 1e-13)) return false;
    D_ = lu.inverse();
    dmax_ = D_.cwiseAbs().maxCoeff();
    compute_x();
    return true;
  }

  void dual_refactor() {
    if (!factor()) throw InternalError("LP basis became singular");
    compute_y();
    y_ = y_.cwiseMax(0.0);
  }

  int n_;
  const std::vector<double>& lo_;
  const std::vector<double>& hi_;
  const std::vector<LinearRow>& rows_;
  const LpOptions& opt_;
  std::vector<double> c_;
  std::vector<double> cp_;
  int max_iters_ = 0;
  std::vector<int> basis_;
  RowMatrix D_;
  double dmax_ = 0.0;
  int age_ = 0;
  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
};

}  // namespace

LpSolution LpSolver::solve(std::span<const double> objective, Sense sense) const {
  if (objective.size() != static_cast<std::size_t>(n_)) throw Error("objective has wrong dimension");
  LpSolution out;
  if (infeasible_) return out;
  if (n_ == 0) {
    out.status = LpStatus::optimal;
    return out;
  }
  std::vector<double> c(objective.begin(), objective.end());
  if (sense == Sense::maximize) {
    for (auto& v : c) v = -v;
  }
  Simplex simplex(n_, lo_, hi_, rows_, opt_, c);
  std::optional<LpSolution> warm;
  if (!warm_.empty()) warm = simplex.run_primal(warm_, warm_inverse_, warm_age_);
  out = warm ? std::move(*warm) : simplex.run_dual();
  if (out.optimal()) {
    warm_ = simplex.basis();
    const auto& D = simplex.inverse();
    warm_inverse_.assign(D.data(), D.data() + D.size());
    warm_age_ = simplex.age();
    out.value = 0.0;
    for (std::size_t j = 0; j < objective.size(); ++j) out.value += objective[j] * out.x[j];
    if (sense == Sense::maximize) out.bound = -out.bound;
  }
  return out;
}

LpSolution solve_convex_subproblem(const LinearProgram& lp, std::span<const double> objective,
                                   Sense sense, LpOptions options) {
  return LpSolver(lp, options).solve(objective, sense);
}

}  // namespace treeopf
