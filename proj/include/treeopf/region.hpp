#pragma once

#include <algorithm>
#include <array>

#include "treeopf/interval.hpp"

namespace treeopf {

/// Box in (v, P, Q) space: squared voltage magnitude and sending-end flows.
struct IntervalRegion {
  Interval v;
  Interval P;
  Interval Q;

  std::array<double, 3> mid() const { return {v.mid(), P.mid(), Q.mid()}; }

  /// Largest side length.
  double rad() const { return std::max({v.width(), P.width(), Q.width()}); }

  bool empty() const { return v.empty() || P.empty() || Q.empty(); }

  bool contains(double vv, double pp, double qq, double tol = 0.0) const {
    return v.contains(vv, tol) && P.contains(pp, tol) && Q.contains(qq, tol);
  }

  bool contains(const IntervalRegion& o) const {
    return v.contains(o.v) && P.contains(o.P) && Q.contains(o.Q);
  }

  friend bool operator==(const IntervalRegion&, const IntervalRegion&) = default;
};

inline IntervalRegion intersect(const IntervalRegion& a, const IntervalRegion& b) {
  return {intersect(a.v, b.v), intersect(a.P, b.P), intersect(a.Q, b.Q)};
}

inline IntervalRegion hull(const IntervalRegion& a, const IntervalRegion& b) {
  return {hull(a.v, b.v), hull(a.P, b.P), hull(a.Q, b.Q)};
}

}  // namespace treeopf
