#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace treeopf {

/// Closed real interval [lo, hi]. An interval with lo > hi is empty.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr Interval() = default;
  constexpr Interval(double l, double h) : lo(l), hi(h) {}
  static constexpr Interval point(double x) { return {x, x}; }
  static constexpr Interval empty_set() {
    return {std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
  }

  constexpr bool empty() const { return lo > hi; }
  constexpr double width() const { return empty() ? 0.0 : hi - lo; }
  constexpr double mid() const { return 0.5 * (lo + hi); }
  constexpr bool contains(double x, double tol = 0.0) const {
    return x >= lo - tol && x <= hi + tol;
  }
  constexpr bool contains(const Interval& o) const {
    return o.lo >= lo && o.hi <= hi;
  }
  constexpr bool intersects(const Interval& o, double tol = 0.0) const {
    return lo <= o.hi + tol && o.lo <= hi + tol;
  }
  constexpr double clamp(double x) const { return std::clamp(x, lo, hi); }

  /// Distance from x to the interval (0 inside).
  constexpr double distance(double x) const {
    if (x < lo) return lo - x;
    if (x > hi) return x - hi;
    return 0.0;
  }

  /// Widens both ends by an absolute amount.
  constexpr Interval padded(double amount) const {
    return {lo - amount, hi + amount};
  }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

inline constexpr Interval intersect(const Interval& a, const Interval& b) {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}

inline constexpr Interval hull(const Interval& a, const Interval& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline constexpr Interval operator+(const Interval& a, const Interval& b) {
  return {a.lo + b.lo, a.hi + b.hi};
}

inline constexpr Interval operator-(const Interval& a, const Interval& b) {
  return {a.lo - b.hi, a.hi - b.lo};
}

inline constexpr Interval operator+(const Interval& a, double s) {
  return {a.lo + s, a.hi + s};
}

inline constexpr Interval operator*(double s, const Interval& a) {
  return s >= 0.0 ? Interval{s * a.lo, s * a.hi} : Interval{s * a.hi, s * a.lo};
}

inline Interval operator*(const Interval& a, const Interval& b) {
  const double c[] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return {*std::min_element(std::begin(c), std::end(c)),
          *std::max_element(std::begin(c), std::end(c))};
}

/// Exact range of y^2 for y in a.
inline constexpr Interval square(const Interval& a) {
  const double l2 = a.lo * a.lo;
  const double h2 = a.hi * a.hi;
  if (a.lo <= 0.0 && a.hi >= 0.0) return {0.0, std::max(l2, h2)};
  return {std::min(l2, h2), std::max(l2, h2)};
}

/// a / b for b strictly positive.
inline Interval divide_positive(const Interval& a, const Interval& b) {
  return a * Interval{1.0 / b.hi, 1.0 / b.lo};
}

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo << ", " << a.hi << ']';
}

}  // namespace treeopf
