#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "treeopf/errors.hpp"
#include "treeopf/interval.hpp"

namespace treeopf {

using BusId = int;
inline constexpr BusId kRootBus = 0;

/// One box of an injection domain with an affine cost a*p + b*q + c on it.
struct InjectionPiece {
  Interval p;
  Interval q;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double cost(double pp, double qq) const { return a * pp + b * qq + c; }
  bool contains(double pp, double qq, double tol = 0.0) const {
    return p.contains(pp, tol) && q.contains(qq, tol);
  }
  bool singleton() const { return p.width() == 0.0 && q.width() == 0.0; }
  double width() const { return std::max(p.width(), q.width()); }

  friend bool operator==(const InjectionPiece&, const InjectionPiece&) = default;
};

/// Minimum of the piece's affine cost over a sub-box, attained at a corner
/// chosen by the signs of the cost coefficients.
struct PieceMinimum {
  double p;
  double q;
  double cost;
};
PieceMinimum minimize_affine(const InjectionPiece& piece, const Interval& p_box,
                             const Interval& q_box);

/// Finite union of boxes in (p, q), each carrying an affine cost.
struct InjectionDomain {
  std::vector<InjectionPiece> pieces;

  /// Bounding box of all pieces.
  Interval p_hull() const;
  Interval q_hull() const;

  static InjectionDomain singleton(double p, double q, double cost = 0.0) {
    return {{InjectionPiece{Interval::point(p), Interval::point(q), 0.0, 0.0, cost}}};
  }

  friend bool operator==(const InjectionDomain&, const InjectionDomain&) = default;
};

struct Bus {
  BusId id = 0;
  std::optional<BusId> parent;
  InjectionDomain injection;
  Interval v{0.81, 1.21};
  Interval P{-1.0, 1.0};
  Interval Q{-1.0, 1.0};

  friend bool operator==(const Bus&, const Bus&) = default;
};

/// Line connecting a bus to its parent; identified with its child endpoint.
struct Branch {
  BusId child_bus = 0;
  double r = 0.0;
  double x = 0.0;

  double z2() const { return r * r + x * x; }
  double z() const;

  friend bool operator==(const Branch&, const Branch&) = default;
};

/// Rooted radial network. Immutable once constructed; the constructor checks
/// that parent links form a tree rooted at bus 0.
class Network {
 public:
  /// `branches` is indexed by child bus id; the entry for the root is ignored
  /// and stored as a zero-impedance placeholder.
  Network(std::vector<Bus> buses, std::vector<Branch> branches, double v_ref,
          double M);

  std::size_t size() const { return buses_.size(); }
  const std::vector<Bus>& buses() const { return buses_; }
  const Bus& bus(BusId i) const { return buses_.at(static_cast<std::size_t>(i)); }
  const Branch& branch(BusId k) const {
    return branches_.at(static_cast<std::size_t>(k));
  }
  const std::vector<Branch>& branches() const { return branches_; }
  BusId parent(BusId k) const;
  const std::vector<BusId>& children(BusId i) const {
    return children_.at(static_cast<std::size_t>(i));
  }
  bool is_leaf(BusId i) const { return children(i).empty(); }
  double v_ref() const { return v_ref_; }
  double M() const { return M_; }

  int depth(BusId i) const { return depth_.at(static_cast<std::size_t>(i)); }
  /// Length of the longest downward path to a leaf.
  int height(BusId i) const { return height_.at(static_cast<std::size_t>(i)); }
  int max_children() const;

  /// Children-before-parents order: ascending height, ties by id.
  const std::vector<BusId>& bottom_up() const { return bottom_up_; }
  /// Parents-before-children order: ascending depth, ties by id.
  const std::vector<BusId>& top_down() const { return top_down_; }
  /// Subtree rooted at t, including t, in top-down order.
  std::vector<BusId> descendants(BusId t) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<std::vector<BusId>> children_;
  std::vector<int> depth_;
  std::vector<int> height_;
  std::vector<BusId> bottom_up_;
  std::vector<BusId> top_down_;
  double v_ref_;
  double M_;
};

/// Parses a case document (JSON, schema in README).
Network load_network(std::string_view document);
Network load_network_file(const std::filesystem::path& path);
nlohmann::json network_to_json(const Network& net);
std::string serialize_network(const Network& net);

struct ValidationIssue {
  std::string clause;
  BusId bus = 0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

/// Checks the piecewise-affine cost and uniform boundedness assumptions
/// against the network's declared M.
ValidationReport validate_assumptions(const Network& net);

/// Correspondence between an original network and its degree-3 transform.
struct NodeMap {
  /// Indexed by original bus id.
  std::vector<BusId> original_to_transformed;
  /// Indexed by transformed bus id; -1 for synthetic buses.
  std::vector<BusId> transformed_to_original;
  /// Synthetic bus ids, ascending.
  std::vector<BusId> auxiliary;
  /// Indexed by transformed bus id; the original bus a synthetic bus was
  /// split from (equal to the mapped original id for ordinary buses).
  std::vector<BusId> origin;

  bool is_identity() const { return auxiliary.empty(); }
  bool is_synthetic(BusId t) const {
    return transformed_to_original.at(static_cast<std::size_t>(t)) < 0;
  }
};

struct BinaryTree {
  Network network;
  NodeMap map;
};

/// Splits every bus with more than two children by inserting levels of
/// zero-impedance synthetic buses so that every bus has at most two children.
BinaryTree to_binary_tree(const Network& net);

/// Restricts a per-bus vector indexed by transformed ids to original ids.
template <typename T>
std::vector<T> restrict_to_original(const NodeMap& map, std::span<const T> values) {
  if (values.size() != map.transformed_to_original.size()) {
    throw Error("per-bus vector has " + std::to_string(values.size()) +
                " entries, transformed network has " +
                std::to_string(map.transformed_to_original.size()));
  }
  std::vector<T> out;
  out.reserve(map.original_to_transformed.size());
  for (BusId t : map.original_to_transformed) out.push_back(values[static_cast<std::size_t>(t)]);
  return out;
}

}  // namespace treeopf
