#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "treeopf/netmodel.hpp"

namespace treeopf {

PieceMinimum minimize_affine(const InjectionPiece& piece, const Interval& p_box,
                             const Interval& q_box) {
  const double p = piece.a >= 0.0 ? p_box.lo : p_box.hi;
  const double q = piece.b >= 0.0 ? q_box.lo : q_box.hi;
  return {p, q, piece.cost(p, q)};
}

Interval InjectionDomain::p_hull() const {
  Interval h = Interval::empty_set();
  for (const auto& t : pieces) h = hull(h, t.p);
  return h;
}

Interval InjectionDomain::q_hull() const {
  Interval h = Interval::empty_set();
  for (const auto& t : pieces) h = hull(h, t.q);
  return h;
}

double Branch::z() const { return std::hypot(r, x); }

Network::Network(std::vector<Bus> buses, std::vector<Branch> branches, double v_ref,
                 double M)
    : buses_(std::move(buses)), branches_(std::move(branches)), v_ref_(v_ref), M_(M) {
  const auto n = buses_.size();
  if (n == 0) throw StructureError("network has no buses");
  if (branches_.size() != n) {
    throw StructureError("expected one branch record per bus");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (buses_[i].id != static_cast<BusId>(i)) {
      throw StructureError("bus ids must be contiguous from 0; found id " +
                           std::to_string(buses_[i].id) + " at position " +
                           std::to_string(i));
    }
    branches_[i].child_bus = static_cast<BusId>(i);
  }
  if (buses_[0].parent) throw StructureError("bus 0 must be the root (no parent)");
  branches_[0].r = 0.0;
  branches_[0].x = 0.0;

  children_.assign(n, {});
  for (std::size_t k = 1; k < n; ++k) {
    const auto& par = buses_[k].parent;
    if (!par) {
      throw StructureError("multiple roots: bus " + std::to_string(k) +
                           " has no parent");
    }
    if (*par == static_cast<BusId>(k)) {
      throw StructureError("bus " + std::to_string(k) + " is its own parent");
    }
    if (*par < 0 || static_cast<std::size_t>(*par) >= n) {
      throw StructureError("bus " + std::to_string(k) + " has unknown parent " +
                           std::to_string(*par));
    }
    children_[static_cast<std::size_t>(*par)].push_back(static_cast<BusId>(k));
  }
  for (auto& c : children_) std::sort(c.begin(), c.end());

  // Walk down from the root; any bus not reached sits on a cycle.
  depth_.assign(n, -1);
  depth_[0] = 0;
  std::vector<BusId> stack{0};
  std::size_t reached = 0;
  while (!stack.empty()) {
    const BusId i = stack.back();
    stack.pop_back();
    ++reached;
    for (BusId c : children_[static_cast<std::size_t>(i)]) {
      depth_[static_cast<std::size_t>(c)] = depth_[static_cast<std::size_t>(i)] + 1;
      stack.push_back(c);
    }
  }
  if (reached != n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (depth_[k] < 0) {
        throw StructureError("bus " + std::to_string(k) +
                             " lies on a cycle or is disconnected from the root");
      }
    }
  }

  top_down_.resize(n);
  for (std::size_t i = 0; i < n; ++i) top_down_[i] = static_cast<BusId>(i);
  std::stable_sort(top_down_.begin(), top_down_.end(), [&](BusId a, BusId b) {
    return depth_[static_cast<std::size_t>(a)] < depth_[static_cast<std::size_t>(b)];
  });

  height_.assign(n, 0);
  for (auto it = top_down_.rbegin(); it != top_down_.rend(); ++it) {
    const auto i = static_cast<std::size_t>(*it);
    for (BusId c : children_[i]) {
      height_[i] = std::max(height_[i], height_[static_cast<std::size_t>(c)] + 1);
    }
  }
  bottom_up_.resize(n);
  for (std::size_t i = 0; i < n; ++i) bottom_up_[i] = static_cast<BusId>(i);
  std::stable_sort(bottom_up_.begin(), bottom_up_.end(), [&](BusId a, BusId b) {
    return height_[static_cast<std::size_t>(a)] < height_[static_cast<std::size_t>(b)];
  });
}

BusId Network::parent(BusId k) const {
  const auto& p = bus(k).parent;
  if (!p) throw Error("the root bus has no parent");
  return *p;
}

int Network::max_children() const {
  std::size_t m = 0;
  for (const auto& c : children_) m = std::max(m, c.size());
  return static_cast<int>(m);
}

std::vector<BusId> Network::descendants(BusId t) const {
  std::vector<BusId> out{t};
  for (std::size_t head = 0; head < out.size(); ++head) {
    for (BusId c : children(out[head])) out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case documents

namespace {

using nlohmann::json;

double number(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw ParseError(std::string("field '") + key + "' is not a number");
  return it->get<double>();
}

double number_or(const json& obj, const char* key, double fallback) {
  return obj.contains(key) ? number(obj, key) : fallback;
}

Interval bounds(const json& obj, const char* lo, const char* hi) {
  return {number(obj, lo), number(obj, hi)};
}

}  // namespace

Network load_network(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed case document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("case document must be a JSON object");
  const double v_ref = number(doc, "v_ref");
  const double M = number(doc, "M");
  const auto it = doc.find("buses");
  if (it == doc.end() || !it->is_array() || it->empty()) {
    throw ParseError("case document needs a non-empty 'buses' array");
  }

  const std::size_t n = it->size();
  std::vector<Bus> buses(n);
  std::vector<Branch> branches(n);
  std::vector<bool> seen(n, false);
  for (const auto& b : *it) {
    if (!b.is_object()) throw ParseError("bus records must be objects");
    if (!b.contains("id") || !b["id"].is_number_integer()) {
      throw ParseError("bus record without integer 'id'");
    }
    const auto id = b["id"].get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw StructureError("bus id " + std::to_string(id) +
                           " outside contiguous range 0.." + std::to_string(n - 1));
    }
    const auto idx = static_cast<std::size_t>(id);
    if (seen[idx]) throw StructureError("duplicate bus id " + std::to_string(id));
    seen[idx] = true;

    Bus bus;
    bus.id = static_cast<BusId>(id);
    const bool is_root = !b.contains("parent") || b["parent"].is_null();
    if (!is_root) {
      if (!b["parent"].is_number_integer()) throw ParseError("'parent' must be an integer");
      bus.parent = static_cast<BusId>(b["parent"].get<long long>());
    }
    try {
      if (is_root) {
        bus.v = {number_or(b, "v_min", v_ref), number_or(b, "v_max", v_ref)};
        bus.P = {number_or(b, "P_min", 0.0), number_or(b, "P_max", 0.0)};
        bus.Q = {number_or(b, "Q_min", 0.0), number_or(b, "Q_max", 0.0)};
      } else {
        bus.v = bounds(b, "v_min", "v_max");
        bus.P = bounds(b, "P_min", "P_max");
        bus.Q = bounds(b, "Q_min", "Q_max");
      }
      branches[idx].r = number_or(b, "r", 0.0);
      branches[idx].x = number_or(b, "x", 0.0);
      if (!is_root && (!b.contains("r") || !b.contains("x"))) {
        throw ParseError("non-root bus needs 'r' and 'x'");
      }
      const auto pit = b.find("injection_pieces");
      if (pit == b.end() || !pit->is_array() || pit->empty()) {
        throw ParseError("bus needs a non-empty 'injection_pieces' array");
      }
      for (const auto& pc : *pit) {
        InjectionPiece piece;
        piece.p = bounds(pc, "p_min", "p_max");
        piece.q = bounds(pc, "q_min", "q_max");
        piece.a = number_or(pc, "a", 0.0);
        piece.b = number_or(pc, "b", 0.0);
        piece.c = number_or(pc, "c", 0.0);
        if (piece.p.empty() || piece.q.empty()) throw ParseError("injection piece with min > max");
        bus.injection.pieces.push_back(piece);
      }
    } catch (const ParseError& e) {
      throw ParseError("bus " + std::to_string(id) + ": " + e.what());
    }
    buses[idx] = std::move(bus);
  }
  return Network(std::move(buses), std::move(branches), v_ref, M);
}

Network load_network_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_network(ss.str());
}

nlohmann::json network_to_json(const Network& net) {
  json buses = json::array();
  for (const auto& bus : net.buses()) {
    json b;
    b["id"] = bus.id;
    if (bus.parent) b["parent"] = *bus.parent;
    const auto& br = net.branch(bus.id);
    b["r"] = br.r;
    b["x"] = br.x;
    b["v_min"] = bus.v.lo;
    b["v_max"] = bus.v.hi;
    b["P_min"] = bus.P.lo;
    b["P_max"] = bus.P.hi;
    b["Q_min"] = bus.Q.lo;
    b["Q_max"] = bus.Q.hi;
    json pieces = json::array();
    for (const auto& t : bus.injection.pieces) {
      pieces.push_back({{"p_min", t.p.lo},
                        {"p_max", t.p.hi},
                        {"q_min", t.q.lo},
                        {"q_max", t.q.hi},
                        {"a", t.a},
                        {"b", t.b},
                        {"c", t.c}});
    }
    b["injection_pieces"] = std::move(pieces);
    buses.push_back(std::move(b));
  }
  return {{"v_ref", net.v_ref()}, {"M", net.M()}, {"buses", std::move(buses)}};
}

std::string serialize_network(const Network& net) { return network_to_json(net).dump(2); }

// ---------------------------------------------------------------------------
// Assumption checks

ValidationReport validate_assumptions(const Network& net) {
  ValidationReport report;
  const double M = net.M();
  auto flag = [&](std::string clause, BusId bus, std::string detail) {
    report.issues.push_back({std::move(clause), bus, std::move(detail)});
  };
  auto fmt = [](double x) {
    std::ostringstream os;
    os << x;
    return os.str();
  };

  if (!(M > 0.0)) flag("M must be positive", 0, "M = " + fmt(M));
  if (!(net.v_ref() > 0.0)) flag("reference voltage must be positive", 0, fmt(net.v_ref()));

  const Interval box{-M, M};
  for (const auto& bus : net.buses()) {
    const BusId i = bus.id;
    const auto& pieces = bus.injection.pieces;
    if (static_cast<double>(pieces.size()) > M) {
      flag("piece count exceeds M", i, std::to_string(pieces.size()) + " > " + fmt(M));
    }
    for (std::size_t t = 0; t < pieces.size(); ++t) {
      if (pieces[t].width() > 1.0 / M) {
        flag("piece width exceeds 1/M", i,
             "piece " + std::to_string(t) + " width " + fmt(pieces[t].width()) +
                 " > " + fmt(1.0 / M));
      }
    }
    if (i == kRootBus) continue;

    if (bus.v.empty() || bus.P.empty() || bus.Q.empty()) {
      flag("bound interval is empty", i, "min exceeds max");
    }
    if (bus.v.lo < 1.0 / M) {
      flag("voltage lower bound below 1/M", i, fmt(bus.v.lo) + " < " + fmt(1.0 / M));
    }
    if (!box.contains(bus.v) || !box.contains(bus.P) || !box.contains(bus.Q)) {
      flag("bounds outside [-M, M]", i, "voltage or flow bound magnitude exceeds " + fmt(M));
    }
    const auto& br = net.branch(i);
    if (br.r < 0.0) flag("negative resistance", i, "r = " + fmt(br.r));
    if (br.z() > M) flag("impedance magnitude exceeds M", i, "|z| = " + fmt(br.z()));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Degree-3 transform

BinaryTree to_binary_tree(const Network& net) {
  const auto n = static_cast<BusId>(net.size());
  std::vector<Bus> buses = net.buses();
  std::vector<Branch> branches = net.branches();

  // Worst-case bound on the flow a child delivers upstream (losses included).
  auto delivered = [&](BusId c) {
    const auto& b = buses[static_cast<std::size_t>(c)];
    const auto& br = branches[static_cast<std::size_t>(c)];
    const double s2 = square(b.P).hi + square(b.Q).hi;
    const double i_max = b.v.lo > 0.0 ? s2 / b.v.lo : 0.0;
    return std::pair{b.P - br.r * Interval{0.0, i_max}, b.Q - br.x * Interval{0.0, i_max}};
  };

  for (BusId i = 0; i < n; ++i) {
    const auto& kids = net.children(i);
    const auto m = kids.size();
    if (m <= 2) continue;
    int levels = 0;
    while ((std::size_t{1} << levels) < m) ++levels;

    // Leaves of a complete binary tree of depth levels-1 under i, each taking
    // up to two original children in ascending id order.
    const std::size_t slots = std::size_t{1} << (levels - 1);
    std::vector<std::vector<BusId>> groups(slots);
    for (std::size_t j = 0; j < m; ++j) groups[j / 2].push_back(kids[j]);

    // Builds the synthetic subtree covering slots [first, first+count) under parent.
    auto build = [&](auto&& self, BusId parent, std::size_t first, std::size_t count) -> void {
      bool any = false;
      for (std::size_t s = first; s < first + count; ++s) any = any || !groups[s].empty();
      if (!any) return;
      Bus syn;
      syn.id = static_cast<BusId>(buses.size());
      syn.parent = parent;
      syn.injection = InjectionDomain::singleton(0.0, 0.0);
      syn.v = net.bus(i).v;
      buses.push_back(syn);
      branches.push_back(Branch{syn.id, 0.0, 0.0});
      const BusId me = syn.id;
      if (count == 1) {
        for (BusId c : groups[first]) buses[static_cast<std::size_t>(c)].parent = me;
      } else {
        self(self, me, first, count / 2);
        self(self, me, first + count / 2, count / 2);
      }
    };
    build(build, i, 0, slots / 2);
    build(build, i, slots / 2, slots / 2);
  }

  // Flow bounds of synthetic buses: interval sum of what their children deliver.
  const auto total = static_cast<BusId>(buses.size());
  if (total > n) {
    std::vector<std::vector<BusId>> kids(static_cast<std::size_t>(total));
    for (BusId k = 1; k < total; ++k) {
      kids[static_cast<std::size_t>(*buses[static_cast<std::size_t>(k)].parent)].push_back(k);
    }
    // Synthetic ids are created parent-first, so a reverse sweep sees children first.
    for (BusId s = total - 1; s >= n; --s) {
      Interval P = Interval::point(0.0);
      Interval Q = Interval::point(0.0);
      for (BusId c : kids[static_cast<std::size_t>(s)]) {
        const auto [dp, dq] = delivered(c);
        P = P + dp;
        Q = Q + dq;
      }
      buses[static_cast<std::size_t>(s)].P = P;
      buses[static_cast<std::size_t>(s)].Q = Q;
    }
  }

  NodeMap map;
  map.original_to_transformed.resize(static_cast<std::size_t>(n));
  map.transformed_to_original.assign(static_cast<std::size_t>(total), -1);
  map.origin.resize(static_cast<std::size_t>(total));
  for (BusId i = 0; i < n; ++i) {
    map.original_to_transformed[static_cast<std::size_t>(i)] = i;
    map.transformed_to_original[static_cast<std::size_t>(i)] = i;
    map.origin[static_cast<std::size_t>(i)] = i;
  }
  for (BusId s = n; s < total; ++s) {
    map.auxiliary.push_back(s);
    BusId up = s;
    while (up >= n) up = *buses[static_cast<std::size_t>(up)].parent;
    map.origin[static_cast<std::size_t>(s)] = up;
  }
  return {Network(std::move(buses), std::move(branches), net.v_ref(), net.M()),
          std::move(map)};
}

}  // namespace treeopf
