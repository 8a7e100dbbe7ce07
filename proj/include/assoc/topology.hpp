#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "assoc/errors.hpp"

namespace assoc {

// One of the discrete peak rates. Index 0 (rate 0) is the admission-control
// class and never appears in a topology.
struct RateClass {
  int index = 1;
  double rate_mbps = 0.0;
};

// A base station reachable from a zone, with the rate class it offers there.
struct Candidate {
  std::size_t cell = 0;
  int rate_class = 1;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

enum class ZoneKind { exclusive, shared };

// Exclusive zones have a single candidate. Shared zones list every base
// station that may serve an arriving user. area_fraction is measured in
// cells (1.0 == one whole cell).
struct Zone {
  ZoneKind kind = ZoneKind::exclusive;
  std::vector<Candidate> candidates;
  double area_fraction = 0.0;
  double arrival_rate = 0.0;  // users / s
};

struct Violation {
  std::string subject;
  std::string message;
};

using CellPair = std::pair<std::size_t, std::size_t>;

struct Topology {
  std::size_t num_cells = 0;
  std::vector<RateClass> rate_classes;
  std::vector<Zone> zones;
  std::vector<CellPair> neighbor_pairs;

  int num_classes() const { return static_cast<int>(rate_classes.size()); }

  double rate(int rate_class) const {
    if (rate_class < 1 || rate_class > num_classes())
      throw InvalidArgument("rate class " + std::to_string(rate_class) + " out of range");
    return rate_classes[static_cast<std::size_t>(rate_class - 1)].rate_mbps;
  }

  double max_rate() const {
    double m = 0.0;
    for (const auto& rc : rate_classes) m = std::max(m, rc.rate_mbps);
    return m;
  }

  double total_arrival_rate() const {
    double sum = 0.0;
    for (const auto& z : zones) sum += z.arrival_rate;
    return sum;
  }

  // Indices into `zones` of the shared zones, in order. The position in this
  // list is the "shared zone ordinal" used by splits, policies and learners.
  std::vector<std::size_t> shared_zone_ids() const {
    std::vector<std::size_t> ids;
    for (std::size_t z = 0; z < zones.size(); ++z)
      if (zones[z].kind == ZoneKind::shared) ids.push_back(z);
    return ids;
  }

  // Rescale every zone so that the arrival rates sum to `total` users/s.
  // Zones keep their relative weights; an all-zero topology is spread by area.
  void set_total_arrival_rate(double total) {
    if (!(total >= 0.0)) throw InvalidArgument("total arrival rate must be >= 0");
    const double current = total_arrival_rate();
    if (current > 0.0) {
      for (auto& z : zones) z.arrival_rate *= total / current;
      return;
    }
    double area = 0.0;
    for (const auto& z : zones) area += z.area_fraction;
    if (area <= 0.0) return;
    for (auto& z : zones) z.arrival_rate = total * z.area_fraction / area;
  }
};

namespace detail {

struct Axial {
  int q;
  int r;
  auto operator<=>(const Axial&) const = default;
};

inline int hex_norm(Axial a) { return std::max({std::abs(a.q), std::abs(a.r), std::abs(a.q + a.r)}); }

// Adjacency of the hexagonal patch of radius `rings`, wrapped by translating
// out-of-patch neighbors through the six mirror centers of the torus.
inline std::vector<std::array<std::size_t, 6>> hex_torus_neighbors(int rings) {
  std::vector<Axial> cells;
  for (int q = -rings; q <= rings; ++q)
    for (int r = -rings; r <= rings; ++r)
      if (hex_norm({q, r}) <= rings) cells.push_back({q, r});
  std::sort(cells.begin(), cells.end(), [](Axial a, Axial b) {
    const int na = hex_norm(a), nb = hex_norm(b);
    return na != nb ? na < nb : a < b;
  });
  std::map<Axial, std::size_t> index;
  for (std::size_t i = 0; i < cells.size(); ++i) index[cells[i]] = i;

  const int R = rings;
  const std::array<Axial, 6> mirrors{{{2 * R + 1, -R},
                                      {R, R + 1},
                                      {-R - 1, 2 * R + 1},
                                      {-2 * R - 1, R},
                                      {-R, -R - 1},
                                      {R + 1, -2 * R - 1}}};
  const std::array<Axial, 6> dirs{{{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}}};

  auto wrap = [&](Axial a) -> std::size_t {
    if (auto it = index.find(a); it != index.end()) return it->second;
    for (const auto& m : mirrors)
      if (auto it = index.find({a.q - m.q, a.r - m.r}); it != index.end()) return it->second;
    throw InvalidArgument("wrap-around failed for cell (" + std::to_string(a.q) + "," +
                          std::to_string(a.r) + ")");
  };

  std::vector<std::array<std::size_t, 6>> adj(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t d = 0; d < 6; ++d)
      adj[i][d] = wrap({cells[i].q + dirs[d].q, cells[i].r + dirs[d].r});
  return adj;
}

}  // namespace detail

// Hexagonal network with wrap-around. Every cell gets a central exclusive zone
// (half the cell) at `central_rate`; each adjacent pair shares a zone of one
// sixth of a cell where both offer `edge_rate`. Arrivals are uniform per unit
// area and total `total_traffic / mean_file_size` users per second.
inline Topology build_hex_wraparound(int rings, double central_rate, double edge_rate,
                                     double total_traffic, double mean_file_size) {
  if (rings < 1) throw InvalidArgument("rings must be >= 1");
  if (!(central_rate > 0.0) || !(edge_rate > 0.0)) throw InvalidArgument("rates must be > 0");
  if (!(total_traffic > 0.0)) throw InvalidArgument("total traffic must be > 0");
  if (!(mean_file_size > 0.0)) throw InvalidArgument("mean file size must be > 0");

  const auto adj = detail::hex_torus_neighbors(rings);
  for (std::size_t s = 0; s < adj.size(); ++s) {
    std::set<std::size_t> distinct(adj[s].begin(), adj[s].end());
    if (distinct.size() != 6 || distinct.count(s) != 0)
      throw InvalidArgument("wrap-around neighbor map for rings=" + std::to_string(rings) +
                            " is inconsistent at cell " + std::to_string(s));
  }

  Topology topo;
  topo.num_cells = adj.size();

  std::vector<double> rates{central_rate, edge_rate};
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());
  for (std::size_t i = 0; i < rates.size(); ++i)
    topo.rate_classes.push_back({static_cast<int>(i + 1), rates[i]});
  auto class_of = [&](double r) {
    return static_cast<int>(std::find(rates.begin(), rates.end(), r) - rates.begin()) + 1;
  };
  const int central_class = class_of(central_rate);
  const int edge_class = class_of(edge_rate);

  const double lambda_tot = total_traffic / mean_file_size;
  const double per_area = lambda_tot / static_cast<double>(topo.num_cells);

  for (std::size_t s = 0; s < topo.num_cells; ++s)
    topo.zones.push_back({ZoneKind::exclusive, {{s, central_class}}, 0.5, 0.5 * per_area});

  std::set<CellPair> pairs;
  for (std::size_t s = 0; s < adj.size(); ++s)
    for (auto t : adj[s]) pairs.insert({std::min(s, t), std::max(s, t)});
  for (const auto& [a, b] : pairs) {
    topo.neighbor_pairs.push_back({a, b});
    topo.zones.push_back(
        {ZoneKind::shared, {{a, edge_class}, {b, edge_class}}, 1.0 / 6.0, per_area / 6.0});
  }
  return topo;
}

// Empty result iff every structural invariant holds.
inline std::vector<Violation> validate(const Topology& topo) {
  std::vector<Violation> out;
  auto add = [&](std::string subject, std::string message) {
    out.push_back({std::move(subject), std::move(message)});
  };

  if (topo.num_cells == 0) add("topology", "no cells");
  if (topo.rate_classes.empty()) add("topology", "no rate classes");
  for (std::size_t i = 0; i < topo.rate_classes.size(); ++i) {
    const auto& rc = topo.rate_classes[i];
    const std::string subject = "rate class " + std::to_string(i + 1);
    if (rc.index != static_cast<int>(i + 1)) add(subject, "index must equal its 1-based position");
    if (!(rc.rate_mbps > 0.0)) add(subject, "rate must be > 0");
    if (i > 0 && !(rc.rate_mbps > topo.rate_classes[i - 1].rate_mbps))
      add(subject, "rates must be strictly increasing");
  }

  std::set<CellPair> pairs;
  for (const auto& [a, b] : topo.neighbor_pairs) {
    const std::string subject = "pair (" + std::to_string(a) + "," + std::to_string(b) + ")";
    if (a >= topo.num_cells || b >= topo.num_cells) add(subject, "cell out of range");
    if (a == b) add(subject, "pair must join two distinct cells");
    pairs.insert({std::min(a, b), std::max(a, b)});
  }

  std::vector<double> area(topo.num_cells, 0.0);
  for (std::size_t z = 0; z < topo.zones.size(); ++z) {
    const auto& zone = topo.zones[z];
    const std::string subject = "zone " + std::to_string(z);
    if (!(zone.arrival_rate >= 0.0) || !std::isfinite(zone.arrival_rate))
      add(subject, "arrival rate must be finite and >= 0");
    if (!(zone.area_fraction >= 0.0)) add(subject, "area fraction must be >= 0");
    if (zone.kind == ZoneKind::exclusive && zone.candidates.size() != 1)
      add(subject, "exclusive zone must have exactly one candidate");
    if (zone.kind == ZoneKind::shared && zone.candidates.size() < 2)
      add(subject, "shared zone must have at least two candidates");

    std::set<std::size_t> cells;
    bool cells_ok = true;
    for (const auto& c : zone.candidates) {
      if (c.cell >= topo.num_cells) {
        add(subject, "candidate cell " + std::to_string(c.cell) + " out of range");
        cells_ok = false;
      }
      if (c.rate_class < 1 || c.rate_class > topo.num_classes())
        add(subject, "candidate rate class " + std::to_string(c.rate_class) + " out of range");
      if (!cells.insert(c.cell).second) add(subject, "duplicate candidate cell");
    }
    if (zone.kind == ZoneKind::shared && zone.candidates.size() == 2 && cells_ok) {
      const auto a = zone.candidates[0].cell, b = zone.candidates[1].cell;
      if (!pairs.count({std::min(a, b), std::max(a, b)}))
        add(subject, "two-candidate zone does not correspond to a neighbor pair");
    }
    if (cells_ok && !zone.candidates.empty()) {
      const double share = zone.area_fraction / static_cast<double>(zone.candidates.size());
      for (const auto& c : zone.candidates) area[c.cell] += share;
    }
  }
  for (std::size_t s = 0; s < topo.num_cells; ++s)
    if (std::abs(area[s] - 1.0) > 1e-9)
      add("cell " + std::to_string(s), "area fractions sum to " + std::to_string(area[s]) + ", not 1");
  return out;
}

// ---- structured text (JSON) ----

inline void to_json(nlohmann::json& j, const Candidate& c) {
  j = {{"cell", c.cell}, {"rate_class", c.rate_class}};
}
inline void from_json(const nlohmann::json& j, Candidate& c) {
  j.at("cell").get_to(c.cell);
  j.at("rate_class").get_to(c.rate_class);
}

inline void to_json(nlohmann::json& j, const Topology& t) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& rc : t.rate_classes) classes.push_back({{"index", rc.index}, {"rate_mbps", rc.rate_mbps}});
  nlohmann::json zones = nlohmann::json::array();
  for (const auto& z : t.zones)
    zones.push_back({{"kind", z.kind == ZoneKind::exclusive ? "exclusive" : "shared"},
                     {"candidates", z.candidates},
                     {"area_fraction", z.area_fraction},
                     {"arrival_rate", z.arrival_rate}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : t.neighbor_pairs) pairs.push_back({a, b});
  j = {{"num_cells", t.num_cells}, {"rate_classes", classes}, {"neighbor_pairs", pairs}, {"zones", zones}};
}

inline void from_json(const nlohmann::json& j, Topology& t) {
  t = Topology{};
  j.at("num_cells").get_to(t.num_cells);
  for (const auto& rc : j.at("rate_classes"))
    t.rate_classes.push_back({rc.at("index").get<int>(), rc.at("rate_mbps").get<double>()});
  for (const auto& p : j.at("neighbor_pairs"))
    t.neighbor_pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  for (const auto& zj : j.at("zones")) {
    Zone z;
    const auto kind = zj.at("kind").get<std::string>();
    if (kind == "exclusive")
      z.kind = ZoneKind::exclusive;
    else if (kind == "shared")
      z.kind = ZoneKind::shared;
    else
      throw InvalidArgument("unknown zone kind '" + kind + "'");
    zj.at("candidates").get_to(z.candidates);
    zj.at("area_fraction").get_to(z.area_fraction);
    zj.at("arrival_rate").get_to(z.arrival_rate);
    t.zones.push_back(std::move(z));
  }
}

}  // namespace assoc
