#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/topology.hpp"

namespace assoc {

// File sizes are exponential with the given mean, in megabits.
struct TrafficSpec {
  double mean_file_size = 10.0;
};

struct LoadVector {
  std::vector<double> rho;

  std::size_t size() const { return rho.size(); }
  double operator[](std::size_t s) const { return rho[s]; }
  double max() const {
    double m = 0.0;
    for (double r : rho) m = std::max(m, r);
    return m;
  }
};

// Traffic split of every shared zone over its candidates, in the order of
// Topology::shared_zone_ids() and of each zone's candidate list.
struct AssociationSplit {
  std::vector<std::vector<double>> shares;

  static AssociationSplit uniform(const Topology& topo) {
    AssociationSplit split;
    for (auto z : topo.shared_zone_ids()) {
      const auto k = topo.zones[z].candidates.size();
      split.shares.emplace_back(k, 1.0 / static_cast<double>(k));
    }
    return split;
  }

  // Build from per-zone maps cell -> share. Mass on a cell that is not a
  // candidate of the zone is rejected; missing candidates get 0.
  static AssociationSplit from_cell_shares(const Topology& topo,
                                           const std::vector<std::map<std::size_t, double>>& cell_shares) {
    const auto ids = topo.shared_zone_ids();
    if (cell_shares.size() != ids.size())
      throw InvalidArgument("split has " + std::to_string(cell_shares.size()) + " zones, topology has " +
                            std::to_string(ids.size()));
    AssociationSplit split;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& cands = topo.zones[ids[k]].candidates;
      std::vector<double> row(cands.size(), 0.0);
      for (const auto& [cell, share] : cell_shares[k]) {
        std::size_t pos = 0;
        while (pos < cands.size() && cands[pos].cell != cell) ++pos;
        if (pos == cands.size()) {
          if (share != 0.0)
            throw InvalidArgument("split assigns traffic of shared zone " + std::to_string(k) +
                                  " to non-candidate cell " + std::to_string(cell));
          continue;
        }
        row[pos] = share;
      }
      split.shares.push_back(std::move(row));
    }
    return split;
  }
};

// Shape and simplex checks for `split` against `topo`.
inline void check_split(const Topology& topo, const AssociationSplit& split, double tol = 1e-9) {
  const auto ids = topo.shared_zone_ids();
  if (split.shares.size() != ids.size())
    throw InvalidArgument("split covers " + std::to_string(split.shares.size()) + " zones, topology has " +
                          std::to_string(ids.size()) + " shared zones");
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& row = split.shares[k];
    if (row.size() != topo.zones[ids[k]].candidates.size())
      throw InvalidArgument("split row " + std::to_string(k) + " references cells outside the candidate set");
    double sum = 0.0;
    for (double a : row) {
      if (!(a >= -tol && a <= 1.0 + tol)) throw InvalidArgument("split share outside [0,1]");
      sum += a;
    }
    if (std::abs(sum - 1.0) > tol) throw InvalidArgument("split row " + std::to_string(k) + " does not sum to 1");
  }
}

// rho_s = E[sigma] * (sum over exclusive zones of lambda/R + sum over shared
// zones of a_s * lambda / R(I_s)); non-opportunistic scheduling.
inline LoadVector bs_loads(const Topology& topo, const TrafficSpec& traffic, const AssociationSplit& split) {
  check_split(topo, split);
  LoadVector loads{std::vector<double>(topo.num_cells, 0.0)};
  std::size_t k = 0;
  for (const auto& zone : topo.zones) {
    if (zone.kind == ZoneKind::exclusive) {
      const auto& c = zone.candidates.front();
      loads.rho[c.cell] += traffic.mean_file_size * zone.arrival_rate / topo.rate(c.rate_class);
      continue;
    }
    const auto& row = split.shares[k++];
    for (std::size_t j = 0; j < zone.candidates.size(); ++j) {
      const auto& c = zone.candidates[j];
      loads.rho[c.cell] += traffic.mean_file_size * row[j] * zone.arrival_rate / topo.rate(c.rate_class);
    }
  }
  return loads;
}

// Stationary mean number of users of an M/G/1-PS queue.
inline double mean_users(double rho, std::size_t cell = 0) {
  if (!(rho >= 0.0)) throw InvalidArgument("load must be >= 0");
  if (rho >= 1.0) throw UnstableLoad(cell, rho);
  return rho / (1.0 - rho);
}

// Little's law over all base stations.
inline double mean_transfer_time(const LoadVector& loads, double lambda_tot) {
  if (!(lambda_tot > 0.0)) throw InvalidArgument("total arrival rate must be > 0");
  double users = 0.0;
  for (std::size_t s = 0; s < loads.size(); ++s) users += mean_users(loads[s], s);
  return users / lambda_tot;
}

}  // namespace assoc
