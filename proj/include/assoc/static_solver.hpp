#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/topology.hpp"
#include "assoc/traffic_model.hpp"

namespace assoc {

// Euclidean projection onto the probability simplex (sort and threshold).
inline std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) return {};
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) tau = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

// U(rho) with its gradient dU/drho. The default objective is the mean file
// transfer time, which is only defined while every load is below 1.
struct StaticObjective {
  std::function<double(const LoadVector&)> value;
  std::function<std::vector<double>(const LoadVector&)> gradient;
  bool requires_stable_loads = true;

  static StaticObjective mean_transfer_time(double lambda_tot) {
    StaticObjective obj;
    obj.value = [lambda_tot](const LoadVector& l) { return assoc::mean_transfer_time(l, lambda_tot); };
    obj.gradient = [lambda_tot](const LoadVector& l) {
      std::vector<double> g(l.size());
      for (std::size_t s = 0; s < l.size(); ++s) g[s] = 1.0 / (lambda_tot * (1.0 - l[s]) * (1.0 - l[s]));
      return g;
    };
    return obj;
  }
};

struct ObjectiveEval {
  double value = 0.0;
  std::vector<std::vector<double>> gradient;  // same shape as AssociationSplit::shares
  LoadVector loads;
};

namespace detail {

// d rho_{cell} / d a_{zone, candidate} for every shared-zone candidate.
inline std::vector<std::vector<double>> load_sensitivities(const Topology& topo, const TrafficSpec& traffic) {
  std::vector<std::vector<double>> sens;
  for (auto z : topo.shared_zone_ids()) {
    const auto& zone = topo.zones[z];
    std::vector<double> row;
    for (const auto& c : zone.candidates)
      row.push_back(traffic.mean_file_size * zone.arrival_rate / topo.rate(c.rate_class));
    sens.push_back(std::move(row));
  }
  return sens;
}

inline std::size_t argmax_load(const LoadVector& l) {
  return static_cast<std::size_t>(std::max_element(l.rho.begin(), l.rho.end()) - l.rho.begin());
}

}  // namespace detail

inline ObjectiveEval objective_and_gradient(const Topology& topo, const TrafficSpec& traffic,
                                            const AssociationSplit& split, const StaticObjective& objective) {
  ObjectiveEval out;
  out.loads = bs_loads(topo, traffic, split);
  if (objective.requires_stable_loads)
    for (std::size_t s = 0; s < out.loads.size(); ++s)
      if (out.loads[s] >= 1.0) throw UnstableLoad(s, out.loads[s]);
  out.value = objective.value(out.loads);
  const auto dU = objective.gradient(out.loads);
  const auto sens = detail::load_sensitivities(topo, traffic);
  const auto ids = topo.shared_zone_ids();
  out.gradient.resize(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& cands = topo.zones[ids[k]].candidates;
    out.gradient[k].resize(cands.size());
    for (std::size_t j = 0; j < cands.size(); ++j) out.gradient[k][j] = dU[cands[j].cell] * sens[k][j];
  }
  return out;
}

struct MinMaxLoadResult {
  AssociationSplit split;
  double best_max_load = 0.0;
  double lower_bound = 0.0;
};

// Projected subgradient on max_s rho_s(a). lower_bound combines the largest
// exclusive load with the smallest achievable average load.
inline MinMaxLoadResult min_max_load(const Topology& topo, const TrafficSpec& traffic,
                                     std::size_t max_iterations = 20000, double stop_below = 1.0 - 1e-3) {
  const auto sens = detail::load_sensitivities(topo, traffic);
  const auto ids = topo.shared_zone_ids();

  std::vector<double> exclusive(topo.num_cells, 0.0);
  for (const auto& zone : topo.zones)
    if (zone.kind == ZoneKind::exclusive) {
      const auto& c = zone.candidates.front();
      exclusive[c.cell] += traffic.mean_file_size * zone.arrival_rate / topo.rate(c.rate_class);
    }
  double total_min = std::accumulate(exclusive.begin(), exclusive.end(), 0.0);
  for (const auto& row : sens) total_min += *std::min_element(row.begin(), row.end());

  MinMaxLoadResult result;
  result.lower_bound = std::max(*std::max_element(exclusive.begin(), exclusive.end()),
                                total_min / static_cast<double>(topo.num_cells));

  AssociationSplit a = AssociationSplit::uniform(topo);
  result.split = a;
  result.best_max_load = bs_loads(topo, traffic, a).max();
  if (ids.empty()) return result;

  double step0 = 0.5;
  for (std::size_t it = 0; it < max_iterations && result.best_max_load > stop_below; ++it) {
    const auto loads = bs_loads(topo, traffic, a);
    const auto top = detail::argmax_load(loads);
    double norm2 = 0.0;
    std::vector<std::vector<double>> g(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& cands = topo.zones[ids[k]].candidates;
      g[k].assign(cands.size(), 0.0);
      for (std::size_t j = 0; j < cands.size(); ++j)
        if (cands[j].cell == top) g[k][j] = sens[k][j];
      for (double x : g[k]) norm2 += x * x;
    }
    if (norm2 == 0.0) break;  // the bottleneck carries no shared traffic
    const double step = step0 / (std::sqrt(norm2) * std::sqrt(static_cast<double>(it + 1)));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      std::vector<double> moved(a.shares[k].size());
      for (std::size_t j = 0; j < moved.size(); ++j) moved[j] = a.shares[k][j] - step * g[k][j];
      a.shares[k] = project_to_simplex(moved);
    }
    const double m = bs_loads(topo, traffic, a).max();
    if (m < result.best_max_load) {
      result.best_max_load = m;
      result.split = a;
    }
  }
  return result;
}

struct StaticSolution {
  AssociationSplit split;
  LoadVector loads;
  double objective = 0.0;
  double projected_gradient_norm = 0.0;
  std::size_t iterations = 0;
};

struct StaticSolverOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 100000;
  double load_guard = 1e-9;  // iterates must keep every rho_s <= 1 - load_guard
  double armijo = 1e-4;
};

namespace detail {

inline double gradient_mapping_norm(const AssociationSplit& a, const std::vector<std::vector<double>>& g) {
  double norm2 = 0.0;
  for (std::size_t k = 0; k < a.shares.size(); ++k) {
    std::vector<double> moved(a.shares[k].size());
    for (std::size_t j = 0; j < moved.size(); ++j) moved[j] = a.shares[k][j] - g[k][j];
    const auto p = project_to_simplex(moved);
    for (std::size_t j = 0; j < moved.size(); ++j) norm2 += (a.shares[k][j] - p[j]) * (a.shares[k][j] - p[j]);
  }
  return std::sqrt(norm2);
}

}  // namespace detail

// Projected gradient with Armijo backtracking over the product of simplices.
// Converged when ||a - P(a - grad)|| < tolerance.
inline StaticSolution solve_static(const Topology& topo, const TrafficSpec& traffic, const StaticObjective& objective,
                                   const StaticSolverOptions& options = {}) {
  const double ceiling = 1.0 - options.load_guard;
  AssociationSplit a = AssociationSplit::uniform(topo);
  if (objective.requires_stable_loads && bs_loads(topo, traffic, a).max() > ceiling) {
    auto mm = min_max_load(topo, traffic);
    if (mm.best_max_load > ceiling) throw Infeasible(mm.lower_bound, mm.best_max_load);
    a = std::move(mm.split);
  }

  auto admissible = [&](const LoadVector& l) { return !objective.requires_stable_loads || l.max() <= ceiling; };

  StaticSolution sol;
  ObjectiveEval cur = objective_and_gradient(topo, traffic, a, objective);
  double step = 1.0;
  for (std::size_t it = 0;; ++it) {
    sol.projected_gradient_norm = detail::gradient_mapping_norm(a, cur.gradient);
    sol.iterations = it;
    if (sol.projected_gradient_norm < options.tolerance) break;
    if (it >= options.max_iterations)
      throw NotConverged("static solver stopped after " + std::to_string(it) +
                         " iterations, projected gradient norm " + std::to_string(sol.projected_gradient_norm));

    bool accepted = false;
    const double first_step = step;
    for (; step > 1e-30; step *= 0.5) {
      AssociationSplit trial = a;
      double decrease = 0.0;
      for (std::size_t k = 0; k < a.shares.size(); ++k) {
        std::vector<double> moved(a.shares[k].size());
        for (std::size_t j = 0; j < moved.size(); ++j) moved[j] = a.shares[k][j] - step * cur.gradient[k][j];
        trial.shares[k] = project_to_simplex(moved);
        // shares move within the simplex, so centring the gradient changes
        // nothing but the cancellation error
        const double mean = std::accumulate(cur.gradient[k].begin(), cur.gradient[k].end(), 0.0) / moved.size();
        for (std::size_t j = 0; j < moved.size(); ++j)
          decrease += (cur.gradient[k][j] - mean) * (trial.shares[k][j] - a.shares[k][j]);
      }
      if (decrease >= 0.0) break;  // the projection no longer moves
      if (!admissible(bs_loads(topo, traffic, trial))) continue;
      ObjectiveEval next = objective_and_gradient(topo, traffic, trial, objective);
      // Below the rounding of the value, fall back on the slope at the trial
      // point, which for a convex objective still certifies descent.
      const bool flat = std::abs(next.value - cur.value) <= 1e-13 * std::max(1.0, std::abs(cur.value));
      double slope = 0.0;
      for (std::size_t k = 0; k < a.shares.size(); ++k) {
        const auto& g = next.gradient[k];
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
        for (std::size_t j = 0; j < g.size(); ++j) slope += (g[j] - mean) * (trial.shares[k][j] - a.shares[k][j]);
      }
      if (next.value <= cur.value + options.armijo * decrease || (flat && slope <= 0.0)) {
        a = std::move(trial);
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No decrease at machine precision even from a unit step: optimal up to rounding.
      if (first_step >= 1.0) break;
      step = 1.0;
      continue;
    }
    step = std::min(step * 2.0, 1e6);
  }
  sol.split = std::move(a);
  sol.loads = cur.loads;
  sol.objective = cur.value;
  return sol;
}

}  // namespace assoc
