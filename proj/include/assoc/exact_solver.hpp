#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/mdp_sim.hpp"
#include "assoc/policy.hpp"
#include "assoc/state.hpp"
#include "assoc/topology.hpp"

namespace assoc {

struct ExactOptions {
  std::size_t max_states = 1'000'000;
  double tolerance = 1e-9;  // on the span of successive value differences
  std::size_t max_iterations = 1'000'000;
};

struct ExactResult {
  double average_cost = 0.0;
  std::size_t states = 0;
  std::size_t iterations = 0;
  double span = 0.0;
};

// Average cost of a fixed policy on the uniformized chain truncated at
// `n_max` users per slot (arrivals into a full slot are blocked), by relative
// value iteration.
template <AssociationPolicy Policy>
ExactResult exact_average_cost(const Topology& topo, const TrafficSpec& traffic, const Policy& policy,
                               const CostSpec& cost, int n_max, const ExactOptions& opt = {}) {
  if (n_max < 1) throw InvalidArgument("truncation level must be >= 1");
  auto layout = std::make_shared<const SlotLayout>(topo);
  const std::size_t slots = layout->num_slots();
  const auto radix = static_cast<std::size_t>(n_max) + 1;

  std::size_t states = 1;
  for (std::size_t k = 0; k < slots; ++k) {
    if (states > opt.max_states / radix)
      throw TruncationTooLarge("truncated state space exceeds " + std::to_string(opt.max_states) + " states");
    states *= radix;
  }
  std::vector<std::size_t> stride(slots, 1);
  for (std::size_t k = 1; k < slots; ++k) stride[k] = stride[k - 1] * radix;

  const auto sources = detail::arrival_sources(topo, *layout);
  double lambda_tot = 0.0;
  for (const auto& s : sources) lambda_tot += s.rate;
  const double uniform_rate =
      lambda_tot + static_cast<double>(topo.num_cells) * topo.max_rate() / traffic.mean_file_size;

  // Sparse transition rows (self-loops folded into `self`).
  std::vector<std::size_t> row_start{0};
  std::vector<std::uint32_t> target;
  std::vector<double> prob;
  std::vector<double> self(states, 0.0), state_cost(states, 0.0);
  std::vector<int> counts(slots);
  std::vector<double> p;

  for (std::size_t x = 0; x < states; ++x) {
    std::size_t rem = x;
    for (std::size_t k = 0; k < slots; ++k) {
      counts[k] = static_cast<int>(rem % radix);
      rem /= radix;
    }
    UserConfiguration n(layout, counts);
    state_cost[x] = cost_of_state(n, cost).total;
    double out = 0.0;
    auto push = [&](std::size_t y, double q) {
      target.push_back(static_cast<std::uint32_t>(y));
      prob.push_back(q);
      out += q;
    };
    for (const auto& src : sources) {
      if (src.kind == EventKind::exclusive_arrival) {
        if (counts[src.index] < n_max) push(x + stride[src.index], src.rate / uniform_rate);
        continue;
      }
      const auto cand = layout->shared_slots(src.index);
      p.resize(cand.size());
      policy.fill_action_probs(n, src.index, p);
      for (std::size_t c = 0; c < cand.size(); ++c)
        if (counts[cand[c]] < n_max && p[c] > 0.0) push(x + stride[cand[c]], src.rate * p[c] / uniform_rate);
    }
    for (std::size_t k = 0; k < slots; ++k) {
      if (counts[k] == 0) continue;
      const auto& s = layout->slot(k);
      const double rate = counts[k] * s.rate / (traffic.mean_file_size * n.total(s.cell));
      push(x - stride[k], rate / uniform_rate);
    }
    self[x] = std::max(0.0, 1.0 - out);
    row_start.push_back(target.size());
  }

  ExactResult res;
  res.states = states;
  std::vector<double> h(states, 0.0), next(states, 0.0);
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t x = 0; x < states; ++x) {
      double v = state_cost[x] + self[x] * h[x];
      for (std::size_t e = row_start[x]; e < row_start[x + 1]; ++e) v += prob[e] * h[target[e]];
      next[x] = v;
      const double d = v - h[x];
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    const double ref = next[0];
    for (std::size_t x = 0; x < states; ++x) h[x] = next[x] - ref;
    res.iterations = it;
    res.span = hi - lo;
    res.average_cost = 0.5 * (hi + lo);
    if (res.span < opt.tolerance) return res;
  }
  throw NotConverged("relative value iteration did not converge (span " + std::to_string(res.span) + ")");
}

}  // namespace assoc
