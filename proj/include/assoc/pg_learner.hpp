#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/mdp_sim.hpp"
#include "assoc/policy.hpp"
#include "assoc/rng.hpp"
#include "assoc/state.hpp"
#include "assoc/topology.hpp"
#include "assoc/traffic_model.hpp"

namespace assoc {

// ---- estimator state and its update rules ----

// Eligibility trace z and running gradient estimate Delta over theta.
struct GradientState {
  std::vector<double> trace;
  std::vector<double> estimate;
  std::uint64_t steps = 0;
  double beta = 0.9;

  static GradientState zeros(std::size_t dim, double beta) {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("trace discount must lie in [0,1)");
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0), 0, beta};
  }
};

// z <- beta z + score. An empty span is the zero score of a non-action step.
inline void trace_step(GradientState& g, std::span<const double> score) {
  if (!score.empty() && score.size() != g.trace.size()) throw InvalidArgument("score dimension mismatch");
  for (auto& z : g.trace) z *= g.beta;
  for (std::size_t k = 0; k < score.size(); ++k) g.trace[k] += score[k];
}

// Same update when the score is nonzero only on one parameter block.
inline void trace_step(GradientState& g, std::size_t offset, std::span<const double> block_score) {
  for (auto& z : g.trace) z *= g.beta;
  for (std::size_t k = 0; k < block_score.size(); ++k) g.trace[offset + k] += block_score[k];
}

// Delta(t+1) = Delta(t) + (r z(t+1) - Delta(t)) / (t+1).
inline void grad_step_centralized(GradientState& g, double cost) {
  const double inv = 1.0 / static_cast<double>(++g.steps);
  for (std::size_t k = 0; k < g.estimate.size(); ++k) g.estimate[k] += (cost * g.trace[k] - g.estimate[k]) * inv;
}

// Parameter blocks with the cells whose local costs drive them.
struct BlockCells {
  std::vector<std::size_t> offset;
  std::vector<std::size_t> size;
  std::vector<std::vector<std::size_t>> cells;

  static BlockCells from(const PolicyParams& params, const SlotLayout& layout) {
    BlockCells b;
    for (std::size_t z = 0; z < params.num_zones(); ++z) {
      b.offset.push_back(params.block_offset(z));
      b.size.push_back(params.block_size(z));
      std::vector<std::size_t> cells;
      for (auto k : layout.shared_slots(z)) cells.push_back(layout.slot(k).cell);
      b.cells.push_back(std::move(cells));
    }
    return b;
  }
};

// Each block is averaged against the sum of its own candidates' local costs
// only, e.g. r^(s) + r^(s') for the zone shared by s and s'.
inline void grad_step_distributed(GradientState& g, const BlockCells& blocks, std::span<const double> local_costs) {
  const double inv = 1.0 / static_cast<double>(++g.steps);
  for (std::size_t b = 0; b < blocks.offset.size(); ++b) {
    double r = 0.0;
    for (auto c : blocks.cells[b]) {
      if (c >= local_costs.size()) throw InvalidArgument("cost is not decomposable over the block's cells");
      r += local_costs[c];
    }
    const auto end = blocks.offset[b] + blocks.size[b];
    for (std::size_t k = blocks.offset[b]; k < end; ++k) g.estimate[k] += (r * g.trace[k] - g.estimate[k]) * inv;
  }
}

// ---- configuration ----

enum class GradientMode { centralized, distributed };
enum class StepRule { fixed, normalized };

inline std::string_view to_string(GradientMode m) { return m == GradientMode::centralized ? "centralized" : "distributed"; }

inline GradientMode parse_mode(std::string_view s) {
  if (s == "centralized") return GradientMode::centralized;
  if (s == "distributed") return GradientMode::distributed;
  throw InvalidArgument("unknown gradient mode '" + std::string(s) + "'");
}

struct LearnerConfig {
  double beta = 0.9;
  double window_seconds = 100.0;
  double step_size = 0.5;
  StepRule step_rule = StepRule::normalized;
  double step_delta = 1e-9;
  std::size_t updates = 100;
  GradientMode mode = GradientMode::distributed;
  CostSpec cost = CostSpec::outage(1.0);
  std::uint64_t seed = 1;
  long user_cap = 10000;
  double uniformization_rate = 0.0;  // 0 = the computed bound

  void check() const {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in [0,1)");
    if (!(window_seconds > 0.0)) throw InvalidArgument("window must be > 0");
    if (!(step_size > 0.0)) throw InvalidArgument("step size must be > 0");
  }
};

// ---- window estimator ----

struct WindowStats {
  std::uint64_t steps = 0;
  double mean_cost = 0.0;           // per step, learner cost
  double mean_users = 0.0;          // per step, total users
  double mean_local_outage = 0.0;   // per step, share of cells in outage
  double network_outage = 0.0;      // per step, network-wide indicator
  bool aborted = false;
};

// Runs both estimators side by side along one sample path. The score of a
// decision is folded into the trace of the step on which it happens.
class GradientEstimator {
 public:
  GradientEstimator(const PolicyParams& params, const SlotLayout& layout, double beta, bool centralized,
                    bool distributed)
      : blocks_(BlockCells::from(params, layout)), block_score_(max_block(params)) {
    if (centralized) central_ = GradientState::zeros(params.size(), beta);
    if (distributed) local_ = GradientState::zeros(params.size(), beta);
  }

  void on_decision(const UserConfiguration& pre, std::size_t zone, std::size_t action, const PolicyParams& params) {
    pending_zone_ = zone;
    std::span<double> out(block_score_.data(), params.block_size(zone));
    score_block_into(pre, zone, action, params, out);
  }

  void end_step(double cost, std::span<const double> local_costs) {
    std::span<const double> block;
    std::size_t offset = 0;
    if (pending_zone_) {
      offset = blocks_.offset[*pending_zone_];
      block = std::span<const double>(block_score_.data(), blocks_.size[*pending_zone_]);
    }
    if (central_) {
      trace_step(*central_, offset, block);
      grad_step_centralized(*central_, cost);
    }
    if (local_) {
      trace_step(*local_, offset, block);
      grad_step_distributed(*local_, blocks_, local_costs);
    }
    pending_zone_.reset();
  }

  const GradientState* centralized() const { return central_ ? &*central_ : nullptr; }
  const GradientState* distributed() const { return local_ ? &*local_ : nullptr; }
  const GradientState& state(GradientMode m) const {
    const auto* s = m == GradientMode::centralized ? centralized() : distributed();
    if (!s) throw InvalidArgument("estimator was not built for this mode");
    return *s;
  }

 private:
  static std::size_t max_block(const PolicyParams& p) {
    std::size_t m = 1;
    for (std::size_t z = 0; z < p.num_zones(); ++z) m = std::max(m, p.block_size(z));
    return m;
  }

  BlockCells blocks_;
  std::vector<double> block_score_;
  std::optional<std::size_t> pending_zone_;
  std::optional<GradientState> central_;
  std::optional<GradientState> local_;
};

// Drives `steps` uniformized steps of `sim`, feeding the estimator. `on_step`
// is called after every step with the 1-based step count.
template <class OnStep>
WindowStats run_estimation(Simulator<SoftmaxPolicy>& sim, GradientEstimator& est, const CostSpec& cost, double rate,
                           std::uint64_t steps, long user_cap, OnStep&& on_step) {
  const auto& params = sim.policy().params();
  LocalCostTracker tracker(sim.state(), cost);
  LocalCostTracker outage(sim.state(), CostSpec::outage(cost.kind == CostSpec::Kind::outage ? cost.target_rate : 1.0));
  WindowStats stats;
  double cost_sum = 0.0, users_sum = 0.0, local_out_sum = 0.0, net_sum = 0.0;
  const double cells = static_cast<double>(sim.state().layout().num_cells());
  auto observer = [&](const UserConfiguration& pre, std::size_t zone, std::size_t action) {
    est.on_decision(pre, zone, action, params);
  };
  for (std::uint64_t i = 0; i < steps; ++i) {
    const auto step = sim.step_uniformized(rate, observer);
    tracker.observe(sim.state(), step);
    outage.observe(sim.state(), step);
    est.end_step(tracker.total(), tracker.locals());
    cost_sum += tracker.total();
    users_sum += static_cast<double>(sim.state().total_users());
    local_out_sum += outage.total() / cells;
    net_sum += outage.network_indicator();
    ++stats.steps;
    on_step(stats.steps);
    if (user_cap > 0 && sim.state().total_users() > user_cap) {
      stats.aborted = true;
      break;
    }
  }
  if (stats.steps) {
    const double n = static_cast<double>(stats.steps);
    stats.mean_cost = cost_sum / n;
    stats.mean_users = users_sum / n;
    stats.mean_local_outage = local_out_sum / n;
    stats.network_outage = net_sum / n;
  }
  return stats;
}

inline double resolve_rate(const Simulator<SoftmaxPolicy>& sim, double requested) {
  return requested > 0.0 ? requested : sim.uniformization_bound();
}

inline std::uint64_t window_steps(double window_seconds, double rate) {
  return static_cast<std::uint64_t>(std::ceil(window_seconds * rate));
}

struct GradientEstimate {
  std::vector<double> delta;
  WindowStats stats;
  bool aborted = false;
};

// One window of the configured estimator from the empty state, with a fixed policy.
inline GradientEstimate estimate_gradient(const Topology& topo, const TrafficSpec& traffic, const PolicyParams& params,
                                          const LearnerConfig& config) {
  config.check();
  Simulator<SoftmaxPolicy> sim(topo, traffic, SoftmaxPolicy(params), Rng(config.seed, {0x6772616400}));
  const double rate = resolve_rate(sim, config.uniformization_rate);
  GradientEstimator est(params, *sim.layout(), config.beta, config.mode == GradientMode::centralized,
                        config.mode == GradientMode::distributed);
  GradientEstimate out;
  out.stats = run_estimation(sim, est, config.cost, rate, window_steps(config.window_seconds, rate), config.user_cap,
                             [](std::uint64_t) {});
  out.aborted = out.stats.aborted;
  if (!out.aborted) out.delta = est.state(config.mode).estimate;
  return out;
}

// ---- finite differences ----

// Central differences (J(theta + eps e_k) - J(theta - eps e_k)) / (2 eps).
inline std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& cost,
                                                      std::span<const double> theta, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
  std::vector<double> g(theta.size());
  std::vector<double> probe(theta.begin(), theta.end());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    probe[k] = theta[k] + eps;
    const double up = cost(probe);
    probe[k] = theta[k] - eps;
    const double down = cost(probe);
    probe[k] = theta[k];
    g[k] = (up - down) / (2.0 * eps);
  }
  return g;
}

struct FiniteDifferenceOptions {
  double eps = 0.05;
  std::uint64_t window_steps = 100000;
  std::uint64_t warmup_steps = 10000;
  std::size_t replications = 1;  // independent CRN pairs averaged per coordinate
  CostSpec cost = CostSpec::total_users();
  std::uint64_t seed = 1;
};

// Windowed average cost of the uniformized chain. Both sides of a coordinate
// pair share their random numbers.
inline std::vector<double> finite_difference_gradient(const Topology& topo, const TrafficSpec& traffic,
                                                      const PolicyParams& params, const FiniteDifferenceOptions& opt) {
  std::vector<double> g(params.size(), 0.0);
  for (std::size_t rep = 0; rep < opt.replications; ++rep) {
    std::size_t coord = 0;
    auto cost = [&](std::span<const double> theta) {
      PolicyParams probe = params;
      std::copy(theta.begin(), theta.end(), probe.values().begin());
      return average_cost_uniformized(topo, traffic, SoftmaxPolicy(std::move(probe)), opt.cost, opt.window_steps,
                                      opt.warmup_steps, Rng(opt.seed, {0x6664, coord / 2, rep}));
    };
    auto wrapped = [&](std::span<const double> theta) {
      const double v = cost(theta);
      ++coord;
      return v;
    };
    const auto part = finite_difference_gradient(wrapped, params.values(), opt.eps);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += part[k] / static_cast<double>(opt.replications);
  }
  return g;
}

// ---- learning loop ----

struct WindowRecord {
  std::size_t index = 0;
  WindowStats stats;
  double gradient_norm = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

struct LearningTrajectory {
  std::vector<WindowRecord> windows;
  std::vector<std::vector<double>> thetas;  // thetas[0] is the start, thetas[k] follows update k
  bool aborted = false;
};

// Repeats: estimate Delta over one window with the policy frozen, then step
// theta against it. The chain state carries over between windows; traces and
// estimates restart.
inline LearningTrajectory learn(const Topology& topo, const TrafficSpec& traffic, PolicyParams theta,
                                const LearnerConfig& config) {
  config.check();
  Simulator<SoftmaxPolicy> sim(topo, traffic, SoftmaxPolicy(theta), Rng(config.seed, {0x6c6561726e}));
  const double rate = resolve_rate(sim, config.uniformization_rate);
  const auto steps = window_steps(config.window_seconds, rate);

  LearningTrajectory out;
  out.thetas.emplace_back(theta.values().begin(), theta.values().end());
  for (std::size_t w = 0; w < config.updates; ++w) {
    sim.policy() = SoftmaxPolicy(theta);
    GradientEstimator est(theta, *sim.layout(), config.beta, config.mode == GradientMode::centralized,
                          config.mode == GradientMode::distributed);
    WindowRecord rec;
    rec.index = w;
    rec.stats = run_estimation(sim, est, config.cost, rate, steps, config.user_cap, [](std::uint64_t) {});
    if (rec.stats.aborted) {
      rec.aborted = true;
      rec.abort_reason = "user count exceeded " + std::to_string(config.user_cap);
      out.windows.push_back(std::move(rec));
      out.aborted = true;
      break;
    }
    const auto& delta = est.state(config.mode).estimate;
    const double norm = std::sqrt(std::inner_product(delta.begin(), delta.end(), delta.begin(), 0.0));
    rec.gradient_norm = norm;
    const double scale =
        config.step_rule == StepRule::normalized ? config.step_size / (norm + config.step_delta) : config.step_size;
    auto values = theta.values();
    for (std::size_t k = 0; k < values.size(); ++k) values[k] -= scale * delta[k];
    out.windows.push_back(std::move(rec));
    out.thetas.emplace_back(values.begin(), values.end());
  }
  return out;
}

// ---- ascent accuracy ----

struct AccuracyOptions {
  std::vector<std::uint64_t> step_counts;
  std::size_t replications = 500;
  std::vector<GradientMode> modes{GradientMode::centralized, GradientMode::distributed};
  double beta = 0.9;
  std::uint64_t warmup_steps = 10000;
  CostSpec cost = CostSpec::total_users();
  std::uint64_t seed = 1;
};

struct AccuracyRow {
  std::uint64_t steps = 0;
  GradientMode mode = GradientMode::centralized;
  std::size_t replications = 0;
  std::size_t positive = 0;
  double accuracy() const { return replications ? static_cast<double>(positive) / static_cast<double>(replications) : 0.0; }
};

// Share of independent estimates with <Delta, reference> > 0 after each step
// count. One sample path per replication serves every step count: the
// estimate after T steps is read off as the path passes T.
inline std::vector<AccuracyRow> ascent_accuracy_experiment(const Topology& topo, const TrafficSpec& traffic,
                                                           const PolicyParams& params,
                                                           std::span<const double> reference,
                                                           const AccuracyOptions& opt) {
  if (reference.size() != params.size()) throw InvalidArgument("reference gradient dimension mismatch");
  std::vector<std::uint64_t> counts = opt.step_counts;
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  if (counts.empty()) return {};

  std::vector<AccuracyRow> rows;
  for (auto m : opt.modes)
    for (auto t : counts) rows.push_back({t, m, opt.replications, 0});
  auto row_of = [&](GradientMode m, std::size_t ci) -> AccuracyRow& {
    const auto mi = static_cast<std::size_t>(std::find(opt.modes.begin(), opt.modes.end(), m) - opt.modes.begin());
    return rows[mi * counts.size() + ci];
  };
  const bool want_c = std::find(opt.modes.begin(), opt.modes.end(), GradientMode::centralized) != opt.modes.end();
  const bool want_d = std::find(opt.modes.begin(), opt.modes.end(), GradientMode::distributed) != opt.modes.end();

  for (std::size_t rep = 0; rep < opt.replications; ++rep) {
    Simulator<SoftmaxPolicy> sim(topo, traffic, SoftmaxPolicy(params), Rng(opt.seed, {0x616363, rep}));
    const double rate = sim.uniformization_bound();
    for (std::uint64_t i = 0; i < opt.warmup_steps; ++i) sim.step_uniformized(rate);
    GradientEstimator est(params, *sim.layout(), opt.beta, want_c, want_d);
    std::size_t next = 0;
    run_estimation(sim, est, opt.cost, rate, counts.back(), 0, [&](std::uint64_t t) {
      if (next >= counts.size() || t != counts[next]) return;
      for (auto m : opt.modes) {
        const auto& d = est.state(m).estimate;
        const double dot = std::inner_product(d.begin(), d.end(), reference.begin(), 0.0);
        if (dot > 0.0) ++row_of(m, next).positive;
      }
      ++next;
    });
  }
  return rows;
}

}  // namespace assoc
