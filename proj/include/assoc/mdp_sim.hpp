#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/policy.hpp"
#include "assoc/rng.hpp"
#include "assoc/state.hpp"
#include "assoc/topology.hpp"
#include "assoc/traffic_model.hpp"

namespace assoc {

// ---- costs ----

// total_users: r^(s) = T_s(n). outage: r^(s) = 1 when some user at s gets
// R/T_s(n) below the target rate. Both decompose into per-cell local costs;
// the network-wide outage indicator is the max over locals.
struct CostSpec {
  enum class Kind { total_users, outage };
  Kind kind = Kind::total_users;
  double target_rate = 1.0;  // Mbps, outage only

  static CostSpec total_users() { return {Kind::total_users, 0.0}; }
  static CostSpec outage(double target_rate) { return {Kind::outage, target_rate}; }
};

inline std::string_view to_string(CostSpec::Kind k) { return k == CostSpec::Kind::total_users ? "total-users" : "outage"; }

inline double local_cost(const UserConfiguration& n, std::size_t cell, const CostSpec& spec) {
  const int users = n.total(cell);
  if (spec.kind == CostSpec::Kind::total_users) return users;
  if (users == 0) return 0.0;
  for (auto k : n.layout().cell_slots(cell))
    if (n.count(k) > 0 && n.layout().slot(k).rate < spec.target_rate * users) return 1.0;
  return 0.0;
}

// Number of users at `cell` whose throughput R/T_s is below `target_rate`.
inline int users_in_outage(const UserConfiguration& n, std::size_t cell, double target_rate) {
  const int users = n.total(cell);
  int out = 0;
  for (auto k : n.layout().cell_slots(cell))
    if (n.count(k) > 0 && n.layout().slot(k).rate < target_rate * users) out += n.count(k);
  return out;
}

struct CostBreakdown {
  double total = 0.0;
  std::vector<double> locals;

  double network_indicator() const { return locals.empty() ? 0.0 : *std::max_element(locals.begin(), locals.end()); }
};

inline CostBreakdown cost_of_state(const UserConfiguration& n, const CostSpec& spec) {
  CostBreakdown out;
  out.locals.resize(n.layout().num_cells());
  for (std::size_t s = 0; s < out.locals.size(); ++s) {
    out.locals[s] = local_cost(n, s, spec);
    out.total += out.locals[s];
  }
  return out;
}

// ---- events ----

enum class EventKind { exclusive_arrival, shared_arrival, exclusive_departure, shared_departure, self_loop };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::exclusive_arrival: return "exclusive-arrival";
    case EventKind::shared_arrival: return "shared-arrival";
    case EventKind::exclusive_departure: return "departure-exclusive";
    case EventKind::shared_departure: return "departure-shared";
    case EventKind::self_loop: return "self-loop";
  }
  return "?";
}

// `index` is the slot for exclusive arrivals and departures and the shared
// zone ordinal for shared arrivals.
struct Event {
  EventKind kind = EventKind::self_loop;
  std::size_t index = 0;
  double rate = 0.0;
  ActionDistribution action;  // shared arrivals only
};

namespace detail {

// Arrival sources: exclusive slots aggregated over their zones, then shared zones.
struct ArrivalSource {
  EventKind kind;
  std::size_t index;
  double rate;
};

inline std::vector<ArrivalSource> arrival_sources(const Topology& topo, const SlotLayout& layout) {
  std::vector<double> slot_rate(layout.num_slots(), 0.0);
  std::vector<ArrivalSource> shared;
  std::size_t ordinal = 0;
  for (std::size_t z = 0; z < topo.zones.size(); ++z) {
    const auto& zone = topo.zones[z];
    if (zone.kind == ZoneKind::exclusive)
      slot_rate[layout.zone_slots(z).front()] += zone.arrival_rate;
    else
      shared.push_back({EventKind::shared_arrival, ordinal++, zone.arrival_rate});
  }
  std::vector<ArrivalSource> out;
  for (std::size_t k = 0; k < slot_rate.size(); ++k)
    if (slot_rate[k] > 0.0) out.push_back({EventKind::exclusive_arrival, k, slot_rate[k]});
  for (const auto& s : shared)
    if (s.rate > 0.0) out.push_back(s);
  return out;
}

inline EventKind departure_kind(const SlotLayout& layout, std::size_t slot) {
  return layout.slot(slot).shared_ordinal ? EventKind::shared_departure : EventKind::exclusive_departure;
}

}  // namespace detail

// Every transition out of `n` with a positive rate. Departure of slot k at
// cell s fires at n_k R_k / (E[sigma] T_s).
template <AssociationPolicy Policy>
std::vector<Event> enumerate_events(const Topology& topo, const TrafficSpec& traffic, const UserConfiguration& n,
                                    const Policy& policy) {
  const auto& layout = n.layout();
  std::vector<Event> events;
  for (const auto& src : detail::arrival_sources(topo, layout)) {
    Event e{src.kind, src.index, src.rate, {}};
    if (src.kind == EventKind::shared_arrival) {
      e.action.p.resize(layout.shared_slots(src.index).size());
      policy.fill_action_probs(n, src.index, e.action.p);
    }
    events.push_back(std::move(e));
  }
  for (std::size_t k = 0; k < layout.num_slots(); ++k) {
    if (n.count(k) == 0) continue;
    const auto& slot = layout.slot(k);
    const double rate = n.count(k) * slot.rate / (traffic.mean_file_size * n.total(slot.cell));
    events.push_back({detail::departure_kind(layout, k), k, rate, {}});
  }
  return events;
}

struct StepResult {
  EventKind kind = EventKind::self_loop;
  std::size_t index = 0;   // as in Event
  std::size_t cell = 0;    // cell whose population changed (undefined for self-loops)
  double sojourn = 0.0;    // continuous steps only
  std::optional<std::size_t> action;  // candidate chosen at a shared arrival
};

struct NoDecisionObserver {
  void operator()(const UserConfiguration&, std::size_t, std::size_t) const {}
};

// Flow-level simulator of the association MDP. Attachment happens at the
// arrival instant: the policy is sampled, the observer sees the pre-arrival
// state and the chosen candidate, then the user joins.
template <AssociationPolicy Policy>
class Simulator {
 public:
  Simulator(const Topology& topo, const TrafficSpec& traffic, Policy policy, Rng rng)
      : layout_(std::make_shared<const SlotLayout>(topo)),
        state_(layout_),
        traffic_(traffic),
        policy_(std::move(policy)),
        rng_(std::move(rng)) {
    if (!(traffic.mean_file_size > 0.0)) throw InvalidArgument("mean file size must be > 0");
    sources_ = detail::arrival_sources(topo, *layout_);
    double cum = 0.0;
    for (const auto& s : sources_) cumulative_.push_back(cum += s.rate);
    lambda_tot_ = cum;
    cell_cap_ = topo.max_rate() / traffic.mean_file_size;
    std::size_t widest = 1;
    for (std::size_t z = 0; z < layout_->num_shared_zones(); ++z)
      widest = std::max(widest, layout_->shared_slots(z).size());
    probs_.resize(widest);
  }

  const UserConfiguration& state() const { return state_; }
  void reset(UserConfiguration n) {
    if (n.layout_ptr() != layout_) n = UserConfiguration(layout_, n.counts());
    state_ = std::move(n);
  }
  const std::shared_ptr<const SlotLayout>& layout() const { return layout_; }
  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }
  double arrival_rate() const { return lambda_tot_; }

  // Smallest admissible uniformization rate: lambda_tot + N_s R_max / E[sigma].
  double uniformization_bound() const { return lambda_tot_ + static_cast<double>(layout_->num_cells()) * cell_cap_; }

  double departure_rate(std::size_t cell) const {
    const int users = state_.total(cell);
    return users == 0 ? 0.0 : state_.rate_sum(cell) / (traffic_.mean_file_size * users);
  }

  template <class Observer = NoDecisionObserver>
  StepResult step_continuous(Observer&& observe = {}) {
    double total = lambda_tot_;
    for (std::size_t s = 0; s < layout_->num_cells(); ++s) total += departure_rate(s);
    StepResult res;
    if (total <= 0.0) {
      res.sojourn = std::numeric_limits<double>::infinity();
      return res;
    }
    res.sojourn = rng_.exponential(total);
    double u = rng_.uniform() * total;
    if (u < lambda_tot_) {
      arrive(u, res, observe);
      return res;
    }
    u -= lambda_tot_;
    std::size_t last_busy = 0;
    for (std::size_t s = 0; s < layout_->num_cells(); ++s) {
      const double d = departure_rate(s);
      if (d == 0.0) continue;
      last_busy = s;
      if (u < d) {
        depart(s, u * traffic_.mean_file_size * state_.total(s), res);
        return res;
      }
      u -= d;
    }
    depart(last_busy, std::numeric_limits<double>::infinity(), res);  // rounding at the top end
    return res;
  }

  // One step of the chain uniformized at `rate`: every cell owns a departure
  // band of width R_max/E[sigma]; the unused part of a band is a self-loop.
  template <class Observer = NoDecisionObserver>
  StepResult step_uniformized(double rate, Observer&& observe = {}) {
    if (rate < uniformization_bound() * (1.0 - 1e-12))
      throw InvalidArgument("uniformization rate " + std::to_string(rate) + " below the bound " +
                            std::to_string(uniformization_bound()));
    StepResult res;
    double u = rng_.uniform() * rate;
    if (u < lambda_tot_) {
      arrive(u, res, observe);
      return res;
    }
    u -= lambda_tot_;
    const auto cell = static_cast<std::size_t>(u / cell_cap_);
    if (cell >= layout_->num_cells()) return res;
    const double r = u - static_cast<double>(cell) * cell_cap_;
    if (r >= departure_rate(cell)) return res;
    depart(cell, r * traffic_.mean_file_size * state_.total(cell), res);
    return res;
  }

 private:
  template <class Observer>
  void arrive(double u, StepResult& res, Observer& observe) {
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    const auto& src = sources_[static_cast<std::size_t>(it - cumulative_.begin())];
    res.kind = src.kind;
    res.index = src.index;
    std::size_t slot = src.index;
    if (src.kind == EventKind::shared_arrival) {
      const auto slots = layout_->shared_slots(src.index);
      std::span<double> p(probs_.data(), slots.size());
      policy_.fill_action_probs(state_, src.index, p);
      double v = rng_.uniform();
      std::size_t c = 0;
      while (c + 1 < slots.size() && v >= p[c]) v -= p[c++];
      observe(std::as_const(state_), src.index, c);
      res.action = c;
      slot = slots[c];
    }
    res.cell = layout_->slot(slot).cell;
    state_.add(slot);
  }

  // `work` lies in [0, rate_sum(cell)); the slot whose share n_k R_k covers it leaves.
  void depart(std::size_t cell, double work, StepResult& res) {
    std::size_t chosen = layout_->num_slots();
    for (auto k : layout_->cell_slots(cell)) {
      const int n = state_.count(k);
      if (n == 0) continue;
      chosen = k;
      const double share = n * layout_->slot(k).rate;
      if (work < share) break;
      work -= share;
    }
    res.kind = detail::departure_kind(*layout_, chosen);
    res.index = chosen;
    res.cell = cell;
    state_.remove(chosen);
  }

  std::shared_ptr<const SlotLayout> layout_;
  UserConfiguration state_;
  TrafficSpec traffic_;
  Policy policy_;
  Rng rng_;
  std::vector<detail::ArrivalSource> sources_;
  std::vector<double> cumulative_;
  std::vector<double> probs_;
  double lambda_tot_ = 0.0;
  double cell_cap_ = 0.0;
};

// ---- incremental metrics ----

// Per-cell local costs kept current by touching only the cell an event changed.
class LocalCostTracker {
 public:
  LocalCostTracker(const UserConfiguration& n, CostSpec spec) : spec_(spec), locals_(n.layout().num_cells()) {
    for (std::size_t s = 0; s < locals_.size(); ++s) update(n, s);
  }

  void update(const UserConfiguration& n, std::size_t cell) {
    const double v = local_cost(n, cell, spec_);
    total_ += v - locals_[cell];
    locals_[cell] = v;
  }

  void observe(const UserConfiguration& n, const StepResult& step) {
    if (step.kind != EventKind::self_loop) update(n, step.cell);
  }

  std::span<const double> locals() const { return locals_; }
  // Locals are small integers, so the running sum stays exact.
  double total() const { return total_; }
  // For outage costs the locals are 0/1 and their sum counts cells in outage.
  double network_indicator() const {
    if (spec_.kind == CostSpec::Kind::outage) return total_ > 0.0 ? 1.0 : 0.0;
    return *std::max_element(locals_.begin(), locals_.end());
  }

 private:
  CostSpec spec_;
  std::vector<double> locals_;
  double total_ = 0.0;
};

struct SimulationOptions {
  double horizon = 0.0;           // simulated seconds; 0 = bounded by max_events only
  std::uint64_t max_events = 0;   // 0 = bounded by horizon only
  double warmup_fraction = 0.1;   // leading share of the run excluded from averages
  double outage_target = 1.0;     // Mbps
  long user_cap = 0;              // abort when exceeded; 0 = no cap
};

struct TimeAverages {
  double measured_time = 0.0;
  std::uint64_t events = 0;
  double mean_users = 0.0;
  std::vector<double> mean_users_per_cell;
  double network_outage = 0.0;     // time share with at least one user below target
  double mean_local_outage = 0.0;  // time share averaged over cells
  double user_outage = 0.0;        // time-averaged users below target / time-averaged users
  bool aborted = false;
};

// Optional CSV trace: time, event, total cost, per-cell costs, at most one row
// per `min_interval` simulated seconds.
class TrajectoryLogger {
 public:
  TrajectoryLogger(std::ostream& out, double min_interval) : out_(out), min_interval_(min_interval) {}

  void header(std::size_t cells) {
    out_ << "time,event,total_cost";
    for (std::size_t s = 0; s < cells; ++s) out_ << ",cost_" << s;
    out_ << '\n';
  }

  void record(double time, EventKind kind, double total, std::span<const double> locals) {
    if (time < next_) return;
    next_ = time + min_interval_;
    out_ << time << ',' << to_string(kind) << ',' << total;
    for (double c : locals) out_ << ',' << c;
    out_ << '\n';
  }

 private:
  std::ostream& out_;
  double min_interval_;
  double next_ = 0.0;
};

// Continuous-time run from the empty state. Averages are time-weighted over
// each sojourn, after the warm-up share of the horizon (or of the events).
template <AssociationPolicy Policy>
TimeAverages simulate_time_averages(const Topology& topo, const TrafficSpec& traffic, Policy policy,
                                    const SimulationOptions& opt, Rng rng, TrajectoryLogger* log = nullptr,
                                    const CostSpec& log_cost = CostSpec::total_users()) {
  if (!(opt.horizon > 0.0) && opt.max_events == 0) throw InvalidArgument("simulation needs a horizon or an event budget");
  if (!(opt.warmup_fraction >= 0.0 && opt.warmup_fraction < 1.0)) throw InvalidArgument("warm-up fraction must be in [0,1)");

  Simulator<Policy> sim(topo, traffic, std::move(policy), std::move(rng));
  const auto cells = topo.num_cells;
  LocalCostTracker outage(sim.state(), CostSpec::outage(opt.outage_target));
  std::optional<LocalCostTracker> logged;
  if (log) {
    logged.emplace(sim.state(), log_cost);
    log->header(cells);
  }
  std::vector<int> users_out(cells, 0);

  const double warm_time = opt.horizon > 0.0 ? opt.warmup_fraction * opt.horizon : 0.0;
  const auto warm_events = static_cast<std::uint64_t>(opt.warmup_fraction * static_cast<double>(opt.max_events));

  TimeAverages res;
  res.mean_users_per_cell.assign(cells, 0.0);
  double t = 0.0, users_area = 0.0, users_out_area = 0.0, net_area = 0.0, local_area = 0.0;
  std::vector<double> cell_area(cells, 0.0);
  int users_out_total = 0;
  std::vector<int> prev_totals(cells, 0);

  for (std::uint64_t ev = 0;; ++ev) {
    if (opt.max_events && ev >= opt.max_events) break;
    if (opt.horizon > 0.0 && t >= opt.horizon) break;
    const auto& n = sim.state();
    // the pre-step state holds over the coming sojourn
    const auto users_now = n.total_users();
    const double net = outage.network_indicator();
    const double local_sum = outage.total();
    const int users_out_now = users_out_total;
    for (std::size_t s = 0; s < cells; ++s) prev_totals[s] = n.total(s);

    auto step = sim.step_continuous();
    double dt = step.sojourn;
    if (!std::isfinite(dt)) dt = opt.horizon > 0.0 ? opt.horizon - t : 0.0;
    if (opt.horizon > 0.0) dt = std::min(dt, opt.horizon - t);

    const bool measuring = opt.horizon > 0.0 ? t >= warm_time : ev >= warm_events;
    double w = dt;
    if (opt.horizon > 0.0 && !measuring && t + dt > warm_time) {
      w = t + dt - warm_time;
    } else if (!measuring) {
      w = 0.0;
    }
    if (w > 0.0) {
      res.measured_time += w;
      users_area += w * static_cast<double>(users_now);
      users_out_area += w * users_out_now;
      net_area += w * net;
      local_area += w * local_sum;
      for (std::size_t s = 0; s < cells; ++s) cell_area[s] += w * prev_totals[s];
    }
    t += dt;
    ++res.events;

    if (step.kind == EventKind::self_loop) continue;
    const auto& now = sim.state();
    outage.update(now, step.cell);
    users_out_total -= users_out[step.cell];
    users_out[step.cell] = users_in_outage(now, step.cell, opt.outage_target);
    users_out_total += users_out[step.cell];
    if (logged) {
      logged->update(now, step.cell);
      log->record(t, step.kind, logged->total(), logged->locals());
    }
    if (opt.user_cap > 0 && now.total_users() > opt.user_cap) {
      res.aborted = true;
      break;
    }
  }

  if (res.measured_time > 0.0) {
    res.mean_users = users_area / res.measured_time;
    res.network_outage = net_area / res.measured_time;
    res.mean_local_outage = local_area / (res.measured_time * static_cast<double>(cells));
    for (std::size_t s = 0; s < cells; ++s) res.mean_users_per_cell[s] = cell_area[s] / res.measured_time;
  }
  if (users_area > 0.0) res.user_outage = users_out_area / users_area;
  return res;
}

// Average per-step cost of the uniformized chain, the cost of a step being
// that of the post-transition state.
template <AssociationPolicy Policy>
double average_cost_uniformized(const Topology& topo, const TrafficSpec& traffic, Policy policy, const CostSpec& cost,
                                std::uint64_t steps, std::uint64_t warmup_steps, Rng rng, double rate = 0.0) {
  Simulator<Policy> sim(topo, traffic, std::move(policy), std::move(rng));
  const double lambda = rate > 0.0 ? rate : sim.uniformization_bound();
  LocalCostTracker tracker(sim.state(), cost);
  for (std::uint64_t i = 0; i < warmup_steps; ++i) tracker.observe(sim.state(), sim.step_uniformized(lambda));
  double sum = 0.0;
  for (std::uint64_t i = 0; i < steps; ++i) {
    tracker.observe(sim.state(), sim.step_uniformized(lambda));
    sum += tracker.total();
  }
  return steps ? sum / static_cast<double>(steps) : 0.0;
}

}  // namespace assoc
