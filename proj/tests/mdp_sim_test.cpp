#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "assoc/mdp_sim.hpp"
#include "test_support.hpp"

using namespace assoc;
using testing_support::single_cell;
using testing_support::two_cell;

namespace {

struct Fixture {
  Topology topo = two_cell(10, 8, 5, 4, 0.2, 0.15, 0.3);
  TrafficSpec traffic{10.0};
  PolicyParams params = baseline_params(BaselineKind::shortest_queue, 1.0, topo, traffic);
};

}  // namespace

TEST(Events, RatesByHand) {
  Fixture f;
  auto layout = std::make_shared<const SlotLayout>(f.topo);
  std::vector<int> c(layout->num_slots(), 0);
  const auto sh = layout->shared_slots(0);
  c[layout->exclusive_slot(0, testing_support::class_of(f.topo, 10))] = 2;
  c[sh[0]] = 1;  // 5 Mbps at cell 0
  c[sh[1]] = 3;  // 4 Mbps at cell 1
  const UserConfiguration n(layout, c);
  const auto ev = enumerate_events(f.topo, f.traffic, n, SoftmaxPolicy(f.params));
  double arrivals = 0.0;
  std::map<std::size_t, double> dep;
  for (const auto& e : ev) {
    if (e.kind == EventKind::exclusive_arrival || e.kind == EventKind::shared_arrival) arrivals += e.rate;
    if (e.kind == EventKind::exclusive_departure || e.kind == EventKind::shared_departure) dep[e.index] = e.rate;
    if (e.kind == EventKind::shared_arrival) {
      ASSERT_EQ(e.action.p.size(), 2u);
      // shortest queue with gamma 1: 3 users vs 3 users -> even
      EXPECT_NEAR(e.action.p[0], 0.5, 1e-12);
    }
  }
  EXPECT_NEAR(arrivals, 0.65, 1e-15);
  // each user at cell 0 (3 of them) gets R_k / (E[sigma] * 3)
  EXPECT_NEAR(dep.at(layout->exclusive_slot(0, testing_support::class_of(f.topo, 10))), 2 * 10.0 / 30.0, 1e-15);
  EXPECT_NEAR(dep.at(sh[0]), 5.0 / 30.0, 1e-15);
  EXPECT_NEAR(dep.at(sh[1]), 3 * 4.0 / 30.0, 1e-15);
  EXPECT_EQ(dep.size(), 3u);
}

TEST(Simulator, NextEventFrequenciesMatchRates) {
  Fixture f;
  Simulator<SoftmaxPolicy> sim(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(4));
  const auto layout = sim.layout();
  std::vector<int> c(layout->num_slots(), 0);
  const auto sh = layout->shared_slots(0);
  c[sh[0]] = 2;
  c[layout->exclusive_slot(1, testing_support::class_of(f.topo, 8))] = 1;
  const UserConfiguration start(layout, c);

  // expected probability of landing in each successor state
  std::map<std::vector<int>, double> expect;
  double total = 0.0;
  for (const auto& e : enumerate_events(f.topo, f.traffic, start, sim.policy())) total += e.rate;
  for (const auto& e : enumerate_events(f.topo, f.traffic, start, sim.policy())) {
    auto add = [&](std::size_t slot, int d, double p) {
      auto next = c;
      next[slot] += d;
      expect[next] += p;
    };
    if (e.kind == EventKind::exclusive_arrival) add(e.index, +1, e.rate / total);
    else if (e.kind == EventKind::shared_arrival)
      for (std::size_t a = 0; a < 2; ++a) add(layout->shared_slots(e.index)[a], +1, e.rate * e.action.p[a] / total);
    else add(e.index, -1, e.rate / total);
  }
  const int trials = 200000;
  std::map<std::vector<int>, int> seen;
  double sojourn = 0.0;
  for (int i = 0; i < trials; ++i) {
    sim.reset(start);
    const auto r = sim.step_continuous();
    sojourn += r.sojourn;
    const auto cnt = sim.state().counts();
    ++seen[std::vector<int>(cnt.begin(), cnt.end())];
  }
  for (const auto& [state, p] : expect) {
    const double sd = std::sqrt(p * (1 - p) / trials);
    EXPECT_NEAR(static_cast<double>(seen[state]) / trials, p, 5 * sd + 1e-12);
  }
  EXPECT_EQ(seen.size(), expect.size());
  EXPECT_NEAR(sojourn / trials, 1.0 / total, 5.0 / (total * std::sqrt(trials)));
}

TEST(Simulator, UniformizedStepsRespectBound) {
  Fixture f;
  Simulator<SoftmaxPolicy> sim(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(1));
  EXPECT_NEAR(sim.uniformization_bound(), 0.65 + 2 * 10.0 / 10.0, 1e-12);
  EXPECT_THROW(sim.step_uniformized(1.0), InvalidArgument);
  for (int i = 0; i < 1000; ++i) sim.step_uniformized(sim.uniformization_bound() * 1.5);
}

TEST(Simulator, MM1EmptyProbabilityAndMeanUsers) {
  // one class at one cell: PS with exponential sizes is M/M/1
  for (double rho : {0.3, 0.5}) {
    const auto t = single_cell(10.0, rho);  // rho = lambda * 10 / 10
    Simulator<StaticSplitPolicy> sim(t, TrafficSpec{10.0}, StaticSplitPolicy(AssociationSplit{}), Rng(42, {1}));
    double time = 0.0, empty = 0.0, area = 0.0;
    for (int i = 0; i < 400000; ++i) {
      const auto n = sim.state().total_users();
      const auto r = sim.step_continuous();
      time += r.sojourn;
      area += r.sojourn * n;
      if (n == 0) empty += r.sojourn;
    }
    EXPECT_NEAR(empty / time, 1 - rho, 0.01) << rho;
    EXPECT_NEAR(area / time, rho / (1 - rho), 0.05 * rho / (1 - rho)) << rho;
  }
}

TEST(Simulator, AttachmentSeenBeforeUserJoins) {
  Fixture f;
  Simulator<SoftmaxPolicy> sim(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(8));
  int decisions = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto before = sim.state();
    std::optional<std::pair<std::size_t, std::size_t>> seen;
    auto obs = [&](const UserConfiguration& pre, std::size_t zone, std::size_t action) {
      EXPECT_EQ(pre, before);
      seen = {zone, action};
    };
    const auto r = sim.step_continuous(obs);
    if (r.kind == EventKind::shared_arrival) {
      ASSERT_TRUE(seen);
      ++decisions;
      const auto slot = sim.layout()->shared_slots(seen->first)[seen->second];
      EXPECT_EQ(sim.state().count(slot), before.count(slot) + 1);
      EXPECT_EQ(r.action, seen->second);
    } else {
      EXPECT_FALSE(seen);
    }
  }
  EXPECT_GT(decisions, 0);
}

TEST(Simulator, SameSeedSameTrajectory) {
  Fixture f;
  Simulator<SoftmaxPolicy> a(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(3, {7})),
      b(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(3, {7})), c(f.topo, f.traffic, SoftmaxPolicy(f.params), Rng(3, {8}));
  bool differs = false;
  for (int i = 0; i < 2000; ++i) {
    const auto ra = a.step_continuous(), rb = b.step_continuous(), rc = c.step_continuous();
    EXPECT_EQ(ra.sojourn, rb.sojourn);
    EXPECT_EQ(a.state(), b.state());
    differs = differs || ra.sojourn != rc.sojourn;
  }
  EXPECT_TRUE(differs);
}

TEST(Simulator, NoTrafficMeansInfiniteSojourn) {
  auto t = single_cell(10.0, 1.0);
  t.zones[0].arrival_rate = 0.0;
  Simulator<StaticSplitPolicy> sim(t, TrafficSpec{}, StaticSplitPolicy(AssociationSplit{}), Rng(1));
  EXPECT_TRUE(std::isinf(sim.step_continuous().sojourn));
  SimulationOptions o;
  o.horizon = 100.0;
  const auto r = simulate_time_averages(t, TrafficSpec{}, StaticSplitPolicy(AssociationSplit{}), o, Rng(1));
  EXPECT_EQ(r.mean_users, 0.0);
  EXPECT_EQ(r.network_outage, 0.0);
  EXPECT_NEAR(r.measured_time, 90.0, 1e-9);
}

TEST(Costs, OutageSemantics) {
  const auto t = two_cell(10, 10, 4, 5, 0.1, 0.1, 0.1);
  auto layout = std::make_shared<const SlotLayout>(t);
  std::vector<int> c(layout->num_slots(), 0);
  const auto sh = layout->shared_slots(0);
  c[sh[0]] = 3;  // three users at 4 Mbps on cell 0: 4/3 each, above 1 Mbps
  UserConfiguration n(layout, c);
  EXPECT_EQ(local_cost(n, 0, CostSpec::outage(1.0)), 0.0);
  n.add(sh[0]);  // 4/4 = 1 is not below the target
  EXPECT_EQ(local_cost(n, 0, CostSpec::outage(1.0)), 0.0);
  n.add(layout->exclusive_slot(0, testing_support::class_of(t, 10)));
  // five users: 4/5 below target for the edge users, 10/5 fine for the centre user
  EXPECT_EQ(local_cost(n, 0, CostSpec::outage(1.0)), 1.0);
  EXPECT_EQ(users_in_outage(n, 0, 1.0), 4);
  EXPECT_EQ(local_cost(n, 1, CostSpec::outage(1.0)), 0.0);
  EXPECT_EQ(local_cost(n, 0, CostSpec::total_users()), 5.0);
  const auto b = cost_of_state(n, CostSpec::outage(1.0));
  EXPECT_EQ(b.total, 1.0);
  EXPECT_EQ(b.network_indicator(), 1.0);
}

TEST(Costs, TrackerMatchesRecomputation) {
  const auto hex = build_hex_wraparound(1, 10, 5, 60, 10);
  const TrafficSpec tr{10};
  Simulator<SoftmaxPolicy> sim(hex, tr, SoftmaxPolicy(PolicyParams::zeros(hex)), Rng(6));
  for (auto spec : {CostSpec::total_users(), CostSpec::outage(1.0)}) {
    LocalCostTracker tr_(sim.state(), spec);
    for (int i = 0; i < 20000; ++i) {
      tr_.observe(sim.state(), sim.step_uniformized(sim.uniformization_bound()));
      if (i % 97 == 0) {
        const auto full = cost_of_state(sim.state(), spec);
        ASSERT_EQ(tr_.total(), full.total);
        ASSERT_EQ(tr_.network_indicator(), full.network_indicator());
        for (std::size_t s = 0; s < full.locals.size(); ++s) ASSERT_EQ(tr_.locals()[s], full.locals[s]);
      }
    }
  }
}

TEST(TimeAverages, UniformizedAndContinuousAgree) {
  Fixture f;
  SimulationOptions o;
  o.max_events = 1'000'000;
  const auto cont = simulate_time_averages(f.topo, f.traffic, SoftmaxPolicy(f.params), o, Rng(10));
  const double disc = average_cost_uniformized(f.topo, f.traffic, SoftmaxPolicy(f.params), CostSpec::total_users(),
                                               2'000'000, 100'000, Rng(11));
  EXPECT_NEAR(disc, cont.mean_users, 0.03 * cont.mean_users);
}

TEST(TimeAverages, UserCapAborts) {
  // load 1.5: the queue grows without bound
  const auto t = single_cell(10.0, 1.5);
  SimulationOptions o;
  o.max_events = 1'000'000;
  o.user_cap = 50;
  const auto r = simulate_time_averages(t, TrafficSpec{10}, StaticSplitPolicy(AssociationSplit{}), o, Rng(2));
  EXPECT_TRUE(r.aborted);
  EXPECT_LT(r.events, 1'000'000u);
}

TEST(TimeAverages, WarmupIsExcluded) {
  const auto t = single_cell(10.0, 0.5);
  SimulationOptions o;
  o.horizon = 1000.0;
  o.warmup_fraction = 0.25;
  const auto r = simulate_time_averages(t, TrafficSpec{10}, StaticSplitPolicy(AssociationSplit{}), o, Rng(2));
  EXPECT_NEAR(r.measured_time, 750.0, 1e-9);
  o.warmup_fraction = 1.0;
  EXPECT_THROW(simulate_time_averages(t, TrafficSpec{10}, StaticSplitPolicy(AssociationSplit{}), o, Rng(2)),
               InvalidArgument);
}

TEST(TrajectoryLogger, HeaderAndThinning) {
  Fixture f;
  std::ostringstream out;
  TrajectoryLogger log(out, 10.0);
  SimulationOptions o;
  o.horizon = 100.0;
  simulate_time_averages(f.topo, f.traffic, SoftmaxPolicy(f.params), o, Rng(5), &log);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,event,total_cost,cost_0,cost_1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_GT(rows, 0);
  EXPECT_LE(rows, 11);
}
