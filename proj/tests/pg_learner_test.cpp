#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "assoc/exact_solver.hpp"
#include "assoc/pg_learner.hpp"
#include "test_support.hpp"

using namespace assoc;

namespace {

// loads near 0.5 on both cells at an even split; the cells differ in every rate
Topology asym_pair() { return testing_support::two_cell(10, 8, 5, 4, 0.25, 0.2, 0.25); }

double exact_users(const Topology& t, const PolicyParams& p) {
  return exact_average_cost(t, TrafficSpec{10}, SoftmaxPolicy(p), CostSpec::total_users(), 14).average_cost;
}

std::vector<double> exact_gradient(const Topology& t, const PolicyParams& p, double eps = 1e-3) {
  auto cost = [&](std::span<const double> th) {
    PolicyParams q = p;
    std::copy(th.begin(), th.end(), q.values().begin());
    return exact_users(t, q);
  };
  return finite_difference_gradient(cost, p.values(), eps);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(GradientState, RunningAverageEqualsBatchMean) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (double beta : {0.0, 0.5, 0.9, 0.999}) {
    const std::size_t dim = 5, steps = 1000;
    auto g = GradientState::zeros(dim, beta);
    std::vector<double> z(dim, 0.0), sum(dim, 0.0);
    std::vector<double> s(dim);
    for (std::size_t t = 0; t < steps; ++t) {
      const bool decision = gen() % 3 == 0;
      for (auto& x : s) x = nd(gen);
      const double r = std::abs(nd(gen)) * 10;
      if (decision) {
        trace_step(g, s);
      } else {
        trace_step(g, std::span<const double>{});
      }
      grad_step_centralized(g, r);
      for (std::size_t k = 0; k < dim; ++k) {
        z[k] = beta * z[k] + (decision ? s[k] : 0.0);
        sum[k] += r * z[k];
      }
    }
    for (std::size_t k = 0; k < dim; ++k) {
      const double batch = sum[k] / steps;
      EXPECT_NEAR(g.estimate[k], batch, 1e-12 * std::max(1.0, std::abs(batch))) << beta;
      EXPECT_NEAR(g.trace[k], z[k], 1e-12 * std::max(1.0, std::abs(z[k])));
    }
  }
  EXPECT_THROW(GradientState::zeros(3, 1.0), InvalidArgument);
}

TEST(GradientState, DistributedBlocksSeeOnlyTheirCells) {
  const auto hex = build_hex_wraparound(2, 10, 5, 100, 10);
  SlotLayout layout(hex);
  const auto p = PolicyParams::zeros(hex, TyingMode::per_pair_scalar);
  const auto blocks = BlockCells::from(p, layout);
  std::mt19937_64 gen(8);
  std::vector<double> costs(19), trace(p.size());
  for (auto& c : costs) c = static_cast<double>(gen() % 5);
  for (auto& x : trace) x = static_cast<double>(gen() % 7) - 3.0;

  auto a = GradientState::zeros(p.size(), 0.9);
  a.trace = trace;
  grad_step_distributed(a, blocks, costs);

  const std::size_t zone = 10;
  const auto& mine = blocks.cells[zone];
  for (std::size_t cell = 0; cell < 19; ++cell) {
    if (std::find(mine.begin(), mine.end(), cell) != mine.end()) continue;
    auto changed = costs;
    changed[cell] += 100.0;
    auto b = GradientState::zeros(p.size(), 0.9);
    b.trace = trace;
    grad_step_distributed(b, blocks, changed);
    EXPECT_EQ(b.estimate[blocks.offset[zone]], a.estimate[blocks.offset[zone]]) << cell;
  }
  const double r = costs[mine[0]] + costs[mine[1]];
  EXPECT_DOUBLE_EQ(a.estimate[blocks.offset[zone]], r * trace[blocks.offset[zone]]);
  std::vector<double> short_costs(3, 0.0);
  auto c = GradientState::zeros(p.size(), 0.9);
  EXPECT_THROW(grad_step_distributed(c, blocks, short_costs), InvalidArgument);
}

TEST(GradientEstimator, TraceMovesOnlyAtDecisions) {
  const auto hex = build_hex_wraparound(1, 10, 5, 50, 10);
  const auto p = PolicyParams::zeros(hex, TyingMode::per_pair_scalar);
  Simulator<SoftmaxPolicy> sim(hex, TrafficSpec{10}, SoftmaxPolicy(p), Rng(3));
  GradientEstimator est(p, *sim.layout(), 0.9, true, false);
  const double rate = sim.uniformization_bound();
  std::vector<double> before(p.size());
  for (int i = 0; i < 5000; ++i) {
    std::optional<std::size_t> zone;
    before = est.centralized()->trace;
    auto obs = [&](const UserConfiguration& pre, std::size_t z, std::size_t a) {
      zone = z;
      est.on_decision(pre, z, a, p);
    };
    sim.step_uniformized(rate, obs);
    est.end_step(0.0, std::vector<double>(7, 0.0));
    const auto& z = est.centralized()->trace;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const bool own = zone && k >= p.block_offset(*zone) && k < p.block_offset(*zone) + p.block_size(*zone);
      if (!own) {
        EXPECT_DOUBLE_EQ(z[k], 0.9 * before[k]) << i << " " << k;
      }
    }
  }
}

TEST(GradientEstimator, ModesCoincideOnOnePair) {
  const auto t = asym_pair();
  LearnerConfig c;
  c.cost = CostSpec::total_users();
  c.window_seconds = 2000;
  c.mode = GradientMode::centralized;
  const auto central = estimate_gradient(t, TrafficSpec{10}, PolicyParams::zeros(t), c);
  c.mode = GradientMode::distributed;
  const auto local = estimate_gradient(t, TrafficSpec{10}, PolicyParams::zeros(t), c);
  ASSERT_EQ(central.delta.size(), local.delta.size());
  for (std::size_t k = 0; k < central.delta.size(); ++k)
    EXPECT_NEAR(central.delta[k], local.delta[k], 1e-12 * std::max(1.0, std::abs(central.delta[k])));
}

TEST(FiniteDifference, ExactOnQuadratic) {
  auto f = [](std::span<const double> x) { return 3 * x[0] * x[0] - 2 * x[0] * x[1] + 0.5 * x[1] + 7; };
  const std::vector<double> at{0.4, -1.3};
  const auto g = finite_difference_gradient(f, at, 0.1);
  EXPECT_NEAR(g[0], 6 * 0.4 + 2 * 1.3, 1e-12);
  EXPECT_NEAR(g[1], -0.8 + 0.5, 1e-12);
  EXPECT_THROW(finite_difference_gradient(f, at, 0.0), InvalidArgument);
}

TEST(FiniteDifference, SimulatedAgreesWithExact) {
  const auto t = asym_pair();
  const auto p = PolicyParams::zeros(t, TyingMode::per_pair_scalar);
  const auto exact = exact_gradient(t, p, 0.2)[0];
  FiniteDifferenceOptions o;
  o.eps = 0.2;
  o.window_steps = 2'000'000;
  const auto sim = finite_difference_gradient(t, TrafficSpec{10}, p, o)[0];
  EXPECT_GT(exact, 0.0);  // leaning toward the busier cell hurts
  EXPECT_NEAR(sim, exact, 0.25 * exact);
}

TEST(Learner, AbortKeepsTheta) {
  const auto t = asym_pair();
  LearnerConfig c;
  c.user_cap = 2;
  c.updates = 5;
  const auto tr = learn(t, TrafficSpec{10}, PolicyParams::zeros(t), c);
  EXPECT_TRUE(tr.aborted);
  ASSERT_EQ(tr.windows.size(), 1u);
  EXPECT_TRUE(tr.windows[0].aborted);
  EXPECT_FALSE(tr.windows[0].abort_reason.empty());
  ASSERT_EQ(tr.thetas.size(), 1u);
  for (double v : tr.thetas[0]) EXPECT_EQ(v, 0.0);
}

TEST(Learner, NoSharedTrafficKeepsThetaFixed) {
  const auto t = testing_support::two_cell(10, 8, 5, 4, 0.3, 0.3, 0.0);
  LearnerConfig c;
  c.updates = 4;
  c.window_seconds = 50;
  auto start = PolicyParams::zeros(t);
  start.values()[1] = 0.25;
  const auto tr = learn(t, TrafficSpec{10}, start, c);
  ASSERT_EQ(tr.thetas.size(), 5u);
  for (const auto& th : tr.thetas)
    for (std::size_t k = 0; k < th.size(); ++k) EXPECT_EQ(th[k], start.values()[k]);
}

TEST(Learner, ReproducibleUnderSeed) {
  const auto t = asym_pair();
  LearnerConfig c;
  c.updates = 3;
  c.window_seconds = 200;
  const auto a = learn(t, TrafficSpec{10}, PolicyParams::zeros(t), c);
  const auto b = learn(t, TrafficSpec{10}, PolicyParams::zeros(t), c);
  EXPECT_EQ(a.thetas, b.thetas);
  c.seed = 2;
  EXPECT_NE(learn(t, TrafficSpec{10}, PolicyParams::zeros(t), c).thetas, a.thetas);
}

TEST(Learner, StatisticalAscentOnPair) {
  const auto t = asym_pair();
  const auto p = PolicyParams::zeros(t);
  const auto ref = exact_gradient(t, p);
  auto accuracy = [&](double beta) {
    AccuracyOptions o;
    o.step_counts = {100'000};
    o.replications = 100;
    o.beta = beta;
    o.modes = {GradientMode::centralized};
    return ascent_accuracy_experiment(t, TrafficSpec{10}, p, ref, o).at(0).accuracy();
  };
  const double short_trace = accuracy(0.5), mid = accuracy(0.9), long_trace = accuracy(0.99);
  EXPECT_GE(mid, 0.95);
  EXPECT_GE(long_trace, 0.95);
  // a trace of about two steps forgets decisions before their cost shows up
  EXPECT_LT(short_trace, long_trace);
  RecordProperty("accuracy_beta_0_5", std::to_string(short_trace));
}

TEST(Learner, MinusDeltaDescends) {
  const auto t = asym_pair();
  const auto p = PolicyParams::zeros(t);
  const double eta = 0.5;
  int better = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    LearnerConfig c;
    c.cost = CostSpec::total_users();
    c.window_seconds = 100'000.0 / 2.7;  // 1e5 steps at the bound 0.7 + 2 x 10/10
    c.seed = 100 + rep;
    const auto d = estimate_gradient(t, TrafficSpec{10}, p, c).delta;
    const double n = std::sqrt(dot(d, d));
    PolicyParams down = p, up = p;
    for (std::size_t k = 0; k < d.size(); ++k) {
      down.values()[k] -= eta * d[k] / n;
      up.values()[k] += eta * d[k] / n;
    }
    if (exact_users(t, down) < exact_users(t, up)) ++better;
  }
  EXPECT_GT(better, reps / 2);
}

TEST(Learner, PairCostDoesNotRise) {
  const auto t = asym_pair();
  const auto p = PolicyParams::zeros(t);
  LearnerConfig c;
  c.cost = CostSpec::total_users();
  c.updates = 10;
  c.window_seconds = 10'000;
  const auto tr = learn(t, TrafficSpec{10}, p, c);
  ASSERT_FALSE(tr.aborted);
  PolicyParams end = p;
  std::copy(tr.thetas.back().begin(), tr.thetas.back().end(), end.values().begin());
  EXPECT_LE(exact_users(t, end), exact_users(t, p));
}
