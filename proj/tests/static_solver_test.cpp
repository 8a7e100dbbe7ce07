#include <gtest/gtest.h>

#include <random>

#include "assoc/static_solver.hpp"
#include "test_support.hpp"

using namespace assoc;
using testing_support::two_cell;

namespace {

// Active-set enumeration: the projection is v - tau on the support S where tau
// makes the support sum to 1; take the closest feasible candidate.
std::vector<double> brute_projection(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> best;
  double best_d = INFINITY;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int k = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        sum += v[i];
        ++k;
      }
    const double tau = (sum - 1.0) / k;
    std::vector<double> x(n, 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        x[i] = v[i] - tau;
        if (x[i] < -1e-12) ok = false;
      }
    if (!ok) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
    if (d < best_d) {
      best_d = d;
      best = x;
    }
  }
  return best;
}

// Mean transfer time of the 2-BS instance for share `a` of the shared zone on
// cell 0, written out directly.
double direct_mftt(double a, double l0, double l1, double ls, double r0, double r1, double s0, double s1, double es) {
  const double rho0 = es * (l0 / r0 + a * ls / s0);
  const double rho1 = es * (l1 / r1 + (1 - a) * ls / s1);
  if (rho0 >= 1 || rho1 >= 1) return INFINITY;
  return (rho0 / (1 - rho0) + rho1 / (1 - rho1)) / (l0 + l1 + ls);
}

}  // namespace

TEST(Simplex, ProjectionMatchesActiveSetOracle) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd(0.0, 1.5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 6;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(gen);
    const auto p = project_to_simplex(v);
    const auto q = brute_projection(v);
    ASSERT_EQ(p.size(), q.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(p[i], q[i], 1e-12);
      EXPECT_GE(p[i], 0.0);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Simplex, FixedPointsAndTies) {
  const std::vector<double> in{0.2, 0.3, 0.5};
  const auto p = project_to_simplex(in);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], in[i], 1e-15);
  const auto t = project_to_simplex(std::vector<double>{4.0, 4.0});
  EXPECT_DOUBLE_EQ(t[0], 0.5);
  EXPECT_DOUBLE_EQ(t[1], 0.5);
  EXPECT_TRUE(project_to_simplex(std::vector<double>{}).empty());
}

TEST(StaticSolver, AsymmetricTwoCellMatchesGridOracle) {
  struct Case {
    double l0, l1, ls, r0, r1, s0, s1;
  };
  const Case cases[] = {{0.3, 0.5, 0.6, 10, 10, 5, 5},
                        {0.2, 0.1, 0.8, 12, 8, 6, 3},
                        {0.5, 0.05, 0.3, 10, 10, 4, 7},
                        {0.1, 0.6, 0.2, 10, 10, 5, 5}};
  for (const auto& c : cases) {
    const auto t = two_cell(c.r0, c.r1, c.s0, c.s1, c.l0, c.l1, c.ls);
    const TrafficSpec tr{4.0};
    const auto sol = solve_static(t, tr, StaticObjective::mean_transfer_time(t.total_arrival_rate()));
    double best = INFINITY, best_a = -1;
    for (int i = 0; i <= 10000; ++i) {
      const double a = i * 1e-4;
      const double v = direct_mftt(a, c.l0, c.l1, c.ls, c.r0, c.r1, c.s0, c.s1, 4.0);
      if (v < best) {
        best = v;
        best_a = a;
      }
    }
    EXPECT_NEAR(sol.objective, best, 1e-3);
    EXPECT_LE(sol.objective, best + 1e-12);  // the grid can only be worse
    EXPECT_NEAR(sol.split.shares[0][0], best_a, 2e-3);
    EXPECT_LT(sol.projected_gradient_norm, 1e-8);
  }
}

TEST(StaticSolver, SymmetricSplitsAreExactlyHalf) {
  const auto t = two_cell(10, 10, 5, 5, 0.3, 0.3, 0.4);
  const auto sol = solve_static(t, TrafficSpec{10}, StaticObjective::mean_transfer_time(t.total_arrival_rate()));
  EXPECT_NEAR(sol.split.shares[0][0], 0.5, 1e-6);

  const auto hex = build_hex_wraparound(2, 10, 5, 100, 10);
  const auto h = solve_static(hex, TrafficSpec{10}, StaticObjective::mean_transfer_time(hex.total_arrival_rate()));
  for (const auto& row : h.split.shares) {
    EXPECT_NEAR(row[0], 0.5, 1e-6);
    EXPECT_NEAR(row[1], 0.5, 1e-6);
  }
  for (std::size_t s = 0; s < h.loads.size(); ++s) EXPECT_NEAR(h.loads[s], h.loads[0], 1e-9);
}

TEST(StaticSolver, GradientMatchesFiniteDifferences) {
  const auto t = two_cell(12, 8, 6, 3, 0.2, 0.1, 0.8);
  const TrafficSpec tr{4};
  const auto obj = StaticObjective::mean_transfer_time(t.total_arrival_rate());
  for (double a : {0.35, 0.6, 0.75, 0.9}) {
    AssociationSplit split{{{a, 1 - a}}};
    const auto ev = objective_and_gradient(t, tr, split, obj);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-6;
      // one coordinate alone leaves the simplex, so move the load it feeds
      auto value_at = [&](double delta) {
        LoadVector l = ev.loads;
        const auto& z = t.zones[2];
        l.rho[z.candidates[j].cell] += tr.mean_file_size * delta * z.arrival_rate / t.rate(z.candidates[j].rate_class);
        return obj.value(l);
      };
      const double fd = (value_at(h) - value_at(-h)) / (2 * h);
      EXPECT_NEAR(ev.gradient[0][j], fd, 1e-6);
    }
  }
}

TEST(StaticSolver, BeatsEveryFixedSplit) {
  const auto t = two_cell(10, 10, 6, 4, 0.3, 0.2, 0.5);
  const TrafficSpec tr{10};
  const auto obj = StaticObjective::mean_transfer_time(t.total_arrival_rate());
  const auto sol = solve_static(t, tr, obj);
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    AssociationSplit s{{{a, 1 - a}}};
    if (bs_loads(t, tr, s).max() >= 1) continue;
    EXPECT_LE(sol.objective, objective_and_gradient(t, tr, s, obj).value + 1e-12);
  }
}

TEST(StaticSolver, UnstableStartIsRepaired) {
  // uniform split overloads cell 0, everything on cell 1 is stable
  const auto t = two_cell(10, 10, 5, 5, 0.7, 0.1, 0.5);
  const TrafficSpec tr{10};
  ASSERT_GE(bs_loads(t, tr, AssociationSplit::uniform(t)).max(), 1.0);
  const auto sol = solve_static(t, tr, StaticObjective::mean_transfer_time(t.total_arrival_rate()));
  EXPECT_LT(sol.loads.max(), 1.0);
  EXPECT_LT(sol.projected_gradient_norm, 1e-8);
}

TEST(StaticSolver, OverloadReportsCertificate) {
  const auto t = two_cell(10, 10, 5, 5, 0.9, 0.9, 1.0);
  const TrafficSpec tr{10};
  try {
    solve_static(t, tr, StaticObjective::mean_transfer_time(t.total_arrival_rate()));
    FAIL() << "expected Infeasible";
  } catch (const Infeasible& e) {
    // total load (0.9 + 0.9 + 2) / 2 = 1.9 spread perfectly
    EXPECT_NEAR(e.lower_bound(), 1.9, 1e-12);
    EXPECT_GE(e.best_found(), e.lower_bound() - 1e-12);
  }
}

TEST(StaticSolver, MinMaxLoadBalancesWhenPossible) {
  const auto t = two_cell(10, 10, 5, 5, 0.5, 0.1, 0.4);
  const auto r = min_max_load(t, TrafficSpec{10}, 20000, 0.0);
  // loads (0.5 + 0.8a, 0.1 + 0.8(1-a)) meet at a = 0.25, max = 0.7
  EXPECT_NEAR(r.best_max_load, 0.7, 1e-3);
  EXPECT_LE(r.lower_bound, r.best_max_load + 1e-12);
}

TEST(StaticSolver, CustomObjectiveWithoutStabilityRequirement) {
  // U = sum rho^2 is minimized by equal loads when achievable, a = 0.25 as above
  const auto t = two_cell(10, 10, 5, 5, 0.5, 0.1, 0.4);
  StaticObjective sq;
  sq.value = [](const LoadVector& l) {
    double v = 0;
    for (double r : l.rho) v += r * r;
    return v;
  };
  sq.gradient = [](const LoadVector& l) {
    std::vector<double> g;
    for (double r : l.rho) g.push_back(2 * r);
    return g;
  };
  sq.requires_stable_loads = false;
  const auto sol = solve_static(t, TrafficSpec{10}, sq);
  EXPECT_NEAR(sol.split.shares[0][0], 0.25, 1e-6);
}
