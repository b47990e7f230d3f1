// Copyright 2026 The minstp Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "minstp/error.h"
#include "minstp/exact_ot.h"
#include "minstp/lapsum.h"
#include "minstp/stp.h"
#include "oracles.h"

namespace minstp {
namespace {

std::pair<DiscreteMeasure, DiscreteMeasure> crossed() {
  Points x(2, 2), y(2, 2);
  x << 0, 0, 1, 1;
  y << 0, 1, 1, 0;
  return {DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y)};
}

std::vector<double> as_vec(const Eigen::VectorXd& v) { return {v.begin(), v.end()}; }

// Staircase coupling built by walking cumulative masses in exact integer units
// of 1/(N M).
std::vector<std::tuple<Eigen::Index, Eigen::Index, long>> staircase(Eigen::Index n,
                                                                    Eigen::Index m) {
  std::vector<std::tuple<Eigen::Index, Eigen::Index, long>> out;
  long row_left = m, col_left = n;
  Eigen::Index i = 0, j = 0;
  while (i < n && j < m) {
    const long take = std::min(row_left, col_left);
    out.emplace_back(i, j, take);
    row_left -= take;
    col_left -= take;
    if (row_left == 0) { ++i; row_left = m; }
    if (col_left == 0) { ++j; col_left = n; }
  }
  return out;
}

TEST(NwCorner, Examples) {
  const auto a = nw_corner(3, 3);
  ASSERT_EQ(a.entries.size(), 3u);
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_EQ(a.entries[k].i, k);
    EXPECT_EQ(a.entries[k].j, k);
    EXPECT_NEAR(a.entries[k].mass, 1.0 / 3, 1e-15);
  }
  const auto b = nw_corner(2, 4);
  ASSERT_EQ(b.entries.size(), 4u);
  const Eigen::Index bi[] = {0, 0, 1, 1}, bj[] = {0, 1, 2, 3};
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(b.entries[k].i, bi[k]);
    EXPECT_EQ(b.entries[k].j, bj[k]);
    EXPECT_NEAR(b.entries[k].mass, 0.25, 1e-15);
  }
  const auto c = nw_corner(3, 2);
  ASSERT_EQ(c.entries.size(), 4u);
  const Eigen::Index ci[] = {0, 1, 1, 2}, cj[] = {0, 0, 1, 1};
  const double cm[] = {1.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 3};
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(c.entries[k].i, ci[k]);
    EXPECT_EQ(c.entries[k].j, cj[k]);
    EXPECT_NEAR(c.entries[k].mass, cm[k], 1e-15);
  }
}

TEST(NwCorner, StaircaseInvariants) {
  for (Eigen::Index n = 1; n <= 12; ++n) {
    for (Eigen::Index m = 1; m <= 12; ++m) {
      const auto plan = nw_corner(n, m);
      const auto want = staircase(n, m);
      ASSERT_EQ(plan.entries.size(), want.size());
      EXPECT_EQ(static_cast<Eigen::Index>(plan.entries.size()), n + m - std::gcd(n, m));
      std::vector<double> rows(n, 0.0), cols(m, 0.0);
      for (std::size_t k = 0; k < want.size(); ++k) {
        const auto& e = plan.entries[k];
        EXPECT_EQ(e.i, std::get<0>(want[k]));
        EXPECT_EQ(e.j, std::get<1>(want[k]));
        EXPECT_NEAR(e.mass, std::get<2>(want[k]) / static_cast<double>(n * m), 1e-15);
        if (k > 0) EXPECT_LE(plan.entries[k - 1].j, e.j);
        rows[e.i] += e.mass;
        cols[e.j] += e.mass;
      }
      for (double r : rows) EXPECT_NEAR(r, 1.0 / n, 1e-12);
      for (double c : cols) EXPECT_NEAR(c, 1.0 / m, 1e-12);
    }
  }
}

TEST(LiftPlan, CrossedPair) {
  const auto [mu, nu] = crossed();
  const StpResult r = lift_plan(Slicer::linear(Eigen::Vector2d(1, 0)), mu, nu, 2);
  EXPECT_NEAR(r.cost, 1.0, 1e-15);
  EXPECT_NEAR(stp_value(r), 1.0, 1e-15);
  EXPECT_TRUE(r.plan.is_feasible());
}

TEST(LiftPlan, SelfIsIdentity) {
  Stream rng = Stream::derive(1, "test/lift-self");
  const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 9, 2));
  const Slicer f = Slicer::random_mlp(2, {8}, 4);
  const StpResult r = lift_plan(f, mu, mu, 2);
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_LT((r.plan.entries() - Eigen::MatrixXd::Identity(9, 9) / 9).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(r.slicer_id, slicer_fingerprint(f));
}

TEST(LiftPlan, MatchesSortAndPairOracle) {
  Stream rng = Stream::derive(2, "test/lift-oracle");
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(20));
    const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 3));
    const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 3));
    const Slicer f = Slicer::random_mlp(3, {5}, 10 + trial);
    const Eigen::VectorXd fx = f.eval(mu.points()), fy = f.eval(nu.points());
    std::vector<Eigen::Index> ox(n), oy(n);
    std::iota(ox.begin(), ox.end(), 0);
    std::iota(oy.begin(), oy.end(), 0);
    std::sort(ox.begin(), ox.end(), [&](auto a, auto b) { return fx(a) < fx(b); });
    std::sort(oy.begin(), oy.end(), [&](auto a, auto b) { return fy(a) < fy(b); });
    double want = 0;
    for (Eigen::Index k = 0; k < n; ++k)
      want += oracle::sq_dist_pow(mu.points().row(ox[k]), nu.points().row(oy[k]), 2.0);
    want /= n;
    const StpResult r = lift_plan(f, mu, nu, 2);
    EXPECT_NEAR(r.cost, want, 1e-12);
    EXPECT_NEAR(r.cost, r.plan.cost(oracle::cost(mu.points(), nu.points(), 2)), 1e-12);
  }
}

TEST(LiftPlan, UnequalSizesUseStaircase) {
  Stream rng = Stream::derive(3, "test/lift-nm");
  const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 6, 2));
  const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, 4, 2));
  const StpResult r = lift_plan(Slicer::random_linear(2, 3), mu, nu, 2);
  EXPECT_TRUE(r.plan.is_feasible(1e-12));
  EXPECT_EQ((r.plan.entries().array() > 0).count(), 6 + 4 - 2);
}

TEST(LiftPlan, Symmetric) {
  Stream rng = Stream::derive(4, "test/lift-sym");
  for (int trial = 0; trial < 30; ++trial) {
    const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 5 + trial % 4, 2));
    const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, 3 + trial % 5, 2));
    const Slicer f = Slicer::random_mlp(2, {4}, trial);
    const auto ab = lift_plan(f, mu, nu, 2), ba = lift_plan(f, nu, mu, 2);
    EXPECT_NEAR(ab.cost, ba.cost, 1e-10);
    EXPECT_LT((ab.plan.entries() - ba.plan.entries().transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(LiftPlan, NeverBelowOptimalTransport) {
  Stream rng = Stream::derive(5, "test/sandwich");
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(30));
    const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2));
    const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2));
    const double ot = ot_assignment(mu, nu, 2).cost;
    EXPECT_GE(lift_plan(Slicer::random_mlp(2, {6}, trial), mu, nu, 2).cost, ot - 1e-9);
    EXPECT_GE(lift_plan(Slicer::random_linear(2, trial), mu, nu, 2).cost, ot - 1e-9);
  }
}

TEST(LiftPlan, RejectsWeighted) {
  const DiscreteMeasure w(Points::Zero(2, 2), Eigen::Vector2d(0.3, 0.7));
  EXPECT_THROW(lift_plan(Slicer::random_linear(2, 0), w, w, 2), UnsupportedError);
}

TEST(LiftCost, AgreesWithLiftProjections) {
  Stream rng = Stream::derive(6, "test/liftcost");
  const Points x = oracle::random_points(rng, 7, 2), y = oracle::random_points(rng, 5, 2);
  const Slicer f = Slicer::random_linear(2, 1);
  const Eigen::MatrixXd c = oracle::cost(x, y, 2);
  const auto ux = as_vec(f.eval(x)), uy = as_vec(f.eval(y));
  EXPECT_NEAR(lift_cost(ux, uy, c), lift_projections(ux, uy).cost(c), 1e-14);
}

TEST(StpValue, Examples) {
  StpResult r;
  r.p = 2;
  r.cost = 1;
  EXPECT_EQ(stp_value(r), 1.0);
  r.cost = 0;
  EXPECT_EQ(stp_value(r), 0.0);
  r.cost = 4;
  EXPECT_EQ(stp_value(r), 2.0);
}

TEST(TwoBranch, HardLimit) {
  Stream rng = Stream::derive(7, "test/tb-limit");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.below(10));
    const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2));
    const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, m, 2));
    const Slicer f = Slicer::random_linear(2, trial);
    const TwoBranchResult soft = two_branch_plan(f, mu, nu, 1e-7, 2);
    const StpResult hard = lift_plan(f, mu, nu, 2);
    EXPECT_LT((soft.plan - hard.plan.entries()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(soft.loss, hard.cost, 1e-6);
  }
}

TEST(TwoBranch, MarginalsForEveryAlpha) {
  Stream rng = Stream::derive(8, "test/tb-marg");
  const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 9, 2));
  const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, 6, 2));
  const Slicer f = Slicer::random_mlp(2, {5}, 2);
  for (double alpha : {1e-6, 1e-3, 0.05, 0.5, 5.0, 500.0}) {
    const Eigen::MatrixXd g = two_branch_plan(f, mu, nu, alpha, 2).plan;
    EXPECT_GE(g.minCoeff(), -1e-15);
    EXPECT_LT((g.rowwise().sum().array() - 1.0 / 9).abs().maxCoeff(), 1e-9);
    EXPECT_LT((g.colwise().sum().array() - 1.0 / 6).abs().maxCoeff(), 1e-9);
  }
}

// The loss with the hard factors frozen at the unperturbed parameters.
double frozen_loss(const Slicer& f0, const Eigen::VectorXd& params, const Points& x,
                   const Points& y, const Eigen::MatrixXd& c, double ax, double ay) {
  Slicer f = f0;
  f.set_parameters(params);
  const auto ux = as_vec(f.eval(x)), uy = as_vec(f.eval(y));
  const auto hx = as_vec(f0.eval(x)), hy = as_vec(f0.eval(y));
  const Eigen::Index n = x.rows(), m = y.rows();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, m);
  for (const auto& e : nw_corner(n, m).entries) t(e.i, e.j) = e.mass;
  const Eigen::MatrixXd sx = soft_permutation(ux, ax).matrix, sy = soft_permutation(uy, ay).matrix;
  const Eigen::MatrixXd px = hard_permutation(hx), py = hard_permutation(hy);
  const Eigen::MatrixXd g = 0.5 * (sx.transpose() * t * py + px.transpose() * t * sy);
  return (g.array() * c.array()).sum();
}

TEST(TwoBranch, GradientMatchesFiniteDifferences) {
  Stream rng = Stream::derive(9, "test/tb-fd");
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Points x = oracle::random_points(rng, n, 2), y = oracle::random_points(rng, m, 2);
    const Eigen::MatrixXd c = oracle::cost(x, y, 2);
    const Slicer f = trial % 2 ? Slicer::random_linear(2, trial) : Slicer::random_mlp(2, {4}, trial);
    TwoBranchOptions opt;
    opt.alpha_x = rng.uniform(0.05, 0.5);
    opt.alpha_y = rng.uniform(0.05, 0.5);
    opt.want_plan = true;
    const TwoBranchResult r = two_branch_on_points(f, x, y, c, opt);
    EXPECT_NEAR(r.loss, frozen_loss(f, f.parameters(), x, y, c, opt.alpha_x, opt.alpha_y), 1e-12);
    const Eigen::VectorXd fd = oracle::central_diff(
        [&](const Eigen::VectorXd& p) {
          return frozen_loss(f, p, x, y, c, opt.alpha_x, opt.alpha_y);
        },
        f.parameters(), 1e-5);
    EXPECT_LT(oracle::rel_error(r.gradient, fd), 1e-4) << "trial " << trial;
  }
}

TEST(JEta, ZeroScaleIsHardLift) {
  Stream rng = Stream::derive(10, "test/jeta0");
  const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 8, 2));
  const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, 8, 2));
  const Slicer f = Slicer::random_mlp(2, {4}, 1);
  PerturbationConfig cfg;
  cfg.eta = 0.0;
  cfg.num_samples = 50;
  const JEtaEstimate e = estimate_J_eta(f, mu, nu, cfg, 2);
  EXPECT_EQ(e.mean, lift_plan(f, mu, nu, 2).cost);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(JEta, CrossedPairConverges) {
  const auto [mu, nu] = crossed();
  const Slicer f = Slicer::linear(Eigen::Vector2d(1, 0));
  double prev_gap = 1e30;
  for (double eta : {0.5, 0.1, 0.02}) {
    PerturbationConfig cfg;
    cfg.eta = eta;
    cfg.num_samples = 2000;
    cfg.seed = 1;
    const JEtaEstimate e = estimate_J_eta(f, mu, nu, cfg, 2);
    const double gap = std::abs(e.mean - 1.0);
    EXPECT_LE(gap, 2 * e.std_error + 1e-12);
    EXPECT_LE(gap, prev_gap + 2 * e.std_error + 1e-12);
    prev_gap = gap;
  }
}

TEST(JEta, IndependentOfWorkers) {
  Stream rng = Stream::derive(11, "test/jeta-w");
  const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, 10, 2));
  const auto nu = DiscreteMeasure::uniform(oracle::random_points(rng, 10, 2));
  PerturbationConfig cfg;
  cfg.eta = 0.3;
  cfg.num_samples = 200;
  const Slicer f = Slicer::random_linear(2, 5);
  const auto a = estimate_J_eta(f, mu, nu, cfg, 2, 1);
  const auto b = estimate_J_eta(f, mu, nu, cfg, 2, 4);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.mean, b.mean);
}

// Two 1D couplings compared as measures on the plane with the l_p^p metric.
TEST(CouplingDistance, BoundedByMarginalDistances) {
  Stream rng = Stream::derive(12, "test/tools");
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(6));
    const double p = 1.0 + 2.0 * rng.uniform();
    auto draw = [&] { return as_vec(oracle::random_points(rng, n, 1).col(0)); };
    const auto m1 = draw(), m2 = draw(), n1 = draw(), n2 = draw();
    auto coupling_atoms = [&](std::vector<double> a, std::vector<double> b) {
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      std::vector<std::pair<double, double>> atoms;
      for (Eigen::Index k = 0; k < n; ++k) atoms.push_back({a[k], b[k]});
      return atoms;
    };
    const auto g1 = coupling_atoms(m1, n1), g2 = coupling_atoms(m2, n2);
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        c(i, j) = std::pow(std::abs(g1[i].first - g2[j].first), p) +
                  std::pow(std::abs(g1[i].second - g2[j].second), p);
    const double lhs = oracle::brute_force_assignment(c);
    const double rhs = oracle::sorted_cost_1d(m1, m2, p) + oracle::sorted_cost_1d(n1, n2, p);
    EXPECT_LE(lhs, rhs + 1e-9);
  }
}

}  // namespace
}  // namespace minstp
