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


// Acceptance suite. Prints one line per criterion:
//
//   [PASS] 3 gradient-fidelity  margin=...  (1.2s)  detail
//
// Usage: acceptance [criterion ...]; no arguments runs all of them. The exit
// code is nonzero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "minstp/error.h"
#include "minstp/exact_ot.h"
#include "minstp/experiments.h"
#include "minstp/lapsum.h"
#include "minstp/stp.h"
#include "minstp/train.h"
#include "oracles.h"

namespace {

using namespace minstp;

struct Outcome {
  double margin;  // >= 0 passes
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<double> as_vec(const Eigen::VectorXd& v) { return {v.begin(), v.end()}; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

std::pair<DiscreteMeasure, DiscreteMeasure> crossed() {
  Points x(2, 2), y(2, 2);
  x << 0, 0, 1, 1;
  y << 0, 1, 1, 0;
  return {DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y)};
}

// 1 -------------------------------------------------------------------------
Outcome sandwich() {
  const Eigen::Index sizes[] = {8, 16, 32};
  double lower = std::numeric_limits<double>::infinity(), upper = lower;
  for (std::uint64_t k = 0; k < 200; ++k) {
    Stream rng = Stream::derive(101, "acceptance/sandwich", {k});
    const Eigen::Index n = sizes[k % 3];
    const auto mu = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2));
    Points y = oracle::random_points(rng, n, 2, rng.uniform(0.5, 2.0));
    y.col(0).array() += rng.uniform(-1, 1);
    const auto nu = DiscreteMeasure::uniform(y);
    const Slicer f0 = Slicer::random_mlp(2, {16}, rng());
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.lr = 0.05;
    cfg.alpha_fraction = 0.05;
    cfg.optimizer = Optimizer::kMomentum;
    cfg.eval_every = 10;
    cfg.keep_best = true;
    cfg.seed = rng();
    const Slicer f = train_minstp(mu, nu, f0, cfg).slicer;
    const double ot = ot_assignment(mu, nu, 2).cost;
    const double trained = lift_plan(f, mu, nu, 2).cost;
    const double random = lift_plan(f0, mu, nu, 2).cost;
    lower = std::min(lower, trained - ot);
    upper = std::min(upper, random - trained);
  }
  return {std::min(lower, upper) + 1e-9,
          "min STP(trained)-OT " + fmt(lower) + ", min STP(random)-STP(trained) " + fmt(upper)};
}

// 2 -------------------------------------------------------------------------
Outcome lapsum() {
  Stream rng = Stream::derive(102, "acceptance/lapsum");
  double worst_round = 0;
  for (std::size_t n : {1u, 2u, 10u, 1000u}) {
    std::vector<double> wide(n), unit(n);
    for (auto& v : wide) v = (rng.uniform() < 0.5 ? -1 : 1) * std::pow(10.0, rng.uniform(-6, 6));
    for (auto& v : unit) v = (rng.uniform() < 0.5 ? -1 : 1) * std::pow(10.0, rng.uniform(-6, 0));
    // Scales on the widest values stay where the representation error of t is negligible.
    for (const auto& [x, alpha] : {std::pair{wide, 10.0}, std::pair{wide, 1e3},
                                   std::pair{wide, 1e5}, std::pair{unit, 1e-4}}) {
      const LapSumCdf c(x, alpha);
      for (int k = 1; k <= 99; ++k) {
        const double q = k / 100.0;
        worst_round = std::max(worst_round, std::abs(c.cdf(c.inverse_cdf(q)) - q));
      }
    }
  }
  double worst_ds = 0, worst_hard = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    const Eigen::MatrixXd smooth = soft_permutation(x, std::exp(rng.uniform(-4, 1))).matrix;
    worst_ds = std::max({worst_ds, (smooth.rowwise().sum().array() - 1).abs().maxCoeff(),
                         (smooth.colwise().sum().array() - 1).abs().maxCoeff()});
    if (n < 2) continue;
    // Distinct scores for the hard limit: a shuffled grid with jitter.
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) + rng.uniform(-0.25, 0.25);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(x[i], x[rng.below(i + 1)]);
    const double grid_spread =
        *std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t l = 0; l < n; ++l) want(l, order[l]) = 1;
    worst_hard = std::max(worst_hard,
                          (soft_permutation(x, 1e-4 * grid_spread).matrix - want).cwiseAbs().maxCoeff());
  }
  return {std::min({1e-10 - worst_round, 1e-9 - worst_ds, 1e-6 - worst_hard}),
          "round trip " + fmt(worst_round) + ", stochastic " + fmt(worst_ds) + ", hard " +
              fmt(worst_hard)};
}

// 3 -------------------------------------------------------------------------
double frozen_loss(const Slicer& f0, const Eigen::VectorXd& params, const Points& x,
                   const Points& y, const Eigen::MatrixXd& c, double ax, double ay) {
  Slicer f = f0;
  f.set_parameters(params);
  const Eigen::Index n = x.rows(), m = y.rows();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, m);
  for (const auto& e : nw_corner(n, m).entries) t(e.i, e.j) = e.mass;
  const Eigen::MatrixXd sx = soft_permutation(as_vec(f.eval(x)), ax).matrix;
  const Eigen::MatrixXd sy = soft_permutation(as_vec(f.eval(y)), ay).matrix;
  const Eigen::MatrixXd px = hard_permutation(as_vec(f0.eval(x)));
  const Eigen::MatrixXd py = hard_permutation(as_vec(f0.eval(y)));
  return (0.5 * (sx.transpose() * t * py + px.transpose() * t * sy)).cwiseProduct(c).sum();
}

Outcome gradients() {
  Stream rng = Stream::derive(103, "acceptance/gradients");
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Points x = oracle::random_points(rng, n, 2), y = oracle::random_points(rng, m, 2);
    const Eigen::MatrixXd c = oracle::cost(x, y, 2);
    const Slicer f = trial % 2 ? Slicer::random_linear(2, rng()) : Slicer::random_mlp(2, {5, 5}, rng());
    TwoBranchOptions opt;
    opt.alpha_x = rng.uniform(0.05, 0.5);
    opt.alpha_y = rng.uniform(0.05, 0.5);
    const TwoBranchResult r = two_branch_on_points(f, x, y, c, opt);
    const Eigen::VectorXd fd = oracle::central_diff(
        [&](const Eigen::VectorXd& p) { return frozen_loss(f, p, x, y, c, opt.alpha_x, opt.alpha_y); },
        f.parameters(), 1e-5);
    worst = std::max(worst, oracle::rel_error(r.gradient, fd));
  }
  return {1e-4 - worst, "max relative error " + fmt(worst) + " over 50 instances"};
}

// 4 -------------------------------------------------------------------------
// Points whose within-set differences all keep |cos| >= 0.25 with theta.
Points separated(Stream& rng, Eigen::Index n, const Eigen::Vector2d& theta) {
  for (;;) {
    Points x(n, 2);
    for (auto& v : x.reshaped()) v = rng.uniform();
    bool ok = true;
    for (Eigen::Index i = 0; i < n && ok; ++i)
      for (Eigen::Index j = i + 1; j < n && ok; ++j) {
        const Eigen::Vector2d d = (x.row(i) - x.row(j)).transpose();
        ok = std::abs(theta.dot(d)) >= 0.25 * d.norm();
      }
    if (ok) return x;
  }
}

Outcome j_eta() {
  struct Case {
    DiscreteMeasure mu, nu;
    Slicer f;
  };
  std::vector<Case> cases;
  const auto [cx, cy] = crossed();
  cases.push_back({cx, cy, Slicer::linear(Eigen::Vector2d(1, 0))});
  for (std::uint64_t k = 0; k < 10; ++k) {
    Stream rng = Stream::derive(104, "acceptance/j-eta", {k});
    const double a = 2 * std::numbers::pi * rng.uniform();
    const Eigen::Vector2d theta(std::cos(a), std::sin(a));
    cases.push_back({DiscreteMeasure::uniform(separated(rng, 5, theta)),
                     DiscreteMeasure::uniform(separated(rng, 5, theta)), Slicer::linear(theta)});
  }
  double margin = std::numeric_limits<double>::infinity();
  std::string worst;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const double stp = lift_plan(cases[k].f, cases[k].mu, cases[k].nu, 2).cost;
    double prev_gap = 0, prev_se = 0;
    bool first = true;
    for (double eta : {0.5, 0.1, 0.02}) {
      PerturbationConfig cfg;
      cfg.eta = eta;
      cfg.num_samples = 2000;
      cfg.seed = 1000 + k;
      const JEtaEstimate e = estimate_J_eta(cases[k].f, cases[k].mu, cases[k].nu, cfg, 2);
      const double gap = std::abs(e.mean - stp);
      if (!first) {
        const double m = prev_gap + 2 * std::hypot(prev_se, e.std_error) - gap;
        if (m < margin) {
          margin = m;
          worst = "pair " + std::to_string(k) + " eta " + fmt(eta) + " gap " + fmt(gap);
        }
      }
      first = false;
      prev_gap = gap;
      prev_se = e.std_error;
    }
    const double m = 3 * prev_se + 1e-12 - prev_gap;
    if (m < margin) {
      margin = m;
      worst = "pair " + std::to_string(k) + " final gap " + fmt(prev_gap) + " vs 3 SE " +
              fmt(3 * prev_se);
    }
  }
  return {margin, "11 pairs; tightest: " + worst};
}

// 5 -------------------------------------------------------------------------
Outcome landscape() {
  const auto [mu, nu] = crossed();
  double worst_tv = 0;
  bool finite = true;
  for (double alpha : {0.05, 0.2, 1.0}) {
    std::vector<double> values(360);
    for (int k = 0; k < 360; ++k) {
      const double a = 2 * std::numbers::pi * k / 360;
      values[k] = two_branch_plan(Slicer::linear(Eigen::Vector2d(std::cos(a), std::sin(a))), mu,
                                  nu, alpha, 2)
                      .loss;
      finite = finite && std::isfinite(values[k]);
    }
    double tv = 0;
    for (int k = 0; k < 360; ++k) tv += std::abs(values[(k + 1) % 360] - values[k]);
    worst_tv = std::max(worst_tv, tv);
  }
  double hard_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 360; ++k) {
    const double a = 2 * std::numbers::pi * k / 360;
    hard_min = std::min(
        hard_min, lift_plan(Slicer::linear(Eigen::Vector2d(std::cos(a), std::sin(a))), mu, nu, 2).cost);
  }
  const double brute = oracle::brute_force_assignment(oracle::cost(mu.points(), nu.points(), 2));
  // Total variation bound: the costs lie in [0, 2], so 10 allows a few swings.
  const double margin = finite ? std::min({10.0 - worst_tv, 1e-9 - std::abs(hard_min - 1.0),
                                           1e-9 - std::abs(brute - 1.0)})
                               : -1.0;
  return {margin, "max TV " + fmt(worst_tv) + ", hard min " + fmt(hard_min) + ", brute force " +
                      fmt(brute)};
}

// 6 -------------------------------------------------------------------------
Outcome minibatch() {
  MinibatchStudyConfig cfg;  // rings, n = 1024, B = 64, tuned schedules
  cfg.export_plans = false;
  const StudyReport r = run_minibatch_study(cfg);
  double full = 0, batch = 0, ot = 0;
  for (const auto& b : r.batches) {
    if (b.batch == cfg.n) full = b.final_cost;
    if (b.batch == 64) batch = b.final_cost;
    ot = b.ot_cost;
  }
  return {std::min({1.10 * full - batch, 1.15 * ot - full, 1.15 * ot - batch}),
          "OT " + fmt(ot) + ", full " + fmt(full) + " (" + fmt(full / ot) + "x OT), B=64 " +
              fmt(batch) + " (" + fmt(batch / full) + "x full)"};
}

// 7 -------------------------------------------------------------------------
Outcome incomplete() {
  Stream rng = Stream::derive(107, "acceptance/incomplete");
  const Points x = oracle::random_points(rng, 64, 2);
  const Points y = oracle::random_points(rng, 64, 2, 1.5);
  const Slicer f = Slicer::random_mlp(2, {8}, 7);
  const double range = oracle::cost(x, y, 2).maxCoeff();
  const std::size_t B = 8, K = 20;
  const double delta = 0.1;
  const double reference = incomplete_estimator(f, x, y, B, 20000, 1, 2).mean;
  const double radius = range * std::sqrt(std::log(2 / delta) / (2.0 * K));
  int covered = 0;
  for (std::uint64_t t = 0; t < 200; ++t)
    covered += std::abs(incomplete_estimator(f, x, y, B, K, 100 + t, 2).mean - reference) <= radius;
  const double coverage = covered / 200.0;

  auto variance = [&](std::size_t k) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 500; ++r)
      v.push_back(incomplete_estimator(f, x, y, B, k, 10000 * k + r, 2).mean);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0;
    for (double a : v) s += (a - mean) * (a - mean);
    return s / (v.size() - 1);
  };
  const double ratio = variance(10) / variance(40);
  return {std::min({coverage - 0.9, ratio - 2.5, 6.0 - ratio}),
          "coverage " + fmt(coverage) + ", Var(K=10)/Var(K=40) " + fmt(ratio)};
}

// 8 -------------------------------------------------------------------------
Outcome drift() {
  DriftStudyConfig cfg;  // 7 tasks, 5 runs, tuned schedule
  const StudyReport r = run_drift_study(cfg);
  int below_random = 0, within_ot = 0, compared = 0;
  for (const auto& t : r.tasks) {
    const auto pre = t.init_pretrained_mean();
    if (!pre) continue;
    ++compared;
    below_random += *pre < t.init_random_mean();
    within_ot += *pre <= 1.5 * t.ot_cost;
  }
  // Task 1 has no predecessor; the fractions apply to the tasks that do.
  const double need_below = 6.0 / 7.0 * compared, need_ot = 5.0 / 7.0 * compared;
  return {std::min(below_random - need_below, within_ot - need_ot),
          "pretrained < random in " + std::to_string(below_random) + "/" +
              std::to_string(compared) + ", <= 1.5 OT in " + std::to_string(within_ot) + "/" +
              std::to_string(compared)};
}

// 9 -------------------------------------------------------------------------
Outcome amortized() {
  std::vector<double> per_pair, amort, random;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    AmortizedStudyConfig cfg;
    cfg.seed = seed;
    const StudyReport r = run_amortized_study(cfg);
    for (const auto& row : r.correlations) {
      if (!row.test) return {-1.0, "undefined correlation for " + row.slicer};
      (row.slicer == "per-pair" ? per_pair : row.slicer == "amortized" ? amort : random)
          .push_back(*row.test);
    }
  }
  const double p = median(per_pair), a = median(amort), q = median(random);
  return {std::min(p - a, a - q) + 1e-9,
          "median held-out Pearson: per-pair " + fmt(p) + ", amortized " + fmt(a) + ", random " + fmt(q)};
}

// 10 ------------------------------------------------------------------------
Outcome lemmas() {
  Stream rng = Stream::derive(110, "acceptance/lemmas");
  const double exponents[] = {1.0, 1.5, 2.0, 3.0};
  double lip = std::numeric_limits<double>::infinity(), sup = lip, tools = lip;
  for (int k = 0; k < 500; ++k) {
    const double p = exponents[rng.below(4)];
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(7));
    const auto k1 = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2));
    const auto k2 = DiscreteMeasure::uniform(oracle::random_points(rng, n, 2, 1.5));
    // Pushforwards contract by the Lipschitz constant.
    const Slicer f = k % 2 ? Slicer::linear(rng.uniform(0.2, 3) * Eigen::Vector2d(rng.normal(), rng.normal()))
                           : Slicer::random_mlp(2, {2 + static_cast<int>(rng.below(7))}, rng());
    const double lhs = std::pow(oracle::sorted_cost_1d(as_vec(f.eval(k1.points())),
                                                       as_vec(f.eval(k2.points())), p), 1 / p);
    const double w = std::pow(oracle::brute_force_assignment(oracle::cost(k1.points(), k2.points(), p)), 1 / p);
    lip = std::min(lip, f.lipschitz_bound() * w - lhs);
    // Two slicers on one measure move the pushforward by at most their sup gap.
    const Slicer g = Slicer::random_mlp(2, {4}, rng());
    const Eigen::VectorXd fa = f.eval(k1.points()), ga = g.eval(k1.points());
    sup = std::min(sup, (fa - ga).cwiseAbs().maxCoeff() -
                            std::pow(oracle::sorted_cost_1d(as_vec(fa), as_vec(ga), p), 1 / p));
    // Optimal 1D couplings move by at most their marginals.
    auto line = [&] { return as_vec(oracle::random_points(rng, n, 1).col(0)); };
    auto m1 = line(), m2 = line(), n1 = line(), n2 = line();
    for (auto* v : {&m1, &m2, &n1, &n2}) std::sort(v->begin(), v->end());
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        c(i, j) = std::pow(std::abs(m1[i] - m2[j]), p) + std::pow(std::abs(n1[i] - n2[j]), p);
    tools = std::min(tools, oracle::sorted_cost_1d(m1, m2, p) + oracle::sorted_cost_1d(n1, n2, p) -
                                oracle::brute_force_assignment(c));
  }
  return {std::min({lip, sup, tools}) + 1e-9,
          "min slack: lipschitz " + fmt(lip) + ", sup " + fmt(sup) + ", coupling " + fmt(tools)};
}

// 11 ------------------------------------------------------------------------
Outcome stability() {
  const double want = 2 * std::sqrt(2.0) * (0.1 + 1.0 * std::sqrt(4.0)) / (std::log(2.0) - 0.1);
  const double got = stability_constant(1.0, 0.5, 2, 0.1, 1.0, 2);
  bool infeasible = false, domain = false;
  try {
    stability_constant(0.1, 0.5, 2, 0.1, 1.0, 2);
  } catch (const InfeasibleError&) {
    infeasible = true;
  }
  try {
    stability_constant(1.0, 1.0, 2, 0.1, 1.0, 2);
  } catch (const ParameterError&) {
    domain = true;
  }
  const double margin = (infeasible && domain) ? 1e-6 - std::abs(got - want) : -1.0;
  return {margin, "C = " + fmt(got) + " (hand " + fmt(want) + "), infeasible " +
                      (infeasible ? "raised" : "missing") + ", domain " + (domain ? "raised" : "missing")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "sandwich", 60, sandwich},
      {2, "lapsum", 30, lapsum},
      {3, "gradient-fidelity", 30, gradients},
      {4, "smoothed-limit", 60, j_eta},
      {5, "crossed-landscape", 30, landscape},
      {6, "minibatch-fidelity", 600, minibatch},
      {7, "incomplete-estimator", 120, incomplete},
      {8, "drift-transfer", 900, drift},
      {9, "amortized-ordering", 900, amortized},
      {10, "lemma-suite", 60, lemmas},
      {11, "stability-constant", 1, stability},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {-1.0, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.margin >= 0.0 && in_time;
    failures += !pass;
    std::printf("[%s] %2d %-22s margin=%-12s (%.1fs of %.0fs)  %s\n", pass ? "PASS" : "FAIL", c.id,
                c.name, fmt(o.margin).c_str(), secs, c.budget_seconds,
                (o.detail + (in_time ? "" : "; over time budget")).c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
