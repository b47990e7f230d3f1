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

#include "minstp/stp.h"

#include <cmath>

#include "minstp/error.h"
#include "minstp/lapsum.h"
#include "minstp/parallel.h"

namespace minstp {
namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void require_uniform(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (!mu.is_uniform() || !nu.is_uniform())
    throw UnsupportedError("sliced plans are only lifted for uniform weights");
  if (mu.dim() != nu.dim()) throw DimensionError("measures differ in dimension");
}

}  // namespace

NwCornerPlan nw_corner(Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw ParameterError("nw_corner needs N, M >= 1");
  NwCornerPlan plan{rows, cols, {}};
  plan.entries.reserve(static_cast<std::size_t>(rows + cols - 1));
  // Integer units: each row supplies `cols`, each column demands `rows`.
  const double unit = 1.0 / (static_cast<double>(rows) * static_cast<double>(cols));
  Eigen::Index i = 0, j = 0;
  Eigen::Index supply = cols, demand = rows;
  while (i < rows && j < cols) {
    const Eigen::Index moved = std::min(supply, demand);
    plan.entries.push_back({i, j, static_cast<double>(moved) * unit});
    supply -= moved;
    demand -= moved;
    if (supply == 0) {
      ++i;
      supply = cols;
    }
    if (demand == 0) {
      ++j;
      demand = rows;
    }
  }
  return plan;
}

double stp_value(const StpResult& result) { return pth_root(result.cost, result.p); }

double lift_cost(std::span<const double> ux, std::span<const double> uy,
                 const Eigen::MatrixXd& cost) {
  const auto n = static_cast<Eigen::Index>(ux.size());
  const auto m = static_cast<Eigen::Index>(uy.size());
  if (cost.rows() != n || cost.cols() != m)
    throw DimensionError("lift_cost: cost matrix shape mismatch");
  const auto ox = hard_order(ux);
  const auto oy = hard_order(uy);
  double total = 0.0;
  if (n == m) {
    for (Eigen::Index k = 0; k < n; ++k)
      total += cost(static_cast<Eigen::Index>(ox[k]), static_cast<Eigen::Index>(oy[k]));
    return total / static_cast<double>(n);
  }
  for (const NwEntry& e : nw_corner(n, m).entries)
    total += e.mass * cost(static_cast<Eigen::Index>(ox[e.i]),
                           static_cast<Eigen::Index>(oy[e.j]));
  return total;
}

TransportPlan lift_projections(std::span<const double> ux,
                               std::span<const double> uy) {
  const auto n = static_cast<Eigen::Index>(ux.size());
  const auto m = static_cast<Eigen::Index>(uy.size());
  const auto ox = hard_order(ux);
  const auto oy = hard_order(uy);
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n, m);
  for (const NwEntry& e : nw_corner(n, m).entries)
    gamma(static_cast<Eigen::Index>(ox[e.i]), static_cast<Eigen::Index>(oy[e.j])) +=
        e.mass;
  return TransportPlan(std::move(gamma),
                       Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)),
                       Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
}

StpResult lift_plan(const Slicer& f, const DiscreteMeasure& mu,
                    const DiscreteMeasure& nu, double p) {
  require_uniform(mu, nu);
  const Eigen::VectorXd ux = f.eval(mu.points());
  const Eigen::VectorXd uy = f.eval(nu.points());
  const Eigen::MatrixXd c = pairwise_cost(mu.points(), nu.points(), p);
  StpResult r;
  r.plan = lift_projections(as_span(ux), as_span(uy));
  r.cost = lift_cost(as_span(ux), as_span(uy), c);
  r.p = p;
  r.value = stp_value(r);
  r.slicer_id = slicer_fingerprint(f);
  return r;
}

TwoBranchResult two_branch_on_points(const Slicer& f, const Points& x,
                                     const Points& y, const Eigen::MatrixXd& cost,
                                     const TwoBranchOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  if (cost.rows() != n || cost.cols() != m)
    throw DimensionError("two_branch: cost matrix shape mismatch");
  if (!(options.alpha_x > 0.0) || !(options.alpha_y > 0.0))
    throw ParameterError("two_branch: alpha must be > 0");

  const Eigen::VectorXd ux = f.eval(x);
  const Eigen::VectorXd uy = f.eval(y);
  const auto ox = hard_order(as_span(ux));
  const auto oy = hard_order(as_span(uy));
  const SoftPermutation px = soft_permutation(as_span(ux), options.alpha_x);
  const SoftPermutation py = soft_permutation(as_span(uy), options.alpha_y);
  const NwCornerPlan t = nw_corner(n, m);

  // gx(l, i) = sum_m T(l, m) C(i, oy[m]); the branch-1 loss is <P~x, gx>.
  // gy(m, j) = sum_l T(l, m) C(ox[l], j); the branch-2 loss is <P~y, gy>.
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd gy = Eigen::MatrixXd::Zero(m, m);
  for (const NwEntry& e : t.entries) {
    gx.row(e.i) += e.mass * cost.col(static_cast<Eigen::Index>(oy[e.j])).transpose();
    gy.row(e.j) += e.mass * cost.row(static_cast<Eigen::Index>(ox[e.i]));
  }

  TwoBranchResult out;
  out.loss = 0.5 * ((px.matrix.array() * gx.array()).sum() +
                    (py.matrix.array() * gy.array()).sum());

  if (options.want_plan) {
    out.plan = Eigen::MatrixXd::Zero(n, m);
    for (const NwEntry& e : t.entries) {
      // Branch 1: soft row distribution of rank e.i, hard column oy[e.j].
      out.plan.col(static_cast<Eigen::Index>(oy[e.j])) +=
          0.5 * e.mass * px.matrix.row(e.i).transpose();
      // Branch 2: hard row ox[e.i], soft column distribution of rank e.j.
      out.plan.row(static_cast<Eigen::Index>(ox[e.i])) +=
          0.5 * e.mass * py.matrix.row(e.j);
    }
  }

  if (options.want_gradient) {
    const std::vector<double> dux =
        soft_permutation_vjp(as_span(ux), px, Eigen::MatrixXd(0.5 * gx));
    const std::vector<double> duy =
        soft_permutation_vjp(as_span(uy), py, Eigen::MatrixXd(0.5 * gy));
    out.gradient =
        f.eval_vjp(x, Eigen::Map<const Eigen::VectorXd>(dux.data(), n)) +
        f.eval_vjp(y, Eigen::Map<const Eigen::VectorXd>(duy.data(), m));
  }
  return out;
}

TwoBranchResult two_branch_plan(const Slicer& f, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, double alpha, double p) {
  require_uniform(mu, nu);
  const Eigen::MatrixXd c = pairwise_cost(mu.points(), nu.points(), p);
  TwoBranchOptions options;
  options.alpha_x = alpha;
  options.alpha_y = alpha;
  options.want_plan = true;
  return two_branch_on_points(f, mu.points(), nu.points(), c, options);
}

JEtaEstimate estimate_J_eta(const Slicer& f, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const PerturbationConfig& cfg,
                            double p, std::size_t workers) {
  require_uniform(mu, nu);
  if (cfg.num_samples < 1) throw ConfigError("num_samples must be >= 1", "num_samples");
  const Eigen::MatrixXd factor = perturbation_factor(cfg, mu.dim());
  const Eigen::MatrixXd c = pairwise_cost(mu.points(), nu.points(), p);
  const Eigen::VectorXd fx = f.eval(mu.points());
  const Eigen::VectorXd fy = f.eval(nu.points());

  JEtaEstimate est;
  est.samples.assign(cfg.num_samples, 0.0);
  parallel_for(cfg.num_samples, workers, [&](std::size_t s) {
    Stream rng = Stream::derive(cfg.seed, "perturbation", {s});
    const Eigen::VectorXd xi = sample_perturbation(factor, cfg.eta, rng);
    const Eigen::VectorXd gx = fx + mu.points() * xi;
    const Eigen::VectorXd gy = fy + nu.points() * xi;
    est.samples[s] = lift_cost(as_span(gx), as_span(gy), c);
  });

  // Shifted accumulation: identical samples give an exact mean and zero error.
  const double anchor = est.samples.front();
  double sum = 0.0, sq = 0.0;
  for (double v : est.samples) {
    sum += v - anchor;
    sq += (v - anchor) * (v - anchor);
  }
  const double count = static_cast<double>(est.samples.size());
  const double shift = sum / count;
  est.mean = anchor + shift;
  if (est.samples.size() > 1) {
    const double var = std::max(0.0, (sq - count * shift * shift) / (count - 1.0));
    est.std_error = std::sqrt(var / count);
  }
  return est;
}

}  // namespace minstp
