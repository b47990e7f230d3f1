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

#ifndef MINSTP_STP_H_
#define MINSTP_STP_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "minstp/exact_ot.h"
#include "minstp/measures.h"
#include "minstp/slicer.h"

namespace minstp {

// Staircase coupling of uniform(N) and uniform(M) in sorted-rank coordinates.
struct NwEntry {
  Eigen::Index i;
  Eigen::Index j;
  double mass;
};

struct NwCornerPlan {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<NwEntry> entries;  // ordered by (i, j); N + M - gcd(N, M) entries
};

NwCornerPlan nw_corner(Eigen::Index rows, Eigen::Index cols);

// Sliced transport plan of a slicer, in the original point order.
struct StpResult {
  TransportPlan plan;
  double cost = 0.0;   // sum_ij gamma_ij c(x_i, y_j)^p
  double value = 0.0;  // cost^(1/p)
  double p = 2.0;
  std::uint64_t slicer_id = 0;
};

double stp_value(const StpResult& result);

// Cost of the plan obtained by sorting both projections (stable, ties by
// index) and lifting the north-west corner coupling. `cost` is N x M.
double lift_cost(std::span<const double> ux, std::span<const double> uy,
                 const Eigen::MatrixXd& cost);
TransportPlan lift_projections(std::span<const double> ux,
                               std::span<const double> uy);

// Hard path. Requires uniform weights (UnsupportedError otherwise).
StpResult lift_plan(const Slicer& f, const DiscreteMeasure& mu,
                    const DiscreteMeasure& nu, double p);

// gamma_1 = P~x^T T Py, gamma_2 = Px^T T P~y, plan = (gamma_1 + gamma_2)/2.
// Only the soft factor of each branch is differentiated.
struct TwoBranchResult {
  Eigen::MatrixXd plan;       // N x M; empty unless requested
  double loss = 0.0;          // <plan, C>
  Eigen::VectorXd gradient;   // d loss / d slicer parameters
};

struct TwoBranchOptions {
  double alpha_x = 0.1;
  double alpha_y = 0.1;
  bool want_plan = false;
  bool want_gradient = true;
};

// Batch form. `cost` is |x| x |y| with entries c(x_i, y_j)^p.
TwoBranchResult two_branch_on_points(const Slicer& f, const Points& x,
                                     const Points& y, const Eigen::MatrixXd& cost,
                                     const TwoBranchOptions& options);

TwoBranchResult two_branch_plan(const Slicer& f, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, double alpha, double p);

// Monte Carlo estimate of the smoothed objective J_eta: mean hard-lift cost
// under g = f + <xi, .>, xi ~ Lap_d(eta^2 Sigma). Sample s always uses the
// stream derived from (cfg.seed, s), so results do not depend on `workers`.
struct JEtaEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> samples;
};

JEtaEstimate estimate_J_eta(const Slicer& f, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const PerturbationConfig& cfg,
                            double p, std::size_t workers = 1);

}  // namespace minstp

#endif  // MINSTP_STP_H_
