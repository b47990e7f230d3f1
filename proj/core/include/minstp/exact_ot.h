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

#ifndef MINSTP_EXACT_OT_H_
#define MINSTP_EXACT_OT_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minstp/measures.h"

namespace minstp {

// Coupling matrix with prescribed marginals a (rows) and b (columns).
class TransportPlan {
 public:
  TransportPlan() = default;
  TransportPlan(Eigen::MatrixXd entries, Eigen::VectorXd a, Eigen::VectorXd b);

  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  const Eigen::VectorXd& source_weights() const noexcept { return a_; }
  const Eigen::VectorXd& target_weights() const noexcept { return b_; }
  Eigen::Index rows() const noexcept { return entries_.rows(); }
  Eigen::Index cols() const noexcept { return entries_.cols(); }

  // Largest deviation of any row/column sum from its marginal.
  double marginal_error() const;
  bool is_feasible(double tol = 1e-9) const;

  // <plan, cost>.
  double cost(const Eigen::MatrixXd& cost) const;

 private:
  Eigen::MatrixXd entries_;
  Eigen::VectorXd a_;
  Eigen::VectorXd b_;
};

struct OtResult {
  TransportPlan plan;
  double cost = 0.0;   // sum_ij plan_ij * C_ij
  double value = 0.0;  // cost^(1/p)
  double p = 2.0;
};

double pth_root(double cost, double p);

// Exact OT on the line: north-west corner coupling of the atoms sorted by
// value (stable, so ties keep their input order). Optimal for |x-y|^p, p >= 1.
OtResult ot_1d(const DiscreteMeasure& u, const DiscreteMeasure& v, double p);

// Same, on raw values and weights; returns the cost only.
double ot_1d_cost(std::span<const double> x, std::span<const double> wx,
                  std::span<const double> y, std::span<const double> wy,
                  double p);

// Uniform-weight shortcut: sort both, pair by rank where n == m, otherwise
// run the north-west corner on 1/n, 1/m masses.
double ot_1d_uniform_cost(std::span<const double> x, std::span<const double> y,
                          double p);

// One piece of the quantile coupling: on the level interval [lo, hi) the
// quantile functions are constant, equal to atom `i` of the first measure and
// atom `j` of the second.
struct QuantilePiece {
  double lo;
  double hi;
  Eigen::Index i;
  Eigen::Index j;
};
std::vector<QuantilePiece> quantile_pieces(std::span<const double> x,
                                           std::span<const double> wx,
                                           std::span<const double> y,
                                           std::span<const double> wy);

// Minimum-cost perfect matching on a square matrix. Returns the column
// assigned to each row. Shortest augmenting path with vertex potentials.
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost);

// Exact OT for uniform measures of equal size; the plan is a permutation
// scaled by 1/n. Throws UnsupportedError for anything else.
OtResult ot_assignment(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       double p);

// Product-moment correlation. Throws UndefinedError on zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Nonzero entries as "i,j,mass" lines.
std::string plan_to_csv(const TransportPlan& plan);
// {"rows": n, "cols": m, "entries": [[i, j, mass], ...]}; nonzero entries only.
std::string plan_to_json(const TransportPlan& plan);

}  // namespace minstp

#endif  // MINSTP_EXACT_OT_H_
