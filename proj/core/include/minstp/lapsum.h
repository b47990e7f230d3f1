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

#ifndef MINSTP_LAPSUM_H_
#define MINSTP_LAPSUM_H_

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace minstp {

// Laplace(0, alpha) CDF and density.
double laplace_cdf(double u, double alpha) noexcept;
double laplace_pdf(double u, double alpha) noexcept;

// Smoothed empirical CDF F(t) = (1/n) sum_i Phi_alpha(t - x_i) of a sample,
// with O(log n) evaluation and closed-form inversion.
//
// Between consecutive sorted values x_(s-1) <= t < x_(s),
//
//   F(t) = s/n - L_{s-1}/(2n) exp(-(t - x_(s-1))/alpha)
//              + R_s/(2n)   exp(-(x_(s) - t)/alpha),
//
// where L_k = sum_{i<=k} exp((x_(i) - x_(k))/alpha) and
// R_k = sum_{i>=k} exp((x_(k) - x_(i))/alpha). Both sums lie in [1, n], so
// nothing overflows however small alpha is relative to the spread.
class LapSumCdf {
 public:
  // Throws ParameterError if alpha <= 0, values is empty or non-finite.
  LapSumCdf(std::span<const double> values, double alpha);

  double cdf(double t) const;
  // Unique t with F(t) = q. Throws ParameterError unless 0 < q < 1.
  double inverse_cdf(double q) const;

  double alpha() const noexcept { return alpha_; }
  std::size_t size() const noexcept { return sorted_.size(); }
  const std::vector<double>& sorted() const noexcept { return sorted_; }
  // order()[k] is the input index of the k-th smallest value (stable).
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  double segment_value(std::size_t s, double t) const;

  double alpha_;
  std::vector<double> sorted_;
  std::vector<std::size_t> order_;
  std::vector<double> left_;   // L_k
  std::vector<double> right_;  // R_k
  std::vector<double> knots_;  // F(x_(k))
};

// r_i = n F(x_i). Strictly order preserving, in (0, n).
std::vector<double> soft_rank(std::span<const double> values, double alpha);

// mask_i = Phi_alpha(r_i - b) with b = F^{-1}((n - k)/n), so the mask sums to
// k. Requires 1 <= k <= n - 1.
std::vector<double> soft_topk_mask(std::span<const double> scores,
                                   std::size_t k, double alpha);

// Doubly stochastic relaxation of the ascending sort permutation. Row l is
// rank l (0 = smallest), column i is input element i, so for hard inputs
// P(l, i) = 1 iff element i is the l-th smallest.
//
// Built by differencing cumulative soft masks padded with an all-zero and an
// all-one row. The cumulative mask for the l smallest elements is
// Phi_alpha(t_l - r_i) with t_l = F^{-1}(l/n); it equals one minus the soft
// top-(n - l) mask, so this is the top-k construction read in ascending order.
struct SoftPermutation {
  Eigen::MatrixXd matrix;
  double alpha = 0.0;
  std::vector<double> thresholds;  // t_1 .. t_{n-1}
};

SoftPermutation soft_permutation(std::span<const double> scores, double alpha);

// Gradient of sum_{l,i} upstream(l, i) * P(l, i) with respect to the scores.
// Differentiates through each threshold by the implicit function theorem:
// dt_l / dr_k = phi(t_l - r_k) / sum_j phi(t_l - r_j).
std::vector<double> soft_permutation_vjp(std::span<const double> scores,
                                         double alpha,
                                         const Eigen::MatrixXd& upstream);

// Same, reusing an already computed permutation for these scores.
std::vector<double> soft_permutation_vjp(std::span<const double> scores,
                                         const SoftPermutation& perm,
                                         const Eigen::MatrixXd& upstream);

// Stable ascending argsort: result[l] = index of the l-th smallest value.
std::vector<std::size_t> hard_order(std::span<const double> values);

// 0/1 matrix of hard_order in the SoftPermutation layout.
Eigen::MatrixXd hard_permutation(std::span<const double> values);

}  // namespace minstp

#endif  // MINSTP_LAPSUM_H_
