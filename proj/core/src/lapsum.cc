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

#include "minstp/lapsum.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "minstp/error.h"

namespace minstp {
namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ParameterError("LapSum smoothing alpha must be a positive finite number");
}

}  // namespace

double laplace_cdf(double u, double alpha) noexcept {
  return u < 0.0 ? 0.5 * std::exp(u / alpha) : 1.0 - 0.5 * std::exp(-u / alpha);
}

double laplace_pdf(double u, double alpha) noexcept {
  return 0.5 / alpha * std::exp(-std::abs(u) / alpha);
}

std::vector<std::size_t> hard_order(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  return idx;
}

Eigen::MatrixXd hard_permutation(std::span<const double> values) {
  const auto order = hard_order(values);
  const auto n = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index l = 0; l < n; ++l)
    p(l, static_cast<Eigen::Index>(order[l])) = 1.0;
  return p;
}

LapSumCdf::LapSumCdf(std::span<const double> values, double alpha)
    : alpha_(alpha) {
  check_alpha(alpha);
  if (values.empty()) throw ParameterError("LapSum needs at least one value");
  for (double v : values)
    if (!std::isfinite(v)) throw ParameterError("LapSum values must be finite");
  const std::size_t n = values.size();
  order_ = hard_order(values);
  sorted_.resize(n);
  for (std::size_t k = 0; k < n; ++k) sorted_[k] = values[order_[k]];

  left_.assign(n, 1.0);
  for (std::size_t k = 1; k < n; ++k)
    left_[k] = 1.0 + left_[k - 1] * std::exp((sorted_[k - 1] - sorted_[k]) / alpha_);
  right_.assign(n, 1.0);
  for (std::size_t k = n - 1; k-- > 0;)
    right_[k] = 1.0 + right_[k + 1] * std::exp((sorted_[k] - sorted_[k + 1]) / alpha_);

  knots_.resize(n);
  for (std::size_t k = 0; k < n; ++k) knots_[k] = cdf(sorted_[k]);
}

double LapSumCdf::segment_value(std::size_t s, double t) const {
  const std::size_t n = sorted_.size();
  const double two_n = 2.0 * static_cast<double>(n);
  if (s == 0) return right_[0] / two_n * std::exp((t - sorted_[0]) / alpha_);
  if (s == n)
    return 1.0 - left_[n - 1] / two_n * std::exp(-(t - sorted_[n - 1]) / alpha_);
  return static_cast<double>(s) / static_cast<double>(n) -
         left_[s - 1] / two_n * std::exp(-(t - sorted_[s - 1]) / alpha_) +
         right_[s] / two_n * std::exp(-(sorted_[s] - t) / alpha_);
}

double LapSumCdf::cdf(double t) const {
  // s = #{x_(k) <= t}
  const auto s = static_cast<std::size_t>(
      std::upper_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin());
  return segment_value(s, t);
}

double LapSumCdf::inverse_cdf(double q) const {
  if (!(q > 0.0 && q < 1.0))
    throw ParameterError("inverse_cdf needs 0 < q < 1, got " + std::to_string(q));
  const std::size_t n = sorted_.size();
  const double nd = static_cast<double>(n);
  const auto s = static_cast<std::size_t>(
      std::upper_bound(knots_.begin(), knots_.end(), q) - knots_.begin());
  if (s == 0) return sorted_[0] + alpha_ * std::log(2.0 * nd * q / right_[0]);
  if (s == n)
    return sorted_[n - 1] - alpha_ * std::log(2.0 * nd * (1.0 - q) / left_[n - 1]);

  // Interior segment [x_(s-1), x_(s)). With v = exp(-(t - x_(s-1))/alpha) and
  // w = exp(-(x_(s) - t)/alpha) = E / v, F(t) = q reads A v - B w = c, a
  // quadratic in v (or in w). Solve for whichever unknown the sign of c makes
  // cancellation-free.
  const double lo = sorted_[s - 1];
  const double hi = sorted_[s];
  const double a = left_[s - 1];
  const double b = right_[s];
  const double gap = hi - lo;
  const double c = 2.0 * (static_cast<double>(s) - nd * q);
  const double e = std::exp(-gap / alpha_);
  double t;
  if (c > 0.0) {
    const double v = (c + std::sqrt(c * c + 4.0 * a * b * e)) / (2.0 * a);
    t = lo - alpha_ * std::log(v);
  } else if (c < 0.0) {
    const double w = (-c + std::sqrt(c * c + 4.0 * a * b * e)) / (2.0 * b);
    t = hi + alpha_ * std::log(w);
  } else {
    // v * w = E and A v = B w.
    t = lo + 0.5 * (gap - alpha_ * std::log(b / a));
  }
  return std::clamp(t, lo, hi);
}

std::vector<double> soft_rank(std::span<const double> values, double alpha) {
  const LapSumCdf cdf(values, alpha);
  const double n = static_cast<double>(values.size());
  std::vector<double> r(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) r[i] = n * cdf.cdf(values[i]);
  return r;
}

std::vector<double> soft_topk_mask(std::span<const double> scores,
                                   std::size_t k, double alpha) {
  check_alpha(alpha);
  const std::size_t n = scores.size();
  if (k < 1 || k + 1 > n)
    throw ParameterError("soft top-k needs 1 <= k <= n-1 (k=" + std::to_string(k) +
                         ", n=" + std::to_string(n) + ")");
  const LapSumCdf cdf(scores, alpha);
  const double b = cdf.inverse_cdf(static_cast<double>(n - k) / static_cast<double>(n));
  std::vector<double> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = laplace_cdf(scores[i] - b, alpha);
  return mask;
}

SoftPermutation soft_permutation(std::span<const double> scores, double alpha) {
  check_alpha(alpha);
  const std::size_t n = scores.size();
  if (n == 0) throw ParameterError("soft permutation needs n >= 1");
  SoftPermutation out;
  out.alpha = alpha;
  const auto nn = static_cast<Eigen::Index>(n);
  out.matrix.resize(nn, nn);
  if (n == 1) {
    out.matrix(0, 0) = 1.0;
    return out;
  }
  const LapSumCdf cdf(scores, alpha);
  out.thresholds.resize(n - 1);
  for (std::size_t l = 1; l < n; ++l)
    out.thresholds[l - 1] =
        cdf.inverse_cdf(static_cast<double>(l) / static_cast<double>(n));

  // prev holds the cumulative mask of the previous row (all zeros at the top).
  std::vector<double> prev(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      const double cur =
          l + 1 < n ? laplace_cdf(out.thresholds[l] - scores[i], alpha) : 1.0;
      out.matrix(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) =
          cur - prev[i];
      prev[i] = cur;
    }
  }
  return out;
}

std::vector<double> soft_permutation_vjp(std::span<const double> scores,
                                         const SoftPermutation& perm,
                                         const Eigen::MatrixXd& upstream) {
  const std::size_t n = scores.size();
  const auto nn = static_cast<Eigen::Index>(n);
  if (upstream.rows() != nn || upstream.cols() != nn)
    throw DimensionError("soft_permutation_vjp: upstream must be n x n");
  if (perm.matrix.rows() != nn)
    throw DimensionError("soft_permutation_vjp: permutation size mismatch");
  std::vector<double> grad(n, 0.0);
  if (n == 1) return grad;
  const double alpha = perm.alpha;
  std::vector<double> dens(n), g(n), weight(n);
  for (std::size_t l = 1; l < n; ++l) {
    // Cumulative mask S_l(i) = Phi(t_l - r_i) enters rows l-1 (+) and l (-).
    const double t = perm.thresholds[l - 1];
    double min_abs = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double u = t - scores[i];
      dens[i] = laplace_pdf(u, alpha);
      g[i] = upstream(static_cast<Eigen::Index>(l - 1), static_cast<Eigen::Index>(i)) -
             upstream(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
      min_abs = std::min(min_abs, std::abs(u));
    }
    // Normalized threshold sensitivities, computed shifted so they stay
    // finite when every density underflows.
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weight[i] = std::exp(-(std::abs(t - scores[i]) - min_abs) / alpha);
      wsum += weight[i];
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += g[i] * dens[i];
    for (std::size_t k = 0; k < n; ++k)
      grad[k] += weight[k] / wsum * total - g[k] * dens[k];
  }
  return grad;
}

std::vector<double> soft_permutation_vjp(std::span<const double> scores,
                                         double alpha,
                                         const Eigen::MatrixXd& upstream) {
  return soft_permutation_vjp(scores, soft_permutation(scores, alpha), upstream);
}

}  // namespace minstp
