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

#include "minstp/exact_ot.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "minstp/error.h"

namespace minstp {
namespace {

double abs_pow(double d, double p) {
  d = std::abs(d);
  if (p == 1.0) return d;
  if (p == 2.0) return d * d;
  return std::pow(d, p);
}

std::vector<Eigen::Index> stable_order(std::span<const double> v) {
  std::vector<Eigen::Index> idx(v.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  return idx;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

TransportPlan::TransportPlan(Eigen::MatrixXd entries, Eigen::VectorXd a,
                             Eigen::VectorXd b)
    : entries_(std::move(entries)), a_(std::move(a)), b_(std::move(b)) {
  if (entries_.rows() != a_.size() || entries_.cols() != b_.size())
    throw DimensionError("plan shape does not match its marginals");
}

double TransportPlan::marginal_error() const {
  const double row = (entries_.rowwise().sum() - a_).cwiseAbs().maxCoeff();
  const double col =
      (entries_.colwise().sum().transpose() - b_).cwiseAbs().maxCoeff();
  return std::max(row, col);
}

bool TransportPlan::is_feasible(double tol) const {
  return (entries_.array() >= 0.0).all() && marginal_error() <= tol &&
         std::abs(entries_.sum() - 1.0) <= tol;
}

double TransportPlan::cost(const Eigen::MatrixXd& cost) const {
  if (cost.rows() != rows() || cost.cols() != cols())
    throw DimensionError("plan and cost matrix differ in shape");
  return (entries_.array() * cost.array()).sum();
}

double pth_root(double cost, double p) {
  if (cost <= 0.0) return 0.0;
  if (p == 1.0) return cost;
  if (p == 2.0) return std::sqrt(cost);
  return std::pow(cost, 1.0 / p);
}

std::vector<QuantilePiece> quantile_pieces(std::span<const double> x,
                                           std::span<const double> wx,
                                           std::span<const double> y,
                                           std::span<const double> wy) {
  if (x.size() != wx.size() || y.size() != wy.size())
    throw DimensionError("values and weights differ in length");
  if (x.empty() || y.empty()) throw ConfigError("empty measure");
  const auto ox = stable_order(x);
  const auto oy = stable_order(y);
  std::vector<QuantilePiece> pieces;
  pieces.reserve(x.size() + y.size());
  // Walk the merged CDF breakpoints. Cumulative sums (not remaining masses)
  // keep every row and column total within rounding of its weight.
  std::size_t i = 0, j = 0;
  double cx = wx[ox[0]], cy = wy[oy[0]];
  double level = 0.0;
  while (i < x.size() && j < y.size()) {
    const bool last_x = i + 1 == x.size();
    const bool last_y = j + 1 == y.size();
    double hi;
    if (last_x && last_y) {
      hi = std::max(1.0, std::max(cx, cy));
    } else if (!last_x && (last_y || cx <= cy)) {
      hi = cx;
    } else {
      hi = cy;
    }
    if (hi > level) pieces.push_back({level, hi, ox[i], oy[j]});
    level = std::max(level, hi);
    if (last_x && last_y) break;
    const bool step_x = !last_x && (last_y || cx <= cy);
    const bool step_y = !last_y && (last_x || cy <= cx);
    if (step_x) cx += wx[ox[++i]];
    if (step_y) cy += wy[oy[++j]];
  }
  return pieces;
}

double ot_1d_cost(std::span<const double> x, std::span<const double> wx,
                  std::span<const double> y, std::span<const double> wy,
                  double p) {
  double cost = 0.0;
  for (const auto& piece : quantile_pieces(x, wx, y, wy))
    cost += (piece.hi - piece.lo) * abs_pow(x[piece.i] - y[piece.j], p);
  return cost;
}

double ot_1d_uniform_cost(std::span<const double> x, std::span<const double> y,
                          double p) {
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  if (xs.size() == ys.size()) {
    double cost = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) cost += abs_pow(xs[k] - ys[k], p);
    return cost / static_cast<double>(xs.size());
  }
  std::vector<double> wx(xs.size(), 1.0 / static_cast<double>(xs.size()));
  std::vector<double> wy(ys.size(), 1.0 / static_cast<double>(ys.size()));
  return ot_1d_cost(xs, wx, ys, wy, p);
}

OtResult ot_1d(const DiscreteMeasure& u, const DiscreteMeasure& v, double p) {
  if (u.dim() != 1 || v.dim() != 1)
    throw DimensionError("ot_1d needs one-dimensional measures");
  if (!(p >= 1.0)) throw ParameterError("cost exponent p must be >= 1");
  const Eigen::VectorXd x = u.points().col(0);
  const Eigen::VectorXd y = v.points().col(0);
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(u.size(), v.size());
  double cost = 0.0;
  for (const auto& piece : quantile_pieces(as_span(x), as_span(u.weights()),
                                           as_span(y), as_span(v.weights()))) {
    const double mass = piece.hi - piece.lo;
    gamma(piece.i, piece.j) += mass;
    cost += mass * abs_pow(x(piece.i) - y(piece.j), p);
  }
  OtResult r;
  r.plan = TransportPlan(std::move(gamma), u.weights(), v.weights());
  r.cost = cost;
  r.value = pth_root(cost, p);
  r.p = p;
  return r;
}

std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw UnsupportedError("assignment needs a square matrix");
  if (!cost.allFinite()) throw NumericalError("assignment cost is not finite");
  // 1-based potentials u (rows), v (columns); match[j] = row owning column j.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Eigen::Index row = 1; row <= n; ++row) {
    match[0] = row;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = match[j0];
      double delta = kInf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(n);
  for (Eigen::Index j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

OtResult ot_assignment(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       double p) {
  if (mu.size() != nu.size())
    throw UnsupportedError("ot_assignment needs equal sizes (got " +
                           std::to_string(mu.size()) + " and " +
                           std::to_string(nu.size()) + ")");
  if (!mu.is_uniform() || !nu.is_uniform())
    throw UnsupportedError("ot_assignment needs uniform weights");
  const Eigen::MatrixXd c = pairwise_cost(mu.points(), nu.points(), p);
  const auto assignment = solve_assignment(c);
  const Eigen::Index n = mu.size();
  const double mass = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    gamma(i, assignment[i]) = mass;
    total += c(i, assignment[i]);
  }
  OtResult r;
  r.plan = TransportPlan(std::move(gamma), mu.weights(), nu.weights());
  r.cost = total * mass;
  r.value = pth_root(r.cost, p);
  r.p = p;
  return r;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw DimensionError("pearson: inputs differ in length");
  if (xs.size() < 2) throw UndefinedError("pearson needs at least two samples");
  // The floating-point mean of equal values can miss them by an ulp.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw UndefinedError("pearson: zero variance");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw UndefinedError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string plan_to_csv(const TransportPlan& plan) {
  std::ostringstream out;
  out << std::setprecision(17);
  const Eigen::MatrixXd& g = plan.entries();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (g(i, j) != 0.0) out << i << ',' << j << ',' << g(i, j) << '\n';
  return out.str();
}

std::string plan_to_json(const TransportPlan& plan) {
  nlohmann::json doc;
  doc["rows"] = plan.rows();
  doc["cols"] = plan.cols();
  doc["entries"] = nlohmann::json::array();
  const Eigen::MatrixXd& g = plan.entries();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (g(i, j) != 0.0) doc["entries"].push_back({i, j, g(i, j)});
  return doc.dump() + "\n";
}

}  // namespace minstp
