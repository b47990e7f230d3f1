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

#include "minstp/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "minstp/error.h"
#include "minstp/lapsum.h"
#include "minstp/parallel.h"
#include "minstp/random.h"
#include "minstp/stp.h"

namespace minstp {
namespace {

// Above this many entries the full cost matrix is not materialised and batch
// sub-matrices are computed from the points instead.
constexpr double kMaxPrecomputedCost = 1e7;
constexpr double kAlphaFloor = 1e-8;

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// What the trainer sees for one pair: slicer inputs (possibly context
// augmented) and the ambient points that define the cost.
struct Problem {
  Points x_in, y_in;
  const Points* x_pts = nullptr;
  const Points* y_pts = nullptr;
  Eigen::MatrixXd cost;  // empty when too large
};

Problem make_problem(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     const Eigen::RowVectorXd& context, double p) {
  Problem pr;
  pr.x_in = with_context(mu.points(), context);
  pr.y_in = with_context(nu.points(), context);
  pr.x_pts = &mu.points();
  pr.y_pts = &nu.points();
  if (static_cast<double>(mu.size()) * static_cast<double>(nu.size()) <=
      kMaxPrecomputedCost)
    pr.cost = pairwise_cost(mu.points(), nu.points(), p);
  return pr;
}

Points take_rows(const Points& x, const std::vector<std::size_t>& idx) {
  Points out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

double spread(const Eigen::VectorXd& u) {
  return u.size() == 0 ? 0.0 : u.maxCoeff() - u.minCoeff();
}

// Full-batch hard-lift cost without forming the N x M matrix.
double full_cost(const Slicer& f, const Problem& pr, double p) {
  const Eigen::VectorXd ux = f.eval(pr.x_in);
  const Eigen::VectorXd uy = f.eval(pr.y_in);
  const auto ox = hard_order(as_span(ux));
  const auto oy = hard_order(as_span(uy));
  // Same summation order as lift_cost, so the two agree bitwise.
  double total = 0.0;
  if (ux.size() == uy.size()) {
    for (std::size_t k = 0; k < ox.size(); ++k)
      total += ground_cost(pr.x_pts->row(static_cast<Eigen::Index>(ox[k])),
                           pr.y_pts->row(static_cast<Eigen::Index>(oy[k])), p);
    return total / static_cast<double>(ox.size());
  }
  for (const NwEntry& e : nw_corner(ux.size(), uy.size()).entries)
    total += e.mass * ground_cost(pr.x_pts->row(static_cast<Eigen::Index>(ox[e.i])),
                                  pr.y_pts->row(static_cast<Eigen::Index>(oy[e.j])), p);
  return total;
}

struct BatchOutcome {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

BatchOutcome batch_step(const Slicer& f, const Problem& pr, const TrainConfig& cfg,
                        std::size_t batch, std::uint64_t step, std::uint64_t b) {
  Stream rng = Stream::derive(cfg.seed, "train/batch", {step, b});
  const auto n = static_cast<std::size_t>(pr.x_in.rows());
  const auto m = static_cast<std::size_t>(pr.y_in.rows());
  const auto rows = sample_without_replacement(rng, n, batch);
  const auto cols = sample_without_replacement(rng, m, batch);
  const Points xb = take_rows(pr.x_in, rows);
  const Points yb = take_rows(pr.y_in, cols);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(batch));
  if (pr.cost.size() > 0) {
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t i = 0; i < batch; ++i)
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            pr.cost(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
  } else {
    c = pairwise_cost(take_rows(*pr.x_pts, rows), take_rows(*pr.y_pts, cols), cfg.p);
  }
  TwoBranchOptions opt;
  // The smoothing scale is treated as a constant of the step.
  opt.alpha_x = std::max(kAlphaFloor, cfg.alpha_fraction * spread(f.eval(xb)));
  opt.alpha_y = std::max(kAlphaFloor, cfg.alpha_fraction * spread(f.eval(yb)));
  TwoBranchResult r = two_branch_on_points(f, xb, yb, c, opt);
  if (!std::isfinite(r.loss) || !r.gradient.allFinite())
    throw NumericalError("training diverged: non-finite mini-batch loss or gradient");
  return {r.loss, std::move(r.gradient)};
}

class Updater {
 public:
  Updater(const TrainConfig& cfg, Eigen::Index size)
      : cfg_(cfg), velocity_(Eigen::VectorXd::Zero(size)) {}

  void set_progress(double progress) {
    const double f = cfg_.lr_final_fraction;
    lr_ = cfg_.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
  }

  void apply(Slicer& f, const Eigen::VectorXd& grad) {
    Eigen::VectorXd params = f.parameters();
    if (cfg_.optimizer == Optimizer::kMomentum) {
      velocity_ = cfg_.momentum * velocity_ + grad;
      params -= lr_ * velocity_;
    } else {
      params -= lr_ * grad;
    }
    if (!params.allFinite()) throw NumericalError("training diverged: non-finite parameters");
    f.set_parameters(params);
  }

 private:
  const TrainConfig& cfg_;
  Eigen::VectorXd velocity_;
  double lr_ = cfg_.lr;
};

// One epoch of the mini-batch algorithm on one problem; returns the mean loss.
double run_epoch(Slicer& f, const Problem& pr, const TrainConfig& cfg,
                 std::size_t batch, std::uint64_t step, Updater& updater) {
  const std::size_t k = cfg.batches_per_epoch;
  if (cfg.per_batch_update) {
    double loss = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      BatchOutcome out = batch_step(f, pr, cfg, batch, step, b);
      loss += out.loss;
      updater.apply(f, out.gradient);
    }
    return loss / static_cast<double>(k);
  }
  std::vector<BatchOutcome> outs(k);
  const Slicer frozen = f;
  parallel_for(k, cfg.workers,
               [&](std::size_t b) { outs[b] = batch_step(frozen, pr, cfg, batch, step, b); });
  double loss = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(f.num_parameters());
  for (const auto& o : outs) {  // fixed reduction order
    loss += o.loss;
    grad += o.gradient;
  }
  updater.apply(f, grad / static_cast<double>(k));
  return loss / static_cast<double>(k);
}

struct TrainLoop {
  const TrainConfig& cfg;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

void TrainConfig::validate(Eigen::Index n, Eigen::Index m) const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1", "epochs");
  if (batches_per_epoch < 1)
    throw ConfigError("train.batches_per_epoch must be >= 1", "batches_per_epoch");
  if (batch_size > static_cast<std::size_t>(std::min(n, m)))
    throw ConfigError("train.batch_size (" + std::to_string(batch_size) +
                          ") exceeds min(N, M) = " + std::to_string(std::min(n, m)),
                      "batch_size");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0", "lr");
  if (!(alpha_fraction > 0.0) || !std::isfinite(alpha_fraction))
    throw ConfigError("train.alpha must be > 0", "alpha");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0))
    throw ConfigError("train.lr_final_fraction must be in (0, 1]", "lr_final_fraction");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("train.momentum must be in [0, 1)", "momentum");
  if (!(p >= 1.0)) throw ConfigError("train.p must be >= 1", "p");
  if (workers < 1) throw ConfigError("train.workers must be >= 1", "workers");
}

std::size_t TrainConfig::resolved_batch(Eigen::Index n, Eigen::Index m) const {
  return batch_size == 0 ? static_cast<std::size_t>(std::min(n, m)) : batch_size;
}

std::string trace_to_jsonl(const TrainTrace& trace) {
  std::string out;
  for (const EpochRecord& r : trace.epochs) {
    nlohmann::json line;
    line["epoch"] = r.epoch;
    line["minibatch_loss"] = r.minibatch_loss;
    line["full_cost"] = r.full_cost ? nlohmann::json(*r.full_cost) : nlohmann::json();
    line["wall_seconds"] = r.wall_seconds;
    out += line.dump();
    out += '\n';
  }
  return out;
}

double minibatch_kernel(const Slicer& f, const Points& xs, const Points& yt, double p) {
  if (xs.rows() != yt.rows())
    throw DimensionError("minibatch_kernel: batches differ in size");
  if (xs.rows() < 1) throw ParameterError("minibatch_kernel: empty batch");
  const Eigen::VectorXd ux = f.eval(xs);
  const Eigen::VectorXd uy = f.eval(yt);
  const auto ox = hard_order(as_span(ux));
  const auto oy = hard_order(as_span(uy));
  double total = 0.0;
  for (std::size_t k = 0; k < ox.size(); ++k)
    total += ground_cost(xs.row(static_cast<Eigen::Index>(ox[k])),
                         yt.row(static_cast<Eigen::Index>(oy[k])), p);
  return total / static_cast<double>(ox.size());
}

IncompleteEstimate incomplete_estimator(const Slicer& f, const Points& x,
                                        const Points& y, std::size_t batch,
                                        std::size_t count, std::uint64_t seed,
                                        double p) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto m = static_cast<std::size_t>(y.rows());
  if (batch < 1 || batch > std::min(n, m))
    throw ConfigError("batch size must be in [1, min(N, M)]", "batch_size");
  if (count < 1) throw ConfigError("number of batch pairs K must be >= 1", "K");
  // Projections are computed once; each kernel only needs a sort of B values.
  const Eigen::VectorXd ux = f.eval(x);
  const Eigen::VectorXd uy = f.eval(y);
  IncompleteEstimate est;
  est.values.resize(count);
  std::vector<double> bx(batch), by(batch);
  for (std::size_t k = 0; k < count; ++k) {
    Stream rng = Stream::derive(seed, "incomplete", {k});
    const auto rows = sample_without_replacement(rng, n, batch);
    const auto cols = sample_without_replacement(rng, m, batch);
    for (std::size_t r = 0; r < batch; ++r) {
      bx[r] = ux(static_cast<Eigen::Index>(rows[r]));
      by[r] = uy(static_cast<Eigen::Index>(cols[r]));
    }
    const auto ox = hard_order(bx);
    const auto oy = hard_order(by);
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r)
      total += ground_cost(x.row(static_cast<Eigen::Index>(rows[ox[r]])),
                           y.row(static_cast<Eigen::Index>(cols[oy[r]])), p);
    est.values[k] = total / static_cast<double>(batch);
  }
  double sum = 0.0;
  for (double v : est.values) sum += v;
  est.mean = sum / static_cast<double>(count);
  return est;
}

TrainResult train_minstp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const Slicer& f0, const TrainConfig& cfg) {
  if (!mu.is_uniform() || !nu.is_uniform())
    throw UnsupportedError("training needs uniform weights");
  if (mu.dim() != nu.dim()) throw DimensionError("measures differ in dimension");
  cfg.validate(mu.size(), nu.size());
  if (f0.input_dim() != mu.dim())
    throw DimensionError("slicer input dimension does not match the measures");
  return train_amortized({{mu, nu}}, f0, cfg, zero_context(0));
}

Eigen::RowVectorXd moment_descriptor(const DiscreteMeasure& m) {
  const Eigen::Index d = m.dim();
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(4 * d);
  const Eigen::RowVectorXd mean = m.centroid();
  const Points centered = m.points().rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * m.weights().asDiagonal() * centered;
  out.segment(0, d) = mean;
  out.segment(d, d) = cov.diagonal().cwiseMax(0.0).cwiseSqrt().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the two largest.
  for (Eigen::Index a = 0; a < std::min<Eigen::Index>(2, d); ++a) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - a);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.segment((2 + a) * d, d) = v.transpose();
  }
  return out;
}

Eigen::RowVectorXd moment_context(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const Eigen::RowVectorXd a = moment_descriptor(mu);
  const Eigen::RowVectorXd b = moment_descriptor(nu);
  Eigen::RowVectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

ContextFn zero_context(Eigen::Index length) {
  return [length](const DiscreteMeasure&, const DiscreteMeasure&) {
    return Eigen::RowVectorXd::Zero(length).eval();
  };
}

Points with_context(const Points& x, const Eigen::RowVectorXd& context) {
  if (context.size() == 0) return x;
  Points out(x.rows(), x.cols() + context.size());
  out.leftCols(x.cols()) = x;
  out.rightCols(context.size()) = context.replicate(x.rows(), 1);
  return out;
}

double stp_cost(const Slicer& f, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                const Eigen::RowVectorXd& context, double p) {
  Problem pr;
  pr.x_in = with_context(mu.points(), context);
  pr.y_in = with_context(nu.points(), context);
  pr.x_pts = &mu.points();
  pr.y_pts = &nu.points();
  return full_cost(f, pr, p);
}

TrainResult train_amortized(
    const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& pairs,
    const Slicer& f0, const TrainConfig& cfg, const ContextFn& context_fn) {
  if (pairs.empty()) throw ConfigError("amortized training needs at least one pair", "pairs");
  const Eigen::Index d = pairs.front().first.dim();
  Eigen::Index min_size = std::numeric_limits<Eigen::Index>::max();
  std::vector<Problem> problems;
  problems.reserve(pairs.size());
  Eigen::Index ctx_len = -1;
  for (const auto& [mu, nu] : pairs) {
    if (mu.dim() != d || nu.dim() != d)
      throw DimensionError("all pairs must share one dimension");
    if (!mu.is_uniform() || !nu.is_uniform())
      throw UnsupportedError("training needs uniform weights");
    const Eigen::RowVectorXd ctx = context_fn(mu, nu);
    if (ctx_len >= 0 && ctx.size() != ctx_len)
      throw DimensionError("context descriptors differ in length");
    ctx_len = ctx.size();
    min_size = std::min({min_size, mu.size(), nu.size()});
    problems.push_back(make_problem(mu, nu, ctx, cfg.p));
  }
  cfg.validate(min_size, min_size);
  if (f0.input_dim() != d + ctx_len)
    throw DimensionError("slicer input dimension must be d + context length (" +
                         std::to_string(d + ctx_len) + ")");

  auto eval_all = [&](const Slicer& f) {
    double total = 0.0;
    for (const Problem& pr : problems) total += full_cost(f, pr, cfg.p);
    return total / static_cast<double>(problems.size());
  };

  TrainLoop loop{cfg};
  Slicer f = f0;
  Updater updater(cfg, f.num_parameters());
  TrainTrace trace;
  trace.initial_cost = eval_all(f);
  double best_cost = trace.initial_cost;
  Slicer best = f;
  trace.best_epoch = 0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    std::size_t which = 0;
    if (problems.size() > 1)
      which = static_cast<std::size_t>(
          Stream::derive(cfg.seed, "train/pair", {e}).below(problems.size()));
    const Problem& pr = problems[which];
    updater.set_progress(static_cast<double>(e) / static_cast<double>(cfg.epochs));
    const std::size_t batch = cfg.resolved_batch(pr.x_in.rows(), pr.y_in.rows());
    rec.minibatch_loss = run_epoch(f, pr, cfg, batch, e, updater);
    if (cfg.eval_every > 0 && rec.epoch < cfg.epochs && rec.epoch % cfg.eval_every == 0) {
      rec.full_cost = eval_all(f);
      if (*rec.full_cost < best_cost) {
        best_cost = *rec.full_cost;
        best = f;
        trace.best_epoch = rec.epoch;
      }
    }
    rec.wall_seconds = loop.seconds();
    trace.epochs.push_back(rec);
  }

  const double last = eval_all(f);
  if (cfg.keep_best && best_cost < last) {
    trace.final_cost = best_cost;
    return {best, std::move(trace)};
  }
  trace.final_cost = last;
  trace.best_epoch = cfg.epochs;
  return {f, std::move(trace)};
}

}  // namespace minstp
