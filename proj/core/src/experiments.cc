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

#include "minstp/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "minstp/error.h"
#include "minstp/exact_ot.h"
#include "minstp/lapsum.h"
#include "minstp/parallel.h"
#include "minstp/random.h"
#include "minstp/stp.h"

namespace minstp {
namespace {

using Clock = std::chrono::steady_clock;
using MeasurePair = std::pair<DiscreteMeasure, DiscreteMeasure>;

constexpr double kSlack = 1e-9;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::initializer_list<std::uint64_t> ids) {
  Stream s = Stream::derive(seed, purpose, ids);
  return s();
}

double hard_cost(const Slicer& f, const MeasurePair& pair, double p) {
  return lift_plan(f, pair.first, pair.second, p).cost;
}

double ot_cost(const MeasurePair& pair, double p) {
  return ot_assignment(pair.first, pair.second, p).cost;
}

Points gaussian_points(Stream& rng, Eigen::Index n, Eigen::Index d, double scale,
                       double shift) {
  Points x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = shift + scale * rng.normal();
  return x;
}

CheckResult make_check(std::string name, double margin, std::string detail) {
  CheckResult c;
  c.name = std::move(name);
  c.margin = margin;
  c.passed = margin >= 0.0;
  c.detail = std::move(detail);
  return c;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

// ---------------------------------------------------------------------------

double TaskRecord::init_random_mean() const { return mean_of(init_random); }
double TaskRecord::init_random_std() const { return std_of(init_random); }
std::optional<double> TaskRecord::init_pretrained_mean() const {
  if (init_pretrained.empty()) return std::nullopt;
  return mean_of(init_pretrained);
}
double TaskRecord::trained_mean() const { return mean_of(trained); }

bool StudyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

std::string report_to_json(const StudyReport& report) {
  nlohmann::json j;
  j["study"] = report.study;
  j["passed"] = report.all_passed();
  j["checks"] = nlohmann::json::array();
  for (const CheckResult& c : report.checks)
    j["checks"].push_back(
        {{"name", c.name}, {"passed", c.passed}, {"margin", c.margin}, {"detail", c.detail}});
  if (!report.tasks.empty()) {
    j["tasks"] = nlohmann::json::array();
    for (const TaskRecord& t : report.tasks)
      j["tasks"].push_back({{"task", t.task},
                            {"ot_cost", t.ot_cost},
                            {"init_cost_random_mean", t.init_random_mean()},
                            {"init_cost_random_std", t.init_random_std()},
                            {"init_cost_pretrained", opt_json(t.init_pretrained_mean())},
                            {"trained_cost", t.trained_mean()},
                            {"init_cost_random_runs", t.init_random},
                            {"init_cost_pretrained_runs", t.init_pretrained},
                            {"trained_cost_runs", t.trained},
                            {"wall_seconds", t.wall_seconds}});
  }
  if (!report.batches.empty()) {
    j["batches"] = nlohmann::json::array();
    for (const BatchRecord& b : report.batches)
      j["batches"].push_back({{"seed", b.seed},
                              {"batch_size", b.batch},
                              {"final_cost", b.final_cost},
                              {"ot_cost", b.ot_cost},
                              {"wall_seconds", b.wall_seconds}});
  }
  if (!report.correlations.empty()) {
    j["correlations"] = nlohmann::json::array();
    for (const CorrelationRow& r : report.correlations)
      j["correlations"].push_back(
          {{"slicer", r.slicer}, {"train", opt_json(r.train)}, {"test", opt_json(r.test)}});
  }
  j["summary"] = nlohmann::json::object();
  for (const auto& [k, v] : report.summary) j["summary"][k] = v;
  j["tables"] = nlohmann::json::array();
  for (const auto& [name, body] : report.tables) j["tables"].push_back(name);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Drift transferability.

namespace {

TrainConfig momentum_schedule(std::size_t epochs, double lr, double alpha) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.alpha_fraction = alpha;
  tc.optimizer = Optimizer::kMomentum;
  tc.lr_final_fraction = 0.1;
  return tc;
}

}  // namespace

TrainConfig drift_schedule() { return momentum_schedule(200, 0.05, 0.02); }

TrainConfig minibatch_full_schedule() { return momentum_schedule(1000, 0.1, 0.01); }

TrainConfig minibatch_batch_schedule() {
  TrainConfig tc = momentum_schedule(4000, 0.1, 0.01);
  tc.batches_per_epoch = 32;
  return tc;
}

TrainConfig amortized_schedule() {
  TrainConfig tc = momentum_schedule(2000, 0.02, 0.02);
  tc.lr_final_fraction = 1.0;
  return tc;
}

TrainConfig per_pair_schedule() {
  TrainConfig tc = momentum_schedule(200, 0.05, 0.02);
  tc.lr_final_fraction = 1.0;
  return tc;
}

void DriftStudyConfig::validate() const {
  if (num_tasks < 2) throw ConfigError("drift.tasks must be >= 2", "tasks");
  if (runs < 1) throw ConfigError("drift.runs must be >= 1", "runs");
  if (!(zoom > 0.0)) throw ConfigError("drift.zoom must be > 0", "zoom");
  if (!std::isfinite(rotation)) throw ConfigError("drift.rotation must be finite", "rotation");
  if (family == Family::kFile) throw ConfigError("drift study needs a generated family", "family");
  if (jobs < 1) throw ConfigError("jobs must be >= 1", "jobs");
  train.validate(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

StudyReport run_drift_study(const DriftStudyConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.num_tasks;
  const std::size_t R = cfg.runs;
  const double p = cfg.train.p;

  std::vector<MeasurePair> tasks;
  tasks.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    DatasetSpec spec;
    spec.family = cfg.family;
    spec.n = cfg.n;
    spec.seed = cfg.seed;
    spec.drift = Drift{cfg.rotation * static_cast<double>(t),
                       std::pow(cfg.zoom, static_cast<double>(t))};
    tasks.push_back(generate_pair(spec));
  }

  StudyReport report;
  report.study = "drift";
  report.tasks.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    TaskRecord& rec = report.tasks[t];
    rec.task = t + 1;
    rec.ot_cost = ot_cost(tasks[t], p);
    rec.init_random.assign(R, 0.0);
    rec.trained.assign(R, 0.0);
    if (t > 0) rec.init_pretrained.assign(R, 0.0);
  }
  std::vector<std::vector<double>> wall(T, std::vector<double>(R, 0.0));

  parallel_for(R, cfg.jobs, [&](std::size_t r) {
    std::optional<Slicer> previous;
    for (std::size_t t = 0; t < T; ++t) {
      const auto t0 = Clock::now();
      const Slicer fresh = Slicer::random_mlp(
          tasks[t].first.dim(), cfg.hidden, derive_seed(cfg.seed, "drift/init", {r, t}));
      report.tasks[t].init_random[r] = hard_cost(fresh, tasks[t], p);
      if (previous) report.tasks[t].init_pretrained[r] = hard_cost(*previous, tasks[t], p);
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, "drift/train", {r, t});
      tc.workers = 1;
      previous = train_minstp(tasks[t].first, tasks[t].second, previous ? *previous : fresh, tc)
                     .slicer;
      report.tasks[t].trained[r] = hard_cost(*previous, tasks[t], p);
      wall[t][r] = seconds_since(t0);
    }
  });
  for (std::size_t t = 0; t < T; ++t)
    for (double w : wall[t]) report.tasks[t].wall_seconds += w;

  // Checks on the run averages.
  const std::size_t comparisons = T - 1;
  std::size_t ordered = 0, near_ot = 0;
  double order_margin = std::numeric_limits<double>::infinity();
  double bound_margin = std::numeric_limits<double>::infinity();
  double floor_margin = std::numeric_limits<double>::infinity();
  std::ostringstream order_detail;
  for (std::size_t t = 0; t < T; ++t) {
    const TaskRecord& rec = report.tasks[t];
    auto floor = [&](double c) { floor_margin = std::min(floor_margin, c - rec.ot_cost + kSlack); };
    for (double c : rec.init_random) floor(c);
    for (double c : rec.init_pretrained) floor(c);
    for (double c : rec.trained) floor(c);
    if (t == 0) continue;
    const double pre = *rec.init_pretrained_mean();
    const double rnd = rec.init_random_mean();
    if (pre < rnd) ++ordered;
    if (pre <= 1.5 * rec.ot_cost) ++near_ot;
    order_margin = std::min(order_margin, rnd - pre);
    bound_margin = std::min(bound_margin, 1.5 * rec.ot_cost - pre);
    order_detail << "t" << rec.task << ": " << fmt(pre) << " vs " << fmt(rnd) << "; ";
  }
  const double need_order = 6.0 / 7.0 * static_cast<double>(comparisons);
  const double need_bound = 5.0 / 7.0 * static_cast<double>(comparisons);
  report.checks.push_back(make_check(
      "pretrained_below_random", static_cast<double>(ordered) - need_order,
      std::to_string(ordered) + "/" + std::to_string(comparisons) +
          " tasks (worst gap " + fmt(order_margin) + "); " + order_detail.str()));
  report.checks.push_back(make_check(
      "pretrained_within_1.5_ot", static_cast<double>(near_ot) - need_bound,
      std::to_string(near_ot) + "/" + std::to_string(comparisons) + " tasks (worst slack " +
          fmt(bound_margin) + ")"));
  report.checks.push_back(
      make_check("costs_above_ot", floor_margin, "min cost - OT + 1e-9 = " + fmt(floor_margin)));
  report.summary["tasks_ordered"] = static_cast<double>(ordered);
  report.summary["tasks_within_1.5_ot"] = static_cast<double>(near_ot);
  report.summary["comparisons"] = static_cast<double>(comparisons);

  std::ostringstream csv;
  csv.precision(17);
  csv << "task,ot_cost,init_random_mean,init_random_std,init_pretrained_mean,trained_mean\n";
  for (const TaskRecord& rec : report.tasks) {
    csv << rec.task << ',' << rec.ot_cost << ',' << rec.init_random_mean() << ','
        << rec.init_random_std() << ',';
    if (auto v = rec.init_pretrained_mean()) csv << *v;
    csv << ',' << rec.trained_mean() << '\n';
  }
  report.tables["drift.csv"] = csv.str();
  return report;
}

// ---------------------------------------------------------------------------
// Mini-batch fidelity.

void MinibatchStudyConfig::validate() const {
  if (family == Family::kFile) throw ConfigError("mini-batch study needs a generated family", "family");
  if (n < 1) throw ConfigError("minibatch.n must be >= 1", "n");
  if (batch_sizes.empty()) throw ConfigError("minibatch.batch_sizes is empty", "batch_sizes");
  if (seeds.empty()) throw ConfigError("minibatch.seeds is empty", "seeds");
  if (jobs < 1) throw ConfigError("jobs must be >= 1", "jobs");
  const auto nn = static_cast<Eigen::Index>(n);
  for (std::size_t b : batch_sizes) {
    if (b < 1 || b > n)
      throw ConfigError("batch size " + std::to_string(b) + " outside [1, n]", "batch_sizes");
  }
  full.validate(nn, nn);
  batch.validate(nn, nn);
}

StudyReport run_minibatch_study(const MinibatchStudyConfig& cfg) {
  cfg.validate();
  const double p = cfg.full.p;
  const std::size_t S = cfg.seeds.size();
  const std::size_t nb = cfg.batch_sizes.size();

  struct SeedOutcome {
    double ot = 0.0;
    BatchRecord full;
    std::vector<BatchRecord> rows;
    std::map<std::string, std::string> plans;
  };
  std::vector<SeedOutcome> out(S);

  // Each (seed, schedule) job is independent; index 0 of a seed is the
  // full-batch run.
  std::vector<MeasurePair> data;
  std::vector<Slicer> inits;
  for (std::size_t s = 0; s < S; ++s) {
    DatasetSpec spec;
    spec.family = cfg.family;
    spec.n = cfg.n;
    spec.seed = cfg.seeds[s];
    data.push_back(generate_pair(spec));
    inits.push_back(Slicer::random_mlp(data.back().first.dim(), cfg.hidden,
                                       derive_seed(cfg.seeds[s], "minibatch/init", {})));
    out[s].ot = 0.0;
    out[s].rows.resize(nb);
  }
  std::vector<std::optional<Slicer>> trained_full(S);
  std::vector<std::vector<std::optional<Slicer>>> trained(S, std::vector<std::optional<Slicer>>(nb));

  const std::size_t per_seed = nb + 2;  // OT, full batch, each B
  parallel_for(S * per_seed, cfg.jobs, [&](std::size_t job) {
    const std::size_t s = job / per_seed;
    const std::size_t which = job % per_seed;
    const MeasurePair& pair = data[s];
    const auto t0 = Clock::now();
    if (which == 0) {
      const OtResult ot = ot_assignment(pair.first, pair.second, p);
      out[s].ot = ot.cost;
      if (cfg.export_plans && s == 0) out[s].plans["plan_ot.csv"] = plan_to_csv(ot.plan);
      return;
    }
    TrainConfig tc;
    std::size_t batch = cfg.n;
    if (which == 1) {
      tc = cfg.full;
      tc.batch_size = cfg.n;
      tc.batches_per_epoch = 1;
    } else {
      batch = cfg.batch_sizes[which - 2];
      if (batch == cfg.n) return;  // filled from the full-batch run below
      tc = cfg.batch;
      tc.batch_size = batch;
    }
    tc.seed = cfg.seeds[s];
    tc.workers = 1;
    TrainResult r = train_minstp(pair.first, pair.second, inits[s], tc);
    BatchRecord rec;
    rec.seed = cfg.seeds[s];
    rec.batch = batch;
    rec.final_cost = hard_cost(r.slicer, pair, p);
    rec.wall_seconds = seconds_since(t0);
    if (which == 1) {
      out[s].full = rec;
      trained_full[s] = std::move(r.slicer);
    } else {
      out[s].rows[which - 2] = rec;
      trained[s][which - 2] = std::move(r.slicer);
    }
  });

  StudyReport report;
  report.study = "minibatch";
  double fidelity_margin = std::numeric_limits<double>::infinity();
  double ot_margin = std::numeric_limits<double>::infinity();
  std::ostringstream detail;
  for (std::size_t s = 0; s < S; ++s) {
    SeedOutcome& o = out[s];
    o.full.ot_cost = o.ot;
    report.batches.push_back(o.full);
    ot_margin = std::min(ot_margin, 1.15 * o.ot - o.full.final_cost);
    for (std::size_t b = 0; b < nb; ++b) {
      BatchRecord rec = o.rows[b];
      if (cfg.batch_sizes[b] == cfg.n) {
        rec = o.full;
        trained[s][b] = trained_full[s];
      }
      rec.ot_cost = o.ot;
      report.batches.push_back(rec);
      if (rec.batch == cfg.n) continue;
      fidelity_margin =
          std::min(fidelity_margin, 0.10 * o.full.final_cost -
                                        std::abs(rec.final_cost - o.full.final_cost));
      ot_margin = std::min(ot_margin, 1.15 * o.ot - rec.final_cost);
      detail << "seed " << rec.seed << " B=" << rec.batch << ": " << fmt(rec.final_cost)
             << " vs full " << fmt(o.full.final_cost) << " (OT " << fmt(o.ot) << "); ";
    }
    if (cfg.export_plans && s == 0) {
      const MeasurePair& pair = data[s];
      report.tables.merge(o.plans);
      report.tables["plan_full.csv"] = plan_to_csv(lift_plan(*trained_full[s], pair.first,
                                                             pair.second, p).plan);
      for (std::size_t b = 0; b < nb; ++b)
        report.tables["plan_B" + std::to_string(cfg.batch_sizes[b]) + ".csv"] = plan_to_csv(
            lift_plan(*trained[s][b], pair.first, pair.second, p).plan);
    }
  }
  if (std::isfinite(fidelity_margin))
    report.checks.push_back(make_check("minibatch_within_10pct_of_full", fidelity_margin,
                                       detail.str()));
  report.checks.push_back(make_check("trained_within_15pct_of_ot", ot_margin,
                                     "min 1.15 OT - cost = " + fmt(ot_margin)));

  // Seed-averaged final cost against batch size (full batch counts as B = n).
  std::map<std::size_t, std::vector<double>> by_batch;
  double floor_margin = std::numeric_limits<double>::infinity();
  for (const BatchRecord& rec : report.batches) {
    by_batch[rec.batch].push_back(rec.final_cost);
    floor_margin = std::min(floor_margin, rec.final_cost - rec.ot_cost + kSlack);
  }
  double mono = std::numeric_limits<double>::infinity();
  std::ostringstream mono_detail;
  double prev = std::numeric_limits<double>::infinity();
  for (auto& [b, costs] : by_batch) {
    // Full-batch records appear once per seed and once more when B = n is listed.
    const double m = mean_of(costs);
    report.summary["mean_final_cost_B" + std::to_string(b)] = m;
    if (std::isfinite(prev)) mono = std::min(mono, prev - m);
    prev = m;
    mono_detail << "B=" << b << ": " << fmt(m) << "; ";
  }
  if (std::isfinite(mono))
    report.checks.push_back(make_check("cost_nonincreasing_in_batch", mono + kSlack,
                                       mono_detail.str()));
  report.checks.push_back(make_check("costs_above_ot", floor_margin,
                                     "min cost - OT + 1e-9 = " + fmt(floor_margin)));

  std::ostringstream csv;
  csv.precision(17);
  csv << "seed,batch_size,final_cost,ot_cost,wall_seconds\n";
  for (const BatchRecord& rec : report.batches)
    csv << rec.seed << ',' << rec.batch << ',' << rec.final_cost << ',' << rec.ot_cost << ','
        << rec.wall_seconds << '\n';
  report.tables["minibatch.csv"] = csv.str();
  return report;
}

// ---------------------------------------------------------------------------
// Amortized correlation.

PairFamily parse_pair_family(std::string_view name) {
  if (name == "blobs") return PairFamily::kBlobs;
  if (name == "identical") return PairFamily::kIdentical;
  if (name == "line") return PairFamily::kLine;
  throw ConfigError("unknown pair family '" + std::string(name) +
                        "' (expected blobs, identical or line)",
                    "family");
}

namespace {

constexpr double kDumbbellStd = 0.25;

// Two equal blobs at +-sep/2 along the direction `angle`.
Points dumbbell(Stream& rng, std::size_t n, double angle, double sep) {
  Points x(static_cast<Eigen::Index>(n), 2);
  const double ux = std::cos(angle), uy = std::sin(angle);
  for (std::size_t i = 0; i < n; ++i) {
    const double side = (i % 2 == 0) ? 0.5 : -0.5;
    x(static_cast<Eigen::Index>(i), 0) = side * sep * ux + kDumbbellStd * rng.normal();
    x(static_cast<Eigen::Index>(i), 1) = side * sep * uy + kDumbbellStd * rng.normal();
  }
  return x;
}

MeasurePair draw_pair(PairFamily family, Stream& rng, std::size_t n) {
  switch (family) {
    case PairFamily::kBlobs: {
      const double a = std::numbers::pi * rng.uniform();
      const double b = std::numbers::pi * rng.uniform();
      const double sa = rng.uniform(1.5, 3.0);
      const double sb = rng.uniform(1.5, 3.0);
      return {DiscreteMeasure::uniform(dumbbell(rng, n, a, sa)),
              DiscreteMeasure::uniform(dumbbell(rng, n, b, sb))};
    }
    case PairFamily::kLine: {
      const double shift = rng.uniform(-2.0, 2.0);
      const double scale = rng.uniform(0.5, 2.0);
      Points x = Points::Zero(static_cast<Eigen::Index>(n), 2);
      Points y = Points::Zero(static_cast<Eigen::Index>(n), 2);
      for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i), 0) = rng.normal();
        y(static_cast<Eigen::Index>(i), 0) = shift + scale * rng.normal();
      }
      return {DiscreteMeasure::uniform(std::move(x)), DiscreteMeasure::uniform(std::move(y))};
    }
    case PairFamily::kIdentical:
      break;
  }
  Stream fixed = Stream::derive(0, "pairs/identical", {});
  return draw_pair(PairFamily::kBlobs, fixed, n);
}

}  // namespace

PairSets make_pair_family(PairFamily family, std::size_t num_train, std::size_t num_test,
                          std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("pair size n must be >= 1", "n");
  PairSets sets;
  for (std::size_t i = 0; i < num_train; ++i) {
    Stream rng = Stream::derive(seed, "pairs/train", {i});
    sets.train.push_back(draw_pair(family, rng, n));
  }
  for (std::size_t i = 0; i < num_test; ++i) {
    Stream rng = Stream::derive(seed, "pairs/test", {i});
    sets.test.push_back(draw_pair(family, rng, n));
  }
  return sets;
}

void AmortizedStudyConfig::validate() const {
  if (num_train < 1) throw ConfigError("amortized.train_pairs must be >= 1", "train_pairs");
  if (num_test < 1) throw ConfigError("amortized.test_pairs must be >= 1", "test_pairs");
  if (n < 1) throw ConfigError("amortized.n must be >= 1", "n");
  if (jobs < 1) throw ConfigError("jobs must be >= 1", "jobs");
  const auto nn = static_cast<Eigen::Index>(n);
  amortized.validate(nn, nn);
  per_pair.validate(nn, nn);
}

std::optional<double> cost_correlation(const std::vector<double>& slicer_costs,
                                       const std::vector<double>& ot_costs) {
  try {
    return pearson(slicer_costs, ot_costs);
  } catch (const UndefinedError&) {
    return std::nullopt;
  }
}

StudyReport run_amortized_study(const AmortizedStudyConfig& cfg) {
  cfg.validate();
  return run_amortized_study(
      make_pair_family(cfg.family, cfg.num_train, cfg.num_test, cfg.n, cfg.seed), cfg);
}

StudyReport run_amortized_study(const PairSets& sets, const AmortizedStudyConfig& cfg) {
  if (sets.train.empty() || sets.test.empty())
    throw ConfigError("amortized study needs train and test pairs", "pairs");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1", "jobs");
  const double p = cfg.amortized.p;
  const Eigen::Index d = sets.train.front().first.dim();
  const ContextFn context =
      cfg.use_context ? ContextFn(moment_context) : zero_context(8 * d);
  const Eigen::Index ctx_len = 8 * d;

  // all[k]: train pairs first, then test pairs.
  std::vector<const MeasurePair*> all;
  for (const auto& q : sets.train) all.push_back(&q);
  for (const auto& q : sets.test) all.push_back(&q);
  const std::size_t total = all.size();
  const std::size_t ntrain = sets.train.size();

  std::vector<double> ot(total), per_pair(total), amort(total), random(total);
  parallel_for(total, cfg.jobs, [&](std::size_t k) {
    const MeasurePair& q = *all[k];
    ot[k] = ot_cost(q, p);
    TrainConfig tc = cfg.per_pair;
    tc.seed = derive_seed(cfg.seed, "amortized/per-pair-train", {k});
    tc.workers = 1;
    const Slicer f0 =
        Slicer::random_mlp(d, cfg.hidden, derive_seed(cfg.seed, "amortized/per-pair-init", {k}));
    const Slicer f = train_minstp(q.first, q.second, f0, tc).slicer;
    per_pair[k] = hard_cost(f, q, p);
  });

  const Slicer f0 =
      Slicer::random_mlp(d + ctx_len, cfg.hidden, derive_seed(cfg.seed, "amortized/init", {}));
  TrainConfig tc = cfg.amortized;
  tc.seed = derive_seed(cfg.seed, "amortized/train", {});
  const TrainResult trained = train_amortized(sets.train, f0, tc, context);
  for (std::size_t k = 0; k < total; ++k) {
    const MeasurePair& q = *all[k];
    const Eigen::RowVectorXd c = context(q.first, q.second);
    amort[k] = stp_cost(trained.slicer, q.first, q.second, c, p);
    random[k] = stp_cost(f0, q.first, q.second, c, p);
  }

  auto split = [&](const std::vector<double>& v, bool test) {
    return test ? std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(ntrain), v.end())
                : std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ntrain));
  };
  auto row = [&](std::string name, const std::vector<double>& v) {
    return CorrelationRow{std::move(name), cost_correlation(split(v, false), split(ot, false)),
                          cost_correlation(split(v, true), split(ot, true))};
  };

  StudyReport report;
  report.study = "amortized";
  report.correlations = {row("amortized", amort), row("per-pair", per_pair),
                         row("random", random)};
  const auto& ca = report.correlations[0].test;
  const auto& cp = report.correlations[1].test;
  const auto& cr = report.correlations[2].test;
  if (ca && cp && cr) {
    report.checks.push_back(make_check(
        "heldout_per_pair_ge_amortized", *cp - *ca + kSlack,
        "per-pair " + fmt(*cp) + ", amortized " + fmt(*ca)));
    report.checks.push_back(make_check(
        "heldout_amortized_ge_random", *ca - *cr + kSlack,
        "amortized " + fmt(*ca) + ", random " + fmt(*cr)));
  } else {
    CheckResult c;
    c.name = "heldout_correlation_defined";
    c.passed = false;
    c.margin = -1.0;
    c.detail = "correlation undefined (zero variance in costs)";
    report.checks.push_back(c);
  }
  double floor_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < total; ++k)
    for (double v : {per_pair[k], amort[k], random[k]})
      floor_margin = std::min(floor_margin, v - ot[k] + kSlack);
  report.checks.push_back(make_check("costs_above_ot", floor_margin,
                                     "min cost - OT + 1e-9 = " + fmt(floor_margin)));
  for (const CorrelationRow& r : report.correlations) {
    if (r.train) report.summary["pearson_train_" + r.slicer] = *r.train;
    if (r.test) report.summary["pearson_test_" + r.slicer] = *r.test;
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "split,index,ot_cost,amortized,per_pair,random\n";
  for (std::size_t k = 0; k < total; ++k)
    csv << (k < ntrain ? "train," : "test,") << (k < ntrain ? k : k - ntrain) << ',' << ot[k]
        << ',' << amort[k] << ',' << per_pair[k] << ',' << random[k] << '\n';
  report.tables["amortized.csv"] = csv.str();
  std::ostringstream table;
  table << "slicer,train_pearson,test_pearson\n";
  for (const CorrelationRow& r : report.correlations) {
    table << r.slicer << ',';
    table << (r.train ? fmt(*r.train) : "undefined") << ',';
    table << (r.test ? fmt(*r.test) : "undefined") << '\n';
  }
  report.tables["correlation_table.csv"] = table.str();
  return report;
}

// ---------------------------------------------------------------------------
// Theory checks.

std::pair<DiscreteMeasure, DiscreteMeasure> crossed_pair() {
  Points x(2, 2), y(2, 2);
  x << 0.0, 0.0, 1.0, 1.0;
  y << 0.0, 1.0, 1.0, 0.0;
  return {DiscreteMeasure::uniform(std::move(x)), DiscreteMeasure::uniform(std::move(y))};
}

namespace {

// Points in the unit square whose pairwise differences all make an angle with
// `theta` whose |cos| is at least `ratio`, so small perturbations of the
// projection rarely reorder them.
Points well_separated(Stream& rng, Eigen::Index n, const Eigen::Vector2d& theta,
                      double ratio) {
  Points x(n, 2);
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform();
      x(i, 1) = rng.uniform();
    }
    bool ok = true;
    for (Eigen::Index i = 0; i < n && ok; ++i)
      for (Eigen::Index j = i + 1; j < n && ok; ++j) {
        const Eigen::Vector2d diff = (x.row(i) - x.row(j)).transpose();
        ok = std::abs(theta.dot(diff)) >= ratio * diff.norm();
      }
    if (ok) return x;
  }
}

// l_p cost on the plane raised to p: |s - s'|^p + |t - t'|^p.
double plane_cost(double s, double t, double s2, double t2, double p) {
  return std::pow(std::abs(s - s2), p) + std::pow(std::abs(t - t2), p);
}

std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

double p_of(Stream& rng) {
  static constexpr double kExponents[] = {1.0, 1.5, 2.0, 3.0};
  return kExponents[rng.below(4)];
}

Slicer random_slicer(Stream& rng, Eigen::Index d) {
  const std::uint64_t s = rng();
  if (rng.below(2) == 0) {
    Slicer f = Slicer::random_linear(d, s);
    Eigen::VectorXd theta = f.parameters() * rng.uniform(0.2, 3.0);
    f.set_parameters(theta);
    return f;
  }
  return Slicer::random_mlp(d, {static_cast<int>(2 + rng.below(7))}, s);
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = 0.05;
  tc.optimizer = Optimizer::kMomentum;
  tc.alpha_fraction = 0.05;
  tc.eval_every = 10;
  tc.keep_best = true;
  return tc;
}

}  // namespace

CheckResult check_j_eta_limit(const TheoryConfig& cfg) {
  static constexpr double kEtas[] = {0.5, 0.1, 0.02};
  struct Case {
    MeasurePair pair;
    Slicer f;
  };
  std::vector<Case> cases;
  {
    Eigen::VectorXd theta(2);
    theta << 1.0, 0.0;
    cases.push_back({crossed_pair(), Slicer::linear(theta)});
  }
  for (std::size_t k = 0; k < cfg.random_pairs; ++k) {
    Stream rng = Stream::derive(cfg.seed, "theory/j-eta/pair", {k});
    const Slicer f = Slicer::random_linear(2, rng());
    const Eigen::Vector2d theta = f.parameters();
    Points x = well_separated(rng, 5, theta, 0.25);
    Points y = well_separated(rng, 5, theta, 0.25);
    cases.push_back({{DiscreteMeasure::uniform(std::move(x)), DiscreteMeasure::uniform(std::move(y))},
                     f});
  }
  double margin = std::numeric_limits<double>::infinity();
  std::ostringstream detail;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const Case& cs = cases[c];
    const double stp = hard_cost(cs.f, cs.pair, 2.0);
    double prev_gap = 0.0, prev_se = 0.0;
    for (std::size_t e = 0; e < 3; ++e) {
      PerturbationConfig pc;
      pc.eta = kEtas[e];
      pc.num_samples = cfg.mc_samples;
      pc.seed = derive_seed(cfg.seed, "theory/j-eta/mc", {c, e});
      const JEtaEstimate est =
          estimate_J_eta(cs.f, cs.pair.first, cs.pair.second, pc, 2.0, cfg.jobs);
      const double gap = std::abs(est.mean - stp);
      if (e > 0) {
        const double tol = 2.0 * std::hypot(prev_se, est.std_error);
        margin = std::min(margin, prev_gap + tol - gap);
      }
      if (e == 2) margin = std::min(margin, 3.0 * est.std_error + 1e-12 - gap);
      prev_gap = gap;
      prev_se = est.std_error;
    }
    if (c == 0) detail << "crossed pair STP " << fmt(stp) << "; ";
  }
  detail << cases.size() << " cases, worst slack " << fmt(margin);
  return make_check("j_eta_limit", margin, detail.str());
}

CheckResult check_pushforward_lipschitz(const TheoryConfig& cfg) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.lemma_instances; ++k) {
    Stream rng = Stream::derive(cfg.seed, "theory/lipschitz", {k});
    const auto n = static_cast<Eigen::Index>(2 + rng.below(11));
    const double p = p_of(rng);
    const MeasurePair pair{DiscreteMeasure::uniform(gaussian_points(rng, n, 2, 1.0, 0.0)),
                           DiscreteMeasure::uniform(gaussian_points(rng, n, 2, 1.5, 0.5))};
    const Slicer f = random_slicer(rng, 2);
    const double lhs = pth_root(ot_1d_uniform_cost(to_vector(f.eval(pair.first.points())),
                                                   to_vector(f.eval(pair.second.points())), p),
                                p);
    const double rhs = f.lipschitz_bound() * pth_root(ot_cost(pair, p), p);
    margin = std::min(margin, rhs - lhs + kSlack);
  }
  return make_check("pushforward_lipschitz", margin,
                    std::to_string(cfg.lemma_instances) + " instances, min slack " + fmt(margin));
}

CheckResult check_pushforward_sup(const TheoryConfig& cfg) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.lemma_instances; ++k) {
    Stream rng = Stream::derive(cfg.seed, "theory/sup", {k});
    const auto n = static_cast<Eigen::Index>(1 + rng.below(12));
    const double p = p_of(rng);
    const Points x = gaussian_points(rng, n, 2, 1.0, 0.0);
    const Slicer f = random_slicer(rng, 2);
    const Slicer g = random_slicer(rng, 2);
    const Eigen::VectorXd fx = f.eval(x), gx = g.eval(x);
    // The supremum over the support is the tightest admissible right side.
    const double sup = (fx - gx).cwiseAbs().maxCoeff();
    const double lhs = pth_root(ot_1d_uniform_cost(to_vector(fx), to_vector(gx), p), p);
    margin = std::min(margin, sup - lhs + kSlack);
  }
  return make_check("pushforward_sup", margin,
                    std::to_string(cfg.lemma_instances) + " instances, min slack " + fmt(margin));
}

CheckResult check_coupling_quantile(const TheoryConfig& cfg) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.lemma_instances; ++k) {
    Stream rng = Stream::derive(cfg.seed, "theory/coupling", {k});
    const std::size_t n = 1 + rng.below(10);
    const double p = p_of(rng);
    auto draw = [&](double scale, double shift) {
      std::vector<double> v(n);
      for (double& x : v) x = shift + scale * rng.normal();
      return sorted_copy(std::move(v));
    };
    const auto mu1 = draw(1.0, 0.0), nu1 = draw(1.5, 1.0);
    const auto mu2 = draw(1.2, 0.3), nu2 = draw(0.8, -0.5);
    // Optimal 1D couplings pair sorted atoms; W_p between them on the plane.
    Eigen::MatrixXd c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            plane_cost(mu1[a], nu1[a], mu2[b], nu2[b], p);
    const auto match = solve_assignment(c);
    double exact = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      exact += c(static_cast<Eigen::Index>(a), match[a]);
    exact /= static_cast<double>(n);
    const double rhs = pth_root(ot_1d_uniform_cost(mu1, mu2, p) + ot_1d_uniform_cost(nu1, nu2, p), p);
    margin = std::min(margin, rhs - pth_root(exact, p) + kSlack);
  }
  return make_check("coupling_quantile", margin,
                    std::to_string(cfg.lemma_instances) + " instances, min slack " + fmt(margin));
}

namespace {

struct EstimatorSetup {
  Points x, y;
  Slicer f = Slicer::random_linear(2, 0);
  double range = 0.0;  // max cost entry
};

EstimatorSetup estimator_setup(std::uint64_t seed) {
  Stream rng = Stream::derive(seed, "theory/estimator", {});
  EstimatorSetup s;
  s.x = gaussian_points(rng, 64, 2, 1.0, 0.0);
  s.y = gaussian_points(rng, 64, 2, 1.0, 1.0);
  s.f = Slicer::random_linear(2, rng());
  s.range = pairwise_cost(s.x, s.y, 2.0).maxCoeff();
  return s;
}

constexpr std::size_t kEstimatorBatch = 8;

}  // namespace

CheckResult check_hoeffding_coverage(const TheoryConfig& cfg) {
  constexpr double kDelta = 0.1;
  constexpr std::size_t kBatches = 20;
  const EstimatorSetup s = estimator_setup(cfg.seed);
  const double reference =
      incomplete_estimator(s.f, s.x, s.y, kEstimatorBatch, 10000,
                           derive_seed(cfg.seed, "theory/hoeffding/reference", {}), 2.0)
          .mean;
  const double radius =
      s.range * std::sqrt(std::log(2.0 / kDelta) / (2.0 * static_cast<double>(kBatches)));
  std::vector<int> covered(cfg.hoeffding_trials, 0);
  parallel_for(cfg.hoeffding_trials, cfg.jobs, [&](std::size_t t) {
    const double m = incomplete_estimator(s.f, s.x, s.y, kEstimatorBatch, kBatches,
                                          derive_seed(cfg.seed, "theory/hoeffding", {t}), 2.0)
                         .mean;
    covered[t] = std::abs(m - reference) <= radius ? 1 : 0;
  });
  double hits = 0.0;
  for (int c : covered) hits += c;
  const double coverage = hits / static_cast<double>(cfg.hoeffding_trials);
  return make_check("hoeffding_coverage", coverage - (1.0 - kDelta),
                    "coverage " + fmt(coverage) + " over " +
                        std::to_string(cfg.hoeffding_trials) + " trials, radius " + fmt(radius));
}

CheckResult check_variance_ratio(const TheoryConfig& cfg) {
  const EstimatorSetup s = estimator_setup(cfg.seed);
  const std::size_t R = cfg.variance_reruns;
  std::vector<double> small(R), large(R);
  parallel_for(R, cfg.jobs, [&](std::size_t r) {
    small[r] = incomplete_estimator(s.f, s.x, s.y, kEstimatorBatch, 10,
                                    derive_seed(cfg.seed, "theory/variance", {r, 10}), 2.0)
                   .mean;
    large[r] = incomplete_estimator(s.f, s.x, s.y, kEstimatorBatch, 40,
                                    derive_seed(cfg.seed, "theory/variance", {r, 40}), 2.0)
                   .mean;
  });
  const double a = std_of(small), b = std_of(large);
  const double ratio = (a * a) / (b * b);
  return make_check("variance_ratio", std::min(ratio - 2.5, 6.0 - ratio),
                    "Var(K=10)/Var(K=40) = " + fmt(ratio) + " over " + std::to_string(R) +
                        " reruns");
}

CheckResult check_sandwich(const TheoryConfig& cfg) {
  static constexpr Eigen::Index kSizes[] = {8, 16, 32};
  const std::size_t P = cfg.sandwich_pairs;
  std::vector<double> lower(P), upper(P);
  parallel_for(P, cfg.jobs, [&](std::size_t k) {
    Stream rng = Stream::derive(cfg.seed, "theory/sandwich", {k});
    const Eigen::Index n = kSizes[k % 3];
    const MeasurePair pair{
        DiscreteMeasure::uniform(gaussian_points(rng, n, 2, 1.0, 0.0)),
        DiscreteMeasure::uniform(gaussian_points(rng, n, 2, rng.uniform(0.5, 2.0),
                                                 rng.uniform(-1.0, 1.0)))};
    const Slicer f0 = Slicer::random_mlp(2, {16}, rng());
    TrainConfig tc = small_train(60);
    tc.seed = rng();
    const Slicer f = train_minstp(pair.first, pair.second, f0, tc).slicer;
    const double ot = ot_cost(pair, 2.0);
    const double trained = hard_cost(f, pair, 2.0);
    const double random = hard_cost(f0, pair, 2.0);
    lower[k] = trained - ot;
    upper[k] = random - trained;
  });
  const double lo = *std::min_element(lower.begin(), lower.end());
  const double hi = *std::min_element(upper.begin(), upper.end());
  return make_check("sandwich", std::min(lo, hi) + kSlack,
                    std::to_string(P) + " pairs; min STP(trained) - OT = " + fmt(lo) +
                        ", min STP(random) - STP(trained) = " + fmt(hi));
}

double probe_distance(const Slicer& f, const Slicer& g, const std::array<double, 4>& box) {
  if (f.input_dim() != 2 || g.input_dim() != 2)
    throw DimensionError("probe grid is defined for planar slicers");
  constexpr int kGrid = 64;
  Points grid(kGrid * kGrid, 2);
  for (int i = 0; i < kGrid; ++i)
    for (int j = 0; j < kGrid; ++j) {
      grid(i * kGrid + j, 0) = box[0] + (box[1] - box[0]) * i / (kGrid - 1.0);
      grid(i * kGrid + j, 1) = box[2] + (box[3] - box[2]) * j / (kGrid - 1.0);
    }
  const Eigen::VectorXd a = f.eval(grid), b = g.eval(grid);
  return std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff());
}

CheckResult check_transferability_trend(const TheoryConfig& cfg) {
  static constexpr double kDrifts[] = {0.2, 0.1, 0.05};
  constexpr std::size_t kSeeds = 3;
  std::vector<std::array<double, 3>> dist(kSeeds);
  parallel_for(kSeeds, cfg.jobs, [&](std::size_t s) {
    DatasetSpec spec;
    spec.family = Family::kGaussianBlobs;
    spec.n = 128;
    spec.seed = derive_seed(cfg.seed, "theory/transfer/data", {s});
    const MeasurePair base = generate_pair(spec);
    Points all(base.first.size() + base.second.size(), 2);
    all << base.first.points(), base.second.points();
    const std::array<double, 4> box = {all.col(0).minCoeff(), all.col(0).maxCoeff(),
                                       all.col(1).minCoeff(), all.col(1).maxCoeff()};
    TrainConfig tc = small_train(200);
    tc.keep_best = false;
    tc.seed = derive_seed(cfg.seed, "theory/transfer/train", {s});
    const Slicer f1 =
        train_minstp(base.first, base.second,
                     Slicer::random_linear(2, derive_seed(cfg.seed, "theory/transfer/init", {s})),
                     tc)
            .slicer;
    for (std::size_t k = 0; k < 3; ++k) {
      spec.drift = Drift{kDrifts[k], 1.0};
      const MeasurePair moved = generate_pair(spec);
      const Slicer f2 = train_minstp(moved.first, moved.second, f1, tc).slicer;
      dist[s][k] = probe_distance(f1, f2, box);
    }
  });
  std::array<double, 3> med{};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> v;
    for (std::size_t s = 0; s < kSeeds; ++s) v.push_back(dist[s][k]);
    med[k] = median_of(v);
  }
  const double margin = std::min(med[0] - med[1], med[1] - med[2]);
  return make_check("transferability_trend", margin,
                    "median probe distance at drift 0.2 / 0.1 / 0.05 rad: " + fmt(med[0]) +
                        " / " + fmt(med[1]) + " / " + fmt(med[2]));
}

StudyReport run_theory_suite(const TheoryConfig& cfg) {
  StudyReport report;
  report.study = "theory";
  using Fn = CheckResult (*)(const TheoryConfig&);
  static constexpr Fn kChecks[] = {check_j_eta_limit,         check_pushforward_lipschitz,
                                   check_pushforward_sup,     check_coupling_quantile,
                                   check_hoeffding_coverage,  check_variance_ratio,
                                   check_sandwich,            check_transferability_trend};
  for (Fn fn : kChecks) {
    const auto t0 = Clock::now();
    CheckResult c = fn(cfg);
    report.summary["seconds_" + c.name] = seconds_since(t0);
    report.checks.push_back(std::move(c));
  }
  // Bound calculator on the hand example.
  CheckResult c;
  c.name = "stability_constant";
  const double value = stability_constant(1.0, 0.5, 2, 0.1, 1.0, 2);
  const double expected = 2.0 * std::sqrt(2.0) * 2.1 / (std::log(2.0) - 0.1);
  c.margin = 1e-6 - std::abs(value - expected);
  c.passed = c.margin >= 0.0;
  c.detail = "C = " + fmt(value);
  report.checks.push_back(c);
  report.summary["stability_constant_example"] = value;
  return report;
}

double stability_constant(double eta, double delta, std::size_t points, double lipschitz,
                          double diam, std::size_t dim) {
  if (!(eta > 0.0)) throw ParameterError("eta must be > 0");
  if (!(delta > 0.0)) throw ParameterError("delta must be > 0");
  if (!(lipschitz >= 0.0)) throw ParameterError("Lipschitz constant must be >= 0");
  if (!(diam >= 0.0)) throw ParameterError("diameter must be >= 0");
  if (points < 2) throw ParameterError("need at least two points (B' = B(B-1)/2 >= 1)");
  const double pairs = static_cast<double>(points) * static_cast<double>(points - 1) / 2.0;
  const double ratio = delta / pairs;
  if (ratio >= 1.0)
    throw ParameterError("delta / B' = " + fmt(ratio) + " >= 1: t = -ln(1 - delta/B') undefined");
  const double t = -std::log1p(-ratio);
  if (eta * t <= lipschitz)
    throw InfeasibleError("infeasible regime: eta * t = " + fmt(eta * t) +
                          " <= L = " + fmt(lipschitz));
  return 2.0 * std::sqrt(2.0) * diam * (lipschitz + eta * std::sqrt(2.0 * static_cast<double>(dim))) /
         (eta * t - lipschitz);
}

}  // namespace minstp
