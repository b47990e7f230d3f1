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

#ifndef MINSTP_EXPERIMENTS_H_
#define MINSTP_EXPERIMENTS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "minstp/measures.h"
#include "minstp/slicer.h"
#include "minstp/train.h"

namespace minstp {

struct CheckResult {
  std::string name;
  bool passed = false;
  // Signed distance to the failure boundary in the check's own units;
  // negative when failing.
  double margin = 0.0;
  std::string detail;
};

struct TaskRecord {
  std::size_t task = 0;  // 1-based
  double ot_cost = 0.0;
  std::vector<double> init_random;      // one per run
  std::vector<double> init_pretrained;  // one per run; empty for task 1
  std::vector<double> trained;          // one per run
  double wall_seconds = 0.0;

  double init_random_mean() const;
  double init_random_std() const;
  std::optional<double> init_pretrained_mean() const;
  double trained_mean() const;
};

struct BatchRecord {
  std::uint64_t seed = 0;
  std::size_t batch = 0;  // equals n for the full-batch run
  double final_cost = 0.0;
  double ot_cost = 0.0;
  double wall_seconds = 0.0;
};

// One Table-1 row: Pearson correlation of slicer costs against exact OT
// costs; nullopt marks an undefined correlation (zero variance).
struct CorrelationRow {
  std::string slicer;
  std::optional<double> train;
  std::optional<double> test;
};

struct StudyReport {
  std::string study;
  std::vector<TaskRecord> tasks;
  std::vector<BatchRecord> batches;
  std::vector<CorrelationRow> correlations;
  std::vector<CheckResult> checks;
  std::map<std::string, double> summary;
  // File name -> CSV content, written next to report.json by the CLI.
  std::map<std::string, std::string> tables;

  bool all_passed() const;
};

std::string report_to_json(const StudyReport& report);

// Training schedules the studies default to. Momentum with cosine decay; the
// step sizes were tuned on the default families and sizes.
TrainConfig drift_schedule();             // full batch, 200 epochs
TrainConfig minibatch_full_schedule();    // full batch, 1000 epochs
TrainConfig minibatch_batch_schedule();   // B = 64 style, 2000 epochs, k = 16
TrainConfig amortized_schedule();         // 2000 pair-steps
TrainConfig per_pair_schedule();          // 200 epochs per pair

// ---------------------------------------------------------------------------
// Drift transferability.

struct DriftStudyConfig {
  std::size_t num_tasks = 7;
  double rotation = 0.0872664626;  // radians per step (5 degrees)
  double zoom = 1.05;              // scale factor per step
  std::size_t n = 256;
  std::size_t runs = 5;
  Family family = Family::kMoonsGaussians;
  std::vector<int> hidden = {32, 32};
  TrainConfig train = drift_schedule();
  std::uint64_t seed = 0;  // data seed; run r uses slicer seeds derived from it
  std::size_t jobs = 1;

  void validate() const;
};

// Task t is the base pair drifted t - 1 times about its joint centroid. For
// t >= 2 the random and the previous task's trained slicer are scored with
// the hard lift before any optimisation; the latter is then fine-tuned.
StudyReport run_drift_study(const DriftStudyConfig& cfg);

// ---------------------------------------------------------------------------
// Mini-batch fidelity.

struct MinibatchStudyConfig {
  Family family = Family::kRings;
  std::size_t n = 1024;
  std::vector<std::size_t> batch_sizes = {64};
  std::vector<int> hidden = {32, 32};
  // Full-batch schedule (batch size and k are overridden).
  TrainConfig full = minibatch_full_schedule();
  // Schedule for every B < n (batch size overridden).
  TrainConfig batch = minibatch_batch_schedule();
  std::vector<std::uint64_t> seeds = {0};
  bool export_plans = true;
  std::size_t jobs = 1;

  void validate() const;
};

StudyReport run_minibatch_study(const MinibatchStudyConfig& cfg);

// ---------------------------------------------------------------------------
// Amortized correlation.

enum class PairFamily {
  kBlobs,      // two-blob source and target, random axis angle and separation
  kIdentical,  // every pair is the same
  kLine,       // both measures on the first axis (second coordinate zero)
};

PairFamily parse_pair_family(std::string_view name);

struct PairSets {
  std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>> train;
  std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>> test;
};

PairSets make_pair_family(PairFamily family, std::size_t num_train,
                          std::size_t num_test, std::size_t n, std::uint64_t seed);

struct AmortizedStudyConfig {
  PairFamily family = PairFamily::kBlobs;
  std::size_t num_train = 20;
  std::size_t num_test = 20;
  std::size_t n = 64;
  std::vector<int> hidden = {32, 32};
  TrainConfig amortized = amortized_schedule();  // epochs count pair-steps
  TrainConfig per_pair = per_pair_schedule();
  bool use_context = true;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
};

// Pearson correlation of {hard-lift cost} against {exact OT cost}.
std::optional<double> cost_correlation(
    const std::vector<double>& slicer_costs, const std::vector<double>& ot_costs);

StudyReport run_amortized_study(const PairSets& pairs, const AmortizedStudyConfig& cfg);
StudyReport run_amortized_study(const AmortizedStudyConfig& cfg);

// ---------------------------------------------------------------------------
// Theory checks. Each returns a pass/fail entry with its margin.

struct TheoryConfig {
  std::uint64_t seed = 0;
  std::size_t sandwich_pairs = 200;
  std::size_t lemma_instances = 500;
  std::size_t hoeffding_trials = 200;
  std::size_t variance_reruns = 50;
  std::size_t mc_samples = 2000;
  std::size_t random_pairs = 10;
  std::size_t jobs = 1;
};

// |J_eta - STP| shrinks along eta = 0.5, 0.1, 0.02 (within Monte Carlo error)
// and ends below three standard errors, on the crossed pair and random pairs.
CheckResult check_j_eta_limit(const TheoryConfig& cfg);
// W_p(f#k, f#k') <= L W_p(k, k').
CheckResult check_pushforward_lipschitz(const TheoryConfig& cfg);
// W_p(f#k, g#k) <= sup |f - g|.
CheckResult check_pushforward_sup(const TheoryConfig& cfg);
// W_p(gamma_1, gamma_2) <= (W_p(mu_1, mu_2)^p + W_p(nu_1, nu_2)^p)^(1/p) for
// optimal 1D couplings, l_p ground metric on the plane.
CheckResult check_coupling_quantile(const TheoryConfig& cfg);
// Two-sided Hoeffding bound for the incomplete estimator.
CheckResult check_hoeffding_coverage(const TheoryConfig& cfg);
// Var at K = 10 over Var at K = 40 lies in [2.5, 6].
CheckResult check_variance_ratio(const TheoryConfig& cfg);
// OT <= STP(trained) <= STP(random init) on random pairs.
CheckResult check_sandwich(const TheoryConfig& cfg);
// Median probe-grid distance between consecutive optimal slicers shrinks with
// the drift angle.
CheckResult check_transferability_trend(const TheoryConfig& cfg);

StudyReport run_theory_suite(const TheoryConfig& cfg);

// The crossed two-point pair: {(0,0), (1,1)} against {(0,1), (1,0)}.
std::pair<DiscreteMeasure, DiscreteMeasure> crossed_pair();

// max_x |f(x) - g(x)| over a 64 x 64 grid on `box` = [lo_x, hi_x, lo_y, hi_y],
// minimised over the sign of g.
double probe_distance(const Slicer& f, const Slicer& g, const std::array<double, 4>& box);

// 2 sqrt(2) diam (L + eta sqrt(2 d)) / (eta t - L) with
// t = -ln(1 - delta / B'), B' = B (B - 1) / 2. Throws InfeasibleError when
// eta t <= L and ParameterError when delta / B' >= 1.
double stability_constant(double eta, double delta, std::size_t points, double lipschitz,
                          double diam, std::size_t dim);

}  // namespace minstp

#endif  // MINSTP_EXPERIMENTS_H_
