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

#ifndef MINSTP_TRAIN_H_
#define MINSTP_TRAIN_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "minstp/measures.h"
#include "minstp/slicer.h"

namespace minstp {

enum class Optimizer { kGradientDescent, kMomentum };

struct TrainConfig {
  std::size_t epochs = 200;                // E
  std::size_t batch_size = 0;              // B; 0 means min(N, M)
  std::size_t batches_per_epoch = 1;       // k
  double lr = 1e-2;
  // Cosine decay of the step size from lr down to lr * lr_final_fraction
  // over the run; 1 keeps it constant.
  double lr_final_fraction = 1.0;
  // LapSum alpha as a fraction of the projected batch spread (max - min),
  // floored at 1e-8. Resolved per batch and per side.
  double alpha_fraction = 0.05;
  Optimizer optimizer = Optimizer::kGradientDescent;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double p = 2.0;
  // One update per mini-batch instead of one averaged update per epoch.
  bool per_batch_update = false;
  // Record the full-batch hard-lift cost every t epochs (0: final only).
  std::size_t eval_every = 0;
  // Return the evaluated snapshot (initial one included) with the lowest
  // full-batch cost instead of the final parameters.
  bool keep_best = false;
  std::size_t workers = 1;

  // Throws ConfigError naming the offending field.
  void validate(Eigen::Index n, Eigen::Index m) const;
  std::size_t resolved_batch(Eigen::Index n, Eigen::Index m) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double minibatch_loss = 0.0;        // mean over the epoch's k batches
  std::optional<double> full_cost;    // hard-lift cost of the pre-update snapshot
  double wall_seconds = 0.0;          // since training started
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;    // one per epoch
  double initial_cost = 0.0;          // full-batch cost of f0
  double final_cost = 0.0;            // full-batch cost of the returned slicer
  std::size_t best_epoch = 0;         // epoch whose snapshot was returned
};

// One JSON object per epoch.
std::string trace_to_jsonl(const TrainTrace& trace);

struct TrainResult {
  Slicer slicer;
  TrainTrace trace;
};

// h_B: sort both batches by f, pair by rank, average c^p.
double minibatch_kernel(const Slicer& f, const Points& xs, const Points& yt, double p);

struct IncompleteEstimate {
  double mean = 0.0;
  std::vector<double> values;  // one kernel value per batch pair
};

// Average of K kernel evaluations on index subsets drawn uniformly without
// replacement (independently across batch pairs).
IncompleteEstimate incomplete_estimator(const Slicer& f, const Points& x,
                                        const Points& y, std::size_t batch,
                                        std::size_t count, std::uint64_t seed,
                                        double p);

// Mini-batch min-STP training. Per epoch: k batch pairs, two-branch LapSum
// loss on each, gradients summed, one step with the averaged gradient.
// Full-batch training is B = N = M, k = 1.
TrainResult train_minstp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const Slicer& f0, const TrainConfig& cfg);

// Descriptor appended to every point of a pair before slicing.
using ContextFn =
    std::function<Eigen::RowVectorXd(const DiscreteMeasure&, const DiscreteMeasure&)>;

// Per measure: mean, per-axis std and the top two principal directions (unit,
// sign fixed so the largest-magnitude component is positive), 4d values.
// The pair descriptor concatenates source and target, 8d values.
Eigen::RowVectorXd moment_descriptor(const DiscreteMeasure& m);
Eigen::RowVectorXd moment_context(const DiscreteMeasure& mu, const DiscreteMeasure& nu);
ContextFn zero_context(Eigen::Index length);

Points with_context(const Points& x, const Eigen::RowVectorXd& context);

// Hard-lift cost of a context-conditioned slicer on a pair.
double stp_cost(const Slicer& f, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                const Eigen::RowVectorXd& context, double p);

// One slicer for a family of pairs. Each of the cfg.epochs steps picks a pair
// uniformly and applies one training epoch to it with context-augmented
// inputs (batch draws follow the same schedule as train_minstp).
TrainResult train_amortized(
    const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& pairs,
    const Slicer& f0, const TrainConfig& cfg, const ContextFn& context_fn);

}  // namespace minstp

#endif  // MINSTP_TRAIN_H_
