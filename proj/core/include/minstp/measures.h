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

#ifndef MINSTP_MEASURES_H_
#define MINSTP_MEASURES_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

namespace minstp {

// n x d, one point per row.
using Points = Eigen::MatrixXd;

// Weighted point set in R^d. Weights are nonnegative and sum to one.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Points points, Eigen::VectorXd weights);

  static DiscreteMeasure uniform(Points points);

  const Points& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }

  bool is_uniform(double tol = 1e-12) const;
  Eigen::RowVectorXd centroid() const;

 private:
  Points points_;
  Eigen::VectorXd weights_;
};

// entries(i, j) = ||x_i - y_j||_2^p.
struct CostMatrix {
  Eigen::MatrixXd entries;
  double p = 2.0;
};

CostMatrix cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       double p);
Eigen::MatrixXd pairwise_cost(const Points& x, const Points& y, double p);
double ground_cost(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                   const Eigen::Ref<const Eigen::RowVectorXd>& y, double p);

enum class Family { kMoonsGaussians, kRings, kGaussianBlobs, kFile };

// Accepts "two-moons-plus-eight-gaussians" (alias "moons"), "rings",
// "gaussian-blobs" (alias "blobs") and "file". Throws ConfigError otherwise.
Family parse_family(std::string_view name);
std::string_view family_name(Family family);

// Rotation (radians) in the plane of the first two coordinates followed by
// isotropic scaling, both about a center point.
struct Drift {
  double rotation = 0.0;
  double zoom = 1.0;

  // Drift by (a.rotation + b.rotation, a.zoom * b.zoom).
  friend Drift compose(const Drift& a, const Drift& b) {
    return {a.rotation + b.rotation, a.zoom * b.zoom};
  }
};

// Each family is a source/target template pair. `side` selects which half of
// the template a single-measure `generate` call returns.
enum class Side { kSource, kTarget };

struct DatasetSpec {
  Family family = Family::kRings;
  std::size_t n = 256;
  std::uint64_t seed = 0;
  std::optional<Drift> drift;
  Side side = Side::kSource;
  std::string path;  // family == kFile only
};

// Uniform weights. Drift is applied about the measure's own centroid.
DiscreteMeasure generate(const DatasetSpec& spec);

// Source and target of the family template. Drift is applied about the joint
// centroid so the pair moves rigidly.
std::pair<DiscreteMeasure, DiscreteMeasure> generate_pair(
    const DatasetSpec& spec);

Points apply_drift(const Points& points, const Drift& drift,
                   const Eigen::RowVectorXd& center);

enum class PointFormat { kCsv, kJson };

// ".json" maps to kJson, anything else to kCsv.
PointFormat format_from_path(std::string_view path);

// CSV: no header, one point per row, d comma-separated numbers.
// JSON: {"points": [[...], ...], "weights": [...]}; weights are optional.
DiscreteMeasure parse_points(std::string_view text, PointFormat format);
std::string format_points(const DiscreteMeasure& measure, PointFormat format);

DiscreteMeasure load_points(const std::string& path, PointFormat format);
void save_points(const DiscreteMeasure& measure, const std::string& path,
                 PointFormat format);

}  // namespace minstp

#endif  // MINSTP_MEASURES_H_
