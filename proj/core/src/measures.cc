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

#include "minstp/measures.h"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "minstp/error.h"
#include "minstp/random.h"

namespace minstp {
namespace {

constexpr double kWeightTol = 1e-12;

// Template geometry. Sources sit near the origin; targets are displaced or
// rearranged so the optimal coupling is far from the identity.
constexpr double kMoonNoise = 0.05;
constexpr double kEightGaussianRadius = 2.0;
constexpr double kEightGaussianStd = 0.1;
constexpr double kRingTargetRadius = 2.0;
constexpr double kRingTargetOffset = 0.0;
constexpr double kBlobStd = 0.3;
constexpr double kBlobSource[3][2] = {{-1.5, 0.0}, {1.5, 0.0}, {0.0, 1.5}};
constexpr double kBlobTarget[3][2] = {{0.0, -1.5}, {2.0, 1.0}, {-1.5, 1.5}};

Points two_moons(std::size_t n, Stream& rng) {
  Points pts(static_cast<Eigen::Index>(n), 2);
  const std::size_t outer = (n + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::numbers::pi * rng.uniform();
    double x, y;
    if (i < outer) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    // Center the template near the origin.
    pts(i, 0) = x - 0.5 + kMoonNoise * rng.normal();
    pts(i, 1) = y - 0.25 + kMoonNoise * rng.normal();
  }
  return pts;
}

Points eight_gaussians(std::size_t n, Stream& rng) {
  Points pts(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = std::numbers::pi / 4.0 * static_cast<double>(i % 8);
    pts(i, 0) = kEightGaussianRadius * std::cos(angle) +
                kEightGaussianStd * rng.normal();
    pts(i, 1) = kEightGaussianRadius * std::sin(angle) +
                kEightGaussianStd * rng.normal();
  }
  return pts;
}

Points ring(std::size_t n, double radius, double cx, Stream& rng) {
  Points pts(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    pts(i, 0) = cx + radius * std::cos(angle);
    pts(i, 1) = radius * std::sin(angle);
  }
  return pts;
}

Points blobs(std::size_t n, const double (&centers)[3][2], Stream& rng) {
  Points pts(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = static_cast<std::size_t>(rng.below(3));
    pts(i, 0) = centers[c][0] + kBlobStd * rng.normal();
    pts(i, 1) = centers[c][1] + kBlobStd * rng.normal();
  }
  return pts;
}

Points template_points(const DatasetSpec& spec, Side side) {
  const bool source = side == Side::kSource;
  Stream rng = Stream::derive(spec.seed, "measures/generate",
                              {static_cast<std::uint64_t>(spec.family),
                               source ? 0ULL : 1ULL});
  switch (spec.family) {
    case Family::kMoonsGaussians:
      return source ? two_moons(spec.n, rng) : eight_gaussians(spec.n, rng);
    case Family::kRings:
      return source ? ring(spec.n, 1.0, 0.0, rng)
                    : ring(spec.n, kRingTargetRadius, kRingTargetOffset, rng);
    case Family::kGaussianBlobs:
      return blobs(spec.n, source ? kBlobSource : kBlobTarget, rng);
    case Family::kFile:
      break;
  }
  throw ConfigError("family 'file' has no generator template", "family");
}

void validate(const DatasetSpec& spec) {
  if (spec.family != Family::kFile && spec.n < 1)
    throw ConfigError("dataset size n must be >= 1", "n");
  if (spec.drift && !(spec.drift->zoom > 0.0))
    throw ConfigError("drift zoom factor must be > 0", "zoom");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front())))
    field.remove_prefix(1);
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back())))
    field.remove_suffix(1);
  if (field.empty()) return false;
  std::string s(field);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

DiscreteMeasure parse_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++row_no;
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (start > text.size()) break;
      continue;
    }
    std::vector<double> row;
    std::size_t fs = 0;
    while (true) {
      std::size_t fe = line.find(',', fs);
      std::string_view field =
          line.substr(fs, fe == std::string_view::npos ? line.size() - fs : fe - fs);
      double v;
      if (!parse_double(field, v))
        throw ParseError("non-numeric field at row " + std::to_string(row_no),
                         row_no);
      row.push_back(v);
      if (fe == std::string_view::npos) break;
      fs = fe + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("ragged row " + std::to_string(row_no) + ": expected " +
                           std::to_string(rows.front().size()) +
                           " columns, got " + std::to_string(row.size()),
                       row_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no points in input", 0);
  Points pts(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) pts(i, j) = rows[i][j];
  return DiscreteMeasure::uniform(std::move(pts));
}

DiscreteMeasure parse_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
  if (!doc.is_object() || !doc.contains("points") || !doc["points"].is_array())
    throw ParseError("JSON point file needs a \"points\" array", 0);
  const auto& arr = doc["points"];
  if (arr.empty()) throw ParseError("no points in input", 0);
  std::size_t d = 0;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_array())
      throw ParseError("point " + std::to_string(i + 1) + " is not an array",
                       i + 1);
    if (i == 0) d = arr[i].size();
    if (arr[i].size() != d)
      throw ParseError("ragged row " + std::to_string(i + 1), i + 1);
  }
  Points pts(static_cast<Eigen::Index>(arr.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < arr.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (!arr[i][j].is_number())
        throw ParseError("non-numeric field at row " + std::to_string(i + 1),
                         i + 1);
      pts(i, j) = arr[i][j].get<double>();
    }
  if (!doc.contains("weights")) return DiscreteMeasure::uniform(std::move(pts));
  const auto& w = doc["weights"];
  if (!w.is_array() || w.size() != arr.size())
    throw ParseError("\"weights\" must have one entry per point", 0);
  Eigen::VectorXd weights(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!w[i].is_number())
      throw ParseError("non-numeric weight at row " + std::to_string(i + 1),
                       i + 1);
    weights(i) = w[i].get<double>();
  }
  return DiscreteMeasure(std::move(pts), std::move(weights));
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(Points points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() < 1) throw ConfigError("a measure needs at least one point");
  if (points_.cols() < 1) throw DimensionError("points must have dimension >= 1");
  if (weights_.size() != points_.rows())
    throw DimensionError("weights and points differ in length");
  if (!points_.allFinite() || !weights_.allFinite())
    throw ParameterError("points and weights must be finite");
  if ((weights_.array() < 0.0).any())
    throw ParameterError("weights must be nonnegative");
  if (std::abs(weights_.sum() - 1.0) > kWeightTol)
    throw ParameterError("weights must sum to 1");
}

DiscreteMeasure DiscreteMeasure::uniform(Points points) {
  const Eigen::Index n = points.rows();
  if (n < 1) throw ConfigError("a measure needs at least one point");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return DiscreteMeasure(std::move(points), std::move(w));
}

bool DiscreteMeasure::is_uniform(double tol) const {
  const double u = 1.0 / static_cast<double>(size());
  return ((weights_.array() - u).abs() <= tol).all();
}

Eigen::RowVectorXd DiscreteMeasure::centroid() const {
  return weights_.transpose() * points_;
}

double ground_cost(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                   const Eigen::Ref<const Eigen::RowVectorXd>& y, double p) {
  const double sq = (x - y).squaredNorm();
  if (p == 2.0) return sq;
  return std::pow(std::sqrt(sq), p);
}

Eigen::MatrixXd pairwise_cost(const Points& x, const Points& y, double p) {
  if (x.cols() != y.cols())
    throw DimensionError("cost matrix: dimension mismatch (" +
                         std::to_string(x.cols()) + " vs " +
                         std::to_string(y.cols()) + ")");
  if (!(p >= 1.0)) throw ParameterError("cost exponent p must be >= 1");
  Eigen::MatrixXd c(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < y.rows(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      c(i, j) = ground_cost(x.row(i), y.row(j), p);
  return c;
}

CostMatrix cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       double p) {
  return {pairwise_cost(mu.points(), nu.points(), p), p};
}

Family parse_family(std::string_view name) {
  if (name == "two-moons-plus-eight-gaussians" || name == "moons")
    return Family::kMoonsGaussians;
  if (name == "rings") return Family::kRings;
  if (name == "gaussian-blobs" || name == "blobs") return Family::kGaussianBlobs;
  if (name == "file") return Family::kFile;
  throw ConfigError("unknown dataset family '" + std::string(name) + "'",
                    "family");
}

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kMoonsGaussians:
      return "two-moons-plus-eight-gaussians";
    case Family::kRings:
      return "rings";
    case Family::kGaussianBlobs:
      return "gaussian-blobs";
    case Family::kFile:
      return "file";
  }
  return "unknown";
}

Points apply_drift(const Points& points, const Drift& drift,
                   const Eigen::RowVectorXd& center) {
  if (!(drift.zoom > 0.0)) throw ConfigError("drift zoom factor must be > 0", "zoom");
  if (center.size() != points.cols())
    throw DimensionError("drift center dimension mismatch");
  Points out = points.rowwise() - center;
  if (points.cols() >= 2) {
    const double c = std::cos(drift.rotation);
    const double s = std::sin(drift.rotation);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double x = out(i, 0);
      const double y = out(i, 1);
      out(i, 0) = c * x - s * y;
      out(i, 1) = s * x + c * y;
    }
  }
  out *= drift.zoom;
  out.rowwise() += center;
  return out;
}

DiscreteMeasure generate(const DatasetSpec& spec) {
  validate(spec);
  if (spec.family == Family::kFile) {
    DiscreteMeasure m = load_points(spec.path, format_from_path(spec.path));
    if (!spec.drift) return m;
    return DiscreteMeasure(apply_drift(m.points(), *spec.drift, m.centroid()),
                           m.weights());
  }
  DiscreteMeasure m = DiscreteMeasure::uniform(template_points(spec, spec.side));
  if (!spec.drift) return m;
  return DiscreteMeasure::uniform(
      apply_drift(m.points(), *spec.drift, m.centroid()));
}

std::pair<DiscreteMeasure, DiscreteMeasure> generate_pair(
    const DatasetSpec& spec) {
  validate(spec);
  if (spec.family == Family::kFile)
    throw ConfigError("generate_pair needs a template family", "family");
  Points src = template_points(spec, Side::kSource);
  Points tgt = template_points(spec, Side::kTarget);
  if (spec.drift) {
    const Eigen::RowVectorXd center =
        0.5 * (src.colwise().mean() + tgt.colwise().mean());
    src = apply_drift(src, *spec.drift, center);
    tgt = apply_drift(tgt, *spec.drift, center);
  }
  return {DiscreteMeasure::uniform(std::move(src)),
          DiscreteMeasure::uniform(std::move(tgt))};
}

PointFormat format_from_path(std::string_view path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return PointFormat::kJson;
  return PointFormat::kCsv;
}

DiscreteMeasure parse_points(std::string_view text, PointFormat format) {
  return format == PointFormat::kJson ? parse_json(text) : parse_csv(text);
}

std::string format_points(const DiscreteMeasure& measure, PointFormat format) {
  const Points& pts = measure.points();
  if (format == PointFormat::kJson) {
    nlohmann::json doc;
    doc["points"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < pts.cols(); ++j) row.push_back(pts(i, j));
      doc["points"].push_back(std::move(row));
    }
    doc["weights"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      doc["weights"].push_back(measure.weights()(i));
    return doc.dump() + "\n";
  }
  std::ostringstream out;
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      if (j) out << ',';
      out << pts(i, j);
    }
    out << '\n';
  }
  return out.str();
}

DiscreteMeasure load_points(const std::string& path, PointFormat format) {
  return parse_points(read_file(path), format);
}

void save_points(const DiscreteMeasure& measure, const std::string& path,
                 PointFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << format_points(measure, format);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace minstp
