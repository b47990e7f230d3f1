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

#ifndef MINSTP_SLICER_H_
#define MINSTP_SLICER_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minstp/measures.h"
#include "minstp/random.h"

namespace minstp {

// Scalar projection f: R^d -> R used to slice measures.
//
// Linear slicers compute <x, theta>. MLP slicers are tanh networks with a
// linear scalar output; widths() lists every layer including the input
// dimension and the final 1. Parameters are stored flat, layer by layer, each
// layer as its weight matrix (row-major, out x in) followed by its bias.
class Slicer {
 public:
  enum class Kind { kLinear, kMlp };

  static Slicer linear(Eigen::VectorXd theta);
  // Direction drawn uniformly on the unit sphere.
  static Slicer random_linear(Eigen::Index dim, std::uint64_t seed);
  // widths = {d, h_1, ..., h_k, 1}.
  static Slicer mlp(std::vector<int> widths, Eigen::VectorXd parameters);
  // He-style uniform init: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  // zero biases.
  static Slicer random_mlp(Eigen::Index dim, const std::vector<int>& hidden,
                           std::uint64_t seed);

  Kind kind() const noexcept { return kind_; }
  Eigen::Index input_dim() const noexcept { return widths_.front(); }
  const std::vector<int>& widths() const noexcept { return widths_; }
  Eigen::Index num_parameters() const noexcept { return params_.size(); }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  void set_parameters(const Eigen::VectorXd& params);
  // Seed the parameters were initialised from; recorded in checkpoints.
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

  // f(x_i) for every row of x, in input order.
  Eigen::VectorXd eval(const Points& x) const;

  // Gradient of sum_i upstream_i * f(x_i) with respect to parameters().
  Eigen::VectorXd eval_vjp(const Points& x, const Eigen::VectorXd& upstream) const;

  // Gradient of the same quantity with respect to the inputs (n x d).
  Points input_vjp(const Points& x, const Eigen::VectorXd& upstream) const;

  // Upper bound on the Lipschitz constant: product of layer spectral norms
  // (tanh is 1-Lipschitz).
  double lipschitz_bound() const;

 private:
  Slicer(Kind kind, std::vector<int> widths, Eigen::VectorXd params,
         std::uint64_t seed);
  void check_input(const Points& x) const;

  Kind kind_;
  std::vector<int> widths_;
  Eigen::VectorXd params_;
  std::uint64_t seed_ = 0;
};

// Stable 64-bit hash of the variant, widths and parameter bits.
std::uint64_t slicer_fingerprint(const Slicer& slicer);

std::string slicer_to_json(const Slicer& slicer);
Slicer slicer_from_json(const std::string& text);
void save_slicer(const Slicer& slicer, const std::string& path);
Slicer load_slicer(const std::string& path);

// Laplace perturbation xi ~ Lap_d(eta^2 Sigma) of a slicer.
struct PerturbationConfig {
  double eta = 0.1;
  Eigen::MatrixXd sigma;  // empty means 2 I_d
  std::size_t num_samples = 1000;
  std::uint64_t seed = 0;
};

// Validates sigma (symmetric within 1e-12, Cholesky succeeds) and returns
// its lower Cholesky factor. Throws ParameterError otherwise.
Eigen::MatrixXd perturbation_factor(const PerturbationConfig& cfg, Eigen::Index dim);

// xi = eta * sqrt(W) * A z with A A^T = Sigma, z ~ N(0, I), W ~ Exp(1). For a
// fixed x, <xi, x> is Laplace with scale eta * sqrt(x^T Sigma x / 2).
Eigen::VectorXd sample_perturbation(const PerturbationConfig& cfg, Eigen::Index dim,
                                    Stream& rng);
// Same with a precomputed Cholesky factor.
Eigen::VectorXd sample_perturbation(const Eigen::MatrixXd& factor, double eta,
                                    Stream& rng);
// Draw number `index` of the stream derived from cfg.seed.
Eigen::VectorXd sample_perturbation(const PerturbationConfig& cfg, Eigen::Index dim,
                                    std::uint64_t index);

// g(x) = f(x) + <xi, x>.
Eigen::VectorXd perturbed_eval(const Slicer& f, const Points& x,
                               const Eigen::VectorXd& xi);

}  // namespace minstp

#endif  // MINSTP_SLICER_H_
