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

#include "minstp/slicer.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "minstp/error.h"

namespace minstp {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Index mlp_param_count(const std::vector<int>& widths) {
  Eigen::Index count = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    count += static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
  return count;
}

struct Layer {
  Eigen::Map<const RowMajor> w;
  Eigen::Map<const Eigen::VectorXd> b;
};

std::vector<Layer> layers(const std::vector<int>& widths,
                          const Eigen::VectorXd& params) {
  std::vector<Layer> out;
  const double* p = params.data();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], o = widths[l + 1];
    Eigen::Map<const RowMajor> w(p, o, in);
    p += static_cast<std::ptrdiff_t>(o) * in;
    Eigen::Map<const Eigen::VectorXd> b(p, o);
    p += o;
    out.push_back({w, b});
  }
  return out;
}

}  // namespace

Slicer::Slicer(Kind kind, std::vector<int> widths, Eigen::VectorXd params,
               std::uint64_t seed)
    : kind_(kind), widths_(std::move(widths)), params_(std::move(params)), seed_(seed) {}

Slicer Slicer::linear(Eigen::VectorXd theta) {
  if (theta.size() < 1) throw DimensionError("linear slicer needs dimension >= 1");
  const int d = static_cast<int>(theta.size());
  return Slicer(Kind::kLinear, {d, 1}, std::move(theta), 0);
}

Slicer Slicer::random_linear(Eigen::Index dim, std::uint64_t seed) {
  Stream rng = Stream::derive(seed, "slicer/linear");
  Eigen::VectorXd theta(dim);
  do {
    for (Eigen::Index i = 0; i < dim; ++i) theta(i) = rng.normal();
  } while (theta.norm() == 0.0);
  theta.normalize();
  Slicer s = linear(std::move(theta));
  s.seed_ = seed;
  return s;
}

Slicer Slicer::mlp(std::vector<int> widths, Eigen::VectorXd parameters) {
  if (widths.size() < 2 || widths.back() != 1)
    throw ConfigError("MLP widths must be {d, hidden..., 1}", "widths");
  for (int w : widths)
    if (w < 1) throw ConfigError("MLP layer widths must be >= 1", "widths");
  if (parameters.size() != mlp_param_count(widths))
    throw DimensionError("MLP parameter vector has " +
                         std::to_string(parameters.size()) + " entries, expected " +
                         std::to_string(mlp_param_count(widths)));
  return Slicer(Kind::kMlp, std::move(widths), std::move(parameters), 0);
}

Slicer Slicer::random_mlp(Eigen::Index dim, const std::vector<int>& hidden,
                          std::uint64_t seed) {
  std::vector<int> widths;
  widths.push_back(static_cast<int>(dim));
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  Eigen::VectorXd params(mlp_param_count(widths));
  Stream rng = Stream::derive(seed, "slicer/mlp");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = std::sqrt(6.0 / widths[l]);
    for (int i = 0; i < widths[l + 1] * widths[l]; ++i)
      params(k++) = rng.uniform(-bound, bound);
    for (int i = 0; i < widths[l + 1]; ++i) params(k++) = 0.0;
  }
  Slicer s = mlp(std::move(widths), std::move(params));
  s.seed_ = seed;
  return s;
}

void Slicer::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != params_.size())
    throw DimensionError("parameter vector size mismatch");
  params_ = params;
}

void Slicer::check_input(const Points& x) const {
  if (x.cols() != input_dim())
    throw DimensionError("slicer expects dimension " + std::to_string(input_dim()) +
                         ", got " + std::to_string(x.cols()));
}

Eigen::VectorXd Slicer::eval(const Points& x) const {
  check_input(x);
  if (kind_ == Kind::kLinear) return x * params_;
  const auto ls = layers(widths_, params_);
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    Eigen::MatrixXd z = h * ls[l].w.transpose();
    z.rowwise() += ls[l].b.transpose();
    h = z.array().tanh().matrix();
  }
  Eigen::VectorXd out = h * ls.back().w.row(0).transpose();
  out.array() += ls.back().b(0);
  return out;
}

Eigen::VectorXd Slicer::eval_vjp(const Points& x, const Eigen::VectorXd& upstream) const {
  check_input(x);
  if (upstream.size() != x.rows())
    throw DimensionError("eval_vjp: upstream length must equal the number of points");
  if (kind_ == Kind::kLinear) return x.transpose() * upstream;

  const auto ls = layers(widths_, params_);
  // Forward pass keeping every activation.
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(ls.size());
  acts.push_back(x);
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    Eigen::MatrixXd z = acts.back() * ls[l].w.transpose();
    z.rowwise() += ls[l].b.transpose();
    acts.push_back(z.array().tanh().matrix());
  }
  Eigen::VectorXd grad(params_.size());
  // Offsets of each layer's block in the flat vector.
  std::vector<Eigen::Index> offset(ls.size());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < ls.size(); ++l) {
    offset[l] = k;
    k += ls[l].w.size() + ls[l].b.size();
  }
  // delta: gradient w.r.t. the pre-activation outputs of layer l (n x out).
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = ls.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = acts[l];
    RowMajor gw = delta.transpose() * in;
    Eigen::Map<RowMajor>(grad.data() + offset[l], gw.rows(), gw.cols()) = gw;
    grad.segment(offset[l] + ls[l].w.size(), ls[l].b.size()) =
        delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd back = delta * ls[l].w;
    delta = (back.array() * (1.0 - in.array().square())).matrix();
  }
  return grad;
}

Points Slicer::input_vjp(const Points& x, const Eigen::VectorXd& upstream) const {
  check_input(x);
  if (upstream.size() != x.rows())
    throw DimensionError("input_vjp: upstream length must equal the number of points");
  if (kind_ == Kind::kLinear) return upstream * params_.transpose();
  const auto ls = layers(widths_, params_);
  std::vector<Eigen::MatrixXd> acts;
  acts.push_back(x);
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    Eigen::MatrixXd z = acts.back() * ls[l].w.transpose();
    z.rowwise() += ls[l].b.transpose();
    acts.push_back(z.array().tanh().matrix());
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = ls.size(); l-- > 0;) {
    Eigen::MatrixXd back = delta * ls[l].w;
    if (l == 0) return back;
    delta = (back.array() * (1.0 - acts[l].array().square())).matrix();
  }
  return {};
}

double Slicer::lipschitz_bound() const {
  if (kind_ == Kind::kLinear) return params_.norm();
  double bound = 1.0;
  for (const auto& layer : layers(widths_, params_)) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(layer.w));
    bound *= svd.singularValues()(0);
  }
  return bound;
}

std::uint64_t slicer_fingerprint(const Slicer& slicer) {
  std::uint64_t h = mix64(slicer.kind() == Slicer::Kind::kLinear ? 1 : 2);
  for (int w : slicer.widths()) h = mix64(h ^ static_cast<std::uint64_t>(w));
  for (Eigen::Index i = 0; i < slicer.num_parameters(); ++i) {
    std::uint64_t bits;
    const double v = slicer.parameters()(i);
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

std::string slicer_to_json(const Slicer& slicer) {
  nlohmann::json doc;
  doc["variant"] = slicer.kind() == Slicer::Kind::kLinear ? "linear" : "mlp";
  doc["widths"] = slicer.widths();
  std::vector<double> params(slicer.parameters().data(),
                             slicer.parameters().data() + slicer.num_parameters());
  doc["parameters"] = params;
  doc["seed"] = slicer.seed();
  return doc.dump() + "\n";
}

Slicer slicer_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    const std::string variant = doc.at("variant").get<std::string>();
    const auto widths = doc.at("widths").get<std::vector<int>>();
    const auto params = doc.at("parameters").get<std::vector<double>>();
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(
        params.data(), static_cast<Eigen::Index>(params.size()));
    const std::uint64_t seed = doc.value("seed", std::uint64_t{0});
    if (variant == "linear") {
      if (widths.size() != 2 || widths[0] != p.size() || widths[1] != 1)
        throw ParseError("linear checkpoint widths must be {d, 1}", 0);
      Slicer s = Slicer::linear(std::move(p));
      s.set_seed(seed);
      return s;
    }
    if (variant == "mlp") {
      Slicer s = Slicer::mlp(widths, std::move(p));
      s.set_seed(seed);
      return s;
    }
    throw ParseError("unknown slicer variant '" + variant + "'", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid slicer checkpoint: ") + e.what(), 0);
  }
}

void save_slicer(const Slicer& slicer, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << slicer_to_json(slicer);
}

Slicer load_slicer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return slicer_from_json(ss.str());
}

Eigen::MatrixXd perturbation_factor(const PerturbationConfig& cfg, Eigen::Index dim) {
  if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta))
    throw ParameterError("perturbation scale eta must be >= 0");
  Eigen::MatrixXd sigma =
      cfg.sigma.size() == 0 ? Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(dim, dim))
                            : cfg.sigma;
  if (sigma.rows() != dim || sigma.cols() != dim)
    throw DimensionError("perturbation sigma must be d x d");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ParameterError("perturbation sigma must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw ParameterError("perturbation sigma must be positive definite");
  return llt.matrixL();
}

Eigen::VectorXd sample_perturbation(const Eigen::MatrixXd& factor, double eta,
                                    Stream& rng) {
  const Eigen::Index d = factor.rows();
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  const double w = rng.exponential();
  return eta * std::sqrt(w) * (factor * z);
}

Eigen::VectorXd sample_perturbation(const PerturbationConfig& cfg, Eigen::Index dim,
                                    Stream& rng) {
  return sample_perturbation(perturbation_factor(cfg, dim), cfg.eta, rng);
}

Eigen::VectorXd sample_perturbation(const PerturbationConfig& cfg, Eigen::Index dim,
                                    std::uint64_t index) {
  Stream rng = Stream::derive(cfg.seed, "perturbation", {index});
  return sample_perturbation(cfg, dim, rng);
}

Eigen::VectorXd perturbed_eval(const Slicer& f, const Points& x,
                               const Eigen::VectorXd& xi) {
  if (xi.size() != x.cols())
    throw DimensionError("perturbation dimension must match the points");
  return f.eval(x) + x * xi;
}

}  // namespace minstp
