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

#include <benchmark/benchmark.h>

#include <vector>

#include <Eigen/Dense>

#include "minstp/exact_ot.h"
#include "minstp/lapsum.h"
#include "minstp/measures.h"
#include "minstp/random.h"
#include "minstp/slicer.h"
#include "minstp/stp.h"

namespace minstp {
namespace {

std::vector<double> normals(std::size_t n) {
  Stream rng = Stream::derive(1, "bench/values");
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t id) {
  Stream rng = Stream::derive(2, "bench/matrix", {id});
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

void BM_LapSumBuild(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(LapSumCdf(x, 0.1));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LapSumBuild)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

void BM_LapSumInverse(benchmark::State& state) {
  const LapSumCdf cdf(normals(static_cast<std::size_t>(state.range(0))), 0.1);
  double q = 0.001;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdf.inverse_cdf(q));
    q = q > 0.998 ? 0.001 : q + 0.001;
  }
}
BENCHMARK(BM_LapSumInverse)->RangeMultiplier(10)->Range(100, 100000);

void BM_SoftPermutation(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(soft_permutation(x, 0.05));
}
BENCHMARK(BM_SoftPermutation)->RangeMultiplier(2)->Range(16, 256);

void BM_Assignment(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd c = gaussian_matrix(n, n, 0).cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(c));
}
BENCHMARK(BM_Assignment)->RangeMultiplier(2)->Range(16, 512);

void BM_TwoBranch(benchmark::State& state) {
  const Eigen::Index b = state.range(0);
  const Points x = gaussian_matrix(b, 2, 1);
  const Points y = gaussian_matrix(b, 2, 2);
  const Eigen::MatrixXd c = pairwise_cost(x, y, 2.0);
  const Slicer f = Slicer::random_mlp(2, {32}, 7);
  TwoBranchOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(two_branch_on_points(f, x, y, c, opt));
}
BENCHMARK(BM_TwoBranch)->RangeMultiplier(2)->Range(16, 256);

}  // namespace
}  // namespace minstp

BENCHMARK_MAIN();
