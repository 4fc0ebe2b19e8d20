#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "manidiff/gaussian.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"
#include "manidiff/metrics.hpp"
#include "manidiff/rng.hpp"
#include "manidiff/sampler.hpp"
#include "manidiff/schedule.hpp"

using namespace manidiff;

namespace {

OraclePtr circle_oracle(Eigen::Index D, Eigen::Index n) {
  Rng rng = make_stream(1, 0);
  return point_cloud_oracle(make_manifold_cloud(ManifoldKind::circle, {}, D, n, rng).cloud);
}

void BM_CorrectedStep(benchmark::State& state) {
  const Eigen::Index D = state.range(0);
  const TimeSchedule schedule = build_schedule(0.1, 90, 130);
  const ScoreFn score = exact_score(gaussian_oracle(axis_aligned_law(D, 2, 1.0)));
  Rng rng = make_stream(2, 0);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(D);
  int k = 0;
  for (auto _ : state) {
    y = corrected_step(y, k, schedule, score, rng);
    k = (k + 1) % schedule.steps();
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_CorrectedStep)->Arg(8)->Arg(64)->Arg(256);

void BM_PointCloudPosteriorMean(benchmark::State& state) {
  const OraclePtr oracle = circle_oracle(16, state.range(0));
  Rng rng = make_stream(3, 0);
  const Eigen::VectorXd x = forward_sample(*oracle, 0.05, rng).xt;
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle->posterior_mean(0.05, x).data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PointCloudPosteriorMean)->Arg(100)->Arg(1000)->Arg(10000);

void BM_PropagateAffineReverse(benchmark::State& state) {
  const Eigen::Index D = state.range(0);
  const GaussianLaw data = axis_aligned_law(D, 4, 1.0);
  ReverseRunConfig config{build_schedule(0.1, 90, 130)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(propagate_affine_reverse(data, config));
  }
}
BENCHMARK(BM_PropagateAffineReverse)->Arg(32)->Arg(256);

void BM_GaussianKl(benchmark::State& state) {
  const Eigen::Index D = state.range(0);
  const GaussianLaw p = axis_aligned_law(D, 4, 1.0);
  GaussianLaw q = axis_aligned_law(D, 4, 1.2);
  q.floor = 0.01;
  GaussianLaw pf = p;
  pf.floor = 0.02;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gaussian_kl(pf, q));
  }
}
BENCHMARK(BM_GaussianKl)->Arg(32)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
