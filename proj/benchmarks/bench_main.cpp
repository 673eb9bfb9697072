#include <benchmark/benchmark.h>

#include <random>

#include "dynsl/boosting.hpp"
#include "dynsl/landmark.hpp"
#include "dynsl/mixed_model.hpp"
#include "dynsl/superlearner.hpp"

using namespace dynsl;

namespace {

Dataset cohort(std::size_t n, std::uint64_t seed) {
  SimConfig c = SimConfig::defaults();
  c.n = n;
  SimulatedCohort x = gen_longitudinal(c, seed);
  x.truth.event_time = gen_events_landmark(x, c, seed + 1);
  return apply_censoring(x, CensoringScenario::random, c, seed + 2).data;
}

const PredictionWindow kWindow{4.0, 7.0};

void BM_CoxFit(benchmark::State& state) {
  const Dataset d = cohort(static_cast<std::size_t>(state.range(0)), 1);
  const LandmarkFeatures f = lvcf_features(d, kWindow.t);
  for (auto _ : state) benchmark::DoNotOptimize(fit_cox(f, d));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CoxFit)->RangeMultiplier(4)->Range(250, 4000)->Complexity();

void BM_LmmFit(benchmark::State& state) {
  const Dataset d = cohort(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(fit_lmm(d, 0, TrajectorySpec{}));
}
BENCHMARK(BM_LmmFit)->Arg(250)->Arg(1000);

void BM_Boost(benchmark::State& state) {
  const Dataset d = cohort(static_cast<std::size_t>(state.range(0)), 3);
  const LandmarkFeatures f = lvcf_features(d, kWindow.t);
  std::vector<double> t;
  std::vector<bool> e;
  for (std::size_t i : f.subjects) {
    t.push_back(d.subject(i).observed_time);
    e.push_back(d.subject(i).event);
  }
  BoostOptions o;
  o.nu = 0.1;
  o.b_stop = 100;
  for (auto _ : state) benchmark::DoNotOptimize(boost(f.design, t, e, o));
}
BENCHMARK(BM_Boost)->Arg(250)->Arg(1000);

void BM_TvAuc(benchmark::State& state) {
  const Dataset d = cohort(static_cast<std::size_t>(state.range(0)), 4);
  const IpcwWeights w = ipcw(d, kWindow);
  const RiskSet rs = risk_set(d, kWindow.t);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(rs.size());
  for (auto& x : p) x = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(tv_auc(p, d, w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TvAuc)->RangeMultiplier(4)->Range(250, 16000)->Complexity();

void BM_ConvexWeights(benchmark::State& state) {
  const Dataset d = cohort(1000, 6);
  const auto k = static_cast<std::size_t>(state.range(0));
  const RiskSet rs = risk_set(d, kWindow.t);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  PredictionMatrix end, mid;
  end.rows = mid.rows = rs.indices;
  end.fold_of = mid.fold_of = std::vector<std::size_t>(rs.size(), 0);
  end.values = mid.values = Eigen::MatrixXd(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    end.learner_ids.push_back("l" + std::to_string(j));
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const double a = u(rng);
      end.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a;
      mid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::sqrt(a);
    }
  }
  mid.learner_ids = end.learner_ids;
  const LossEvaluator loss(d, kWindow);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_weights_convex(end, mid, loss, MetricKind::integrated_brier));
}
BENCHMARK(BM_ConvexWeights)->Arg(3)->Arg(5)->Arg(10);

void BM_AucWeights(benchmark::State& state) {
  const Dataset d = cohort(1000, 8);
  const RiskSet rs = risk_set(d, kWindow.t);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  PredictionMatrix end;
  end.rows = rs.indices;
  end.fold_of = std::vector<std::size_t>(rs.size(), 0);
  end.values = Eigen::MatrixXd(static_cast<Eigen::Index>(rs.size()), 5);
  for (Eigen::Index j = 0; j < 5; ++j) {
    end.learner_ids.push_back("l" + std::to_string(j));
    for (Eigen::Index i = 0; i < end.values.rows(); ++i) end.values(i, j) = u(rng);
  }
  const LossEvaluator loss(d, kWindow);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_weights_auc(end, loss, 10, 1));
}
BENCHMARK(BM_AucWeights);

}  // namespace
BENCHMARK_MAIN();
