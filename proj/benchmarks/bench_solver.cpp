#include <benchmark/benchmark.h>

#include <random>

#include <Eigen/Dense>

#include "scmrelax/baselines.hpp"
#include "scmrelax/divergence.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/panel.hpp"
#include "scmrelax/solver.hpp"
#include "scmrelax/tuning.hpp"

namespace {

using Eigen::MatrixXd;
using scmr::Divergence;

// Three-factor panel with J controls, t0 pre and two post periods.
scmr::PanelData factor_panel(int j, int t0) {
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> n01;
  const int t = t0 + 2;
  MatrixXd f(t, 3), l(3, j + 1), e(t, j + 1);
  for (auto* m : {&f, &l, &e}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n01(rng);
  }
  return scmr::PanelData::from_matrix(f * l + e, t0);
}

const scmr::MomentPair& moments(int j) {
  static const scmr::MomentPair m50 = scmr::compute_moments(factor_panel(50, 50));
  static const scmr::MomentPair m200 = scmr::compute_moments(factor_panel(200, 200));
  return j == 50 ? m50 : m200;
}

double mid_radius(const scmr::MomentPair& m) {
  const double lo = scmr::check_feasibility(m, 0.0).eta_min;
  return lo + 0.5 * (scmr::eta_bar(m).eta_bar - lo);
}

void BM_Feasibility(benchmark::State& state) {
  const scmr::MomentPair& m = moments(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scmr::check_feasibility(m, 0.0));
}
BENCHMARK(BM_Feasibility)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_RelaxationL2(benchmark::State& state) {
  const scmr::MomentPair& m = moments(static_cast<int>(state.range(0)));
  const double eta = mid_radius(m);
  for (auto _ : state) benchmark::DoNotOptimize(scmr::solve_relaxation(m, Divergence::l2(), eta));
}
BENCHMARK(BM_RelaxationL2)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_RelaxationEntropy(benchmark::State& state) {
  const scmr::MomentPair& m = moments(static_cast<int>(state.range(0)));
  const double eta = mid_radius(m);
  for (auto _ : state) benchmark::DoNotOptimize(scmr::solve_relaxation(m, Divergence::entropy(), eta));
}
BENCHMARK(BM_RelaxationEntropy)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Scm(benchmark::State& state) {
  const scmr::MomentPair& m = moments(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scmr::solve_scm(m));
}
BENCHMARK(BM_Scm)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_CvEtaL2(benchmark::State& state) {
  const scmr::PanelData p = factor_panel(50, 50);
  for (auto _ : state) benchmark::DoNotOptimize(scmr::cv_select_eta(p, Divergence::l2(), 20));
}
BENCHMARK(BM_CvEtaL2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
