#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "headneck/analysis.hpp"
#include "headneck/forest.hpp"
#include "headneck/mpc.hpp"
#include "headneck/plant.hpp"
#include "headneck/sim.hpp"
#include "headneck/tuning.hpp"

using namespace headneck;

namespace {

plant::PlantState rest() {
  plant::PlantState s;
  s.q = plant::reference_posture();
  return s;
}

void BM_PlantStep(benchmark::State& st) {
  const auto p = plant::PlantParams::defaults();
  plant::PlantState s = rest();
  const JointTorques tau = plant::gravity_compensation(s.q, p);
  const plant::BaseStepSample base{0.5, 0.5, 0.5, 0.0, 0.0};
  for (auto _ : st) {
    s = plant::step(s, tau, base, 0.01, p);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PlantStep);

void BM_AccelerationJacobian(benchmark::State& st) {
  const auto p = plant::PlantParams::defaults();
  const plant::PlantState s = rest();
  const JointTorques tau = plant::gravity_compensation(s.q, p);
  for (auto _ : st) benchmark::DoNotOptimize(plant::acceleration_jacobian(s.q, s.qd, tau.tau, 0.2, p));
}
BENCHMARK(BM_AccelerationJacobian);

void BM_MpcColdSolve(benchmark::State& st) {
  mpc::MpcController c(plant::PlantParams::defaults(), mpc::MpcConfig{}, mpc::WeightVector::optimized());
  plant::PlantState s = rest();
  s.qd(0) = 0.2;
  for (auto _ : st) benchmark::DoNotOptimize(c.solve(s, mpc::BaseForecast::hold(0.5), 0.0));
}
BENCHMARK(BM_MpcColdSolve)->Unit(benchmark::kMillisecond);

// Simulated seconds of closed loop per iteration; the RTF is the reported
// time divided by st.range(0).
void BM_ClosedLoopSeconds(benchmark::State& st) {
  perturb::MultisineDefaults d;
  d.period = 5.0;
  d.duration = 10.0;
  const auto base = perturb::generate_multisine(perturb::make_multisine_spec(d));
  mpc::MpcConfig cfg;
  cfg.control_period = 0.01 * static_cast<double>(st.range(1));
  for (auto _ : st) {
    benchmark::DoNotOptimize(sim::run_closed_loop(plant::PlantParams::defaults(),
                                                  sensory::preset_configuration("full_integrators"), cfg,
                                                  mpc::WeightVector::optimized(), base,
                                                  static_cast<double>(st.range(0)), 0.01));
  }
}
BENCHMARK(BM_ClosedLoopSeconds)->Args({1, 1})->Args({1, 4})->Unit(benchmark::kMillisecond);

void BM_FrfEstimate(benchmark::State& st) {
  const auto base = perturb::generate_multisine(perturb::make_multisine_spec());
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        analysis::estimate_frf(base.vy, base.ay, base.dt, base.period, base.excited_frequencies));
  }
}
BENCHMARK(BM_FrfEstimate)->Unit(benchmark::kMicrosecond);

void BM_ForestFit(benchmark::State& st) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = static_cast<int>(st.range(0));
  Eigen::MatrixXd x(n, 10);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 10; ++j) x(i, j) = u(rng);
    y[i] = std::sin(3.0 * x(i, 0)) + x(i, 1) * x(i, 2);
  }
  forest::ForestConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(forest::fit_forest(x, y, cfg));
}
BENCHMARK(BM_ForestFit)->Arg(640)->Unit(benchmark::kMillisecond);

void BM_ParetoArchiveInsert(benchmark::State& st) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<tuning::Evaluation> pts(640);
  for (auto& e : pts) {
    for (int k = 0; k < 12; ++k) e.f.push_back(u(rng));
  }
  for (auto _ : st) {
    tuning::ParetoArchive a;
    for (const auto& e : pts) a.insert(e);
    benchmark::DoNotOptimize(a.size());
  }
}
BENCHMARK(BM_ParetoArchiveInsert)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
