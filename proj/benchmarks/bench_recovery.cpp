// Microbenchmarks for the hot paths of the recovery pipeline at the default
// window size (one day at 15 min, 20 meters).

#include <benchmark/benchmark.h>

#include "smrec/acpf.hpp"
#include "smrec/bcse.hpp"
#include "smrec/distflow.hpp"
#include "smrec/recovery.hpp"
#include "smrec/rng.hpp"
#include "smrec/smooth_norms.hpp"
#include "smrec/synthesis.hpp"

using namespace smrec;

namespace {

Eigen::MatrixXd window_matrix(int rows, int cols, std::uint64_t seed, double base) {
  RandomStream rng(seed);
  Eigen::MatrixXd a(rows, cols);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) a(j, i) = base + 0.05 * rng.uniform(-1.0, 1.0);
  }
  return a;
}

synth::Scenario bench_scenario() {
  synth::ScenarioSpec spec;
  spec.node_count = 20;
  spec.seed = 3;
  spec.window = TimeWindow{0, 86400};
  spec.asynchrony.max_offset_s = 450.0;
  return synth::generate_scenario(spec);
}

}  // namespace

static void BM_SmoothedNuclear(benchmark::State& state) {
  const Eigen::MatrixXd a = window_matrix(96, 20, 1, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smoothed_nuclear(a, 1e-3).value);
  }
}
BENCHMARK(BM_SmoothedNuclear);

static void BM_SmoothedL1(benchmark::State& state) {
  const Eigen::MatrixXd a = window_matrix(96, 20, 2, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smoothed_l1(a, 1e-3).value);
  }
}
BENCHMARK(BM_SmoothedL1);

static void BM_SolveProx(benchmark::State& state) {
  const int m = 96, n = 20;
  std::vector<FeederBranch> branches;
  std::vector<std::string> meters;
  for (int i = 0; i < n; ++i) {
    meters.push_back("n" + std::to_string(i + 1));
    branches.push_back({i == 0 ? "sub" : meters[static_cast<std::size_t>((i - 1) / 2)],
                        meters.back(), 0.02, 0.015});
  }
  const FeederModel feeder("sub", branches, 1.0404);
  const auto sens = sensitivity_matrices(feeder, meters);

  MatrixTriple raw{window_matrix(m, n, 3, 1.0), window_matrix(m, n, 4, 0.5),
                   window_matrix(m, n, 5, 0.2)};
  FeasibleSetSpec feas(raw, 0.1, 0.1, 0.1,
                       LinearCoupling{sens.resistance, sens.reactance, 1.0404});

  ProxSubproblem sub;
  sub.grad_refined = MatrixTriple{window_matrix(m, n, 6, 0.0), window_matrix(m, n, 7, 0.0),
                                  window_matrix(m, n, 8, 0.0)};
  sub.grad_sparse = sub.grad_refined;
  sub.center_refined = raw;
  sub.center_sparse = zeros_like(raw);
  sub.proximity_weight = 100.0;

  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_prox(sub, feas, 1e-8, 200).sweeps);
  }
}
BENCHMARK(BM_SolveProx);

static void BM_RecoverWindow(benchmark::State& state) {
  const synth::Scenario sc = bench_scenario();
  const auto raw = synth::sample_asynchronous(sc);
  SolverConfig c = default_config(raw.u, raw.p, raw.q);
  c.max_outer_iters = static_cast<int>(state.range(0));
  c.early_stop_tol = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(recover(raw.u, raw.p, raw.q, sc.feeder(), c).iterations);
  }
}
BENCHMARK(BM_RecoverWindow)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_AcPowerFlow(benchmark::State& state) {
  const synth::Scenario sc = bench_scenario();
  const Eigen::VectorXd p = sc.consumption_p(43200);
  const Eigen::VectorXd q = sc.consumption_q(43200);
  for (auto _ : state) {
    benchmark::DoNotOptimize(acpf::solve(sc.feeder(), p, q).iterations);
  }
}
BENCHMARK(BM_AcPowerFlow);

static void BM_BcseEstimateRow(benchmark::State& state) {
  const synth::Scenario sc = bench_scenario();
  const auto truth = synth::ground_truth(sc);
  const FeederModel& f = sc.feeder();
  std::vector<bcse::Measurement> ms;
  for (int i = 0; i < truth.u.cols(); ++i) {
    const int node = i + 1;
    ms.push_back({bcse::MeasurementKind::VoltageSquaredAtNode, node, truth.u.values()(0, i),
                  0.01});
    ms.push_back({bcse::MeasurementKind::ActiveInjectionAtNode, node, truth.p.values()(0, i),
                  0.001});
    ms.push_back({bcse::MeasurementKind::ReactiveInjectionAtNode, node, truth.q.values()(0, i),
                  0.001});
  }
  const bcse::MeasurementSet meas(ms);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bcse::estimate(meas, f).iterations);
  }
}
BENCHMARK(BM_BcseEstimateRow);

BENCHMARK_MAIN();
