#include <benchmark/benchmark.h>

#include <random>

#include "safegp/gp.hpp"

namespace {

safegp::KernelHyper hyper(int dim) {
  safegp::KernelHyper h;
  h.signal_variance = 1.0;
  h.length_scales = Eigen::VectorXd::Constant(dim, 0.8);
  h.noise_variance = 0.01;
  return h;
}

Eigen::MatrixXd random_inputs(int n, int dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return Eigen::MatrixXd::NullaryExpr(n, dim, [&] { return u(rng); });
}

// One budgeted insertion at capacity: evict + add.
void BM_Admit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = random_inputs(n, 9, 1);
  const Eigen::VectorXd y = x.rowwise().sum();
  safegp::GpModel gp = safegp::GpModel::fit_batch(x, y, hyper(9), static_cast<std::size_t>(n));
  const Eigen::MatrixXd q = random_inputs(256, 9, 2);
  int i = 0;
  for (auto _ : state) {
    const Eigen::VectorXd xi = q.row(i++ % 256).transpose();
    benchmark::DoNotOptimize(gp.admit(xi, xi.sum(), xi));
  }
}
BENCHMARK(BM_Admit)->Arg(100)->Arg(300)->Unit(benchmark::kMicrosecond);

void BM_FitBatch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = random_inputs(n, 9, 1);
  const Eigen::VectorXd y = x.rowwise().sum();
  for (auto _ : state) {
    auto gp = safegp::GpModel::fit_batch(x, y, hyper(9), static_cast<std::size_t>(n));
    benchmark::DoNotOptimize(gp.inverse().data());
  }
}
BENCHMARK(BM_FitBatch)->Arg(100)->Arg(300)->Unit(benchmark::kMicrosecond);

void BM_Posterior(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = random_inputs(n, 9, 1);
  const Eigen::VectorXd y = x.rowwise().sum();
  const safegp::GpModel gp = safegp::GpModel::fit_batch(x, y, hyper(9), static_cast<std::size_t>(n));
  const Eigen::VectorXd q = random_inputs(1, 9, 5).row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(gp.posterior(q));
}
BENCHMARK(BM_Posterior)->Arg(100)->Arg(300)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
