#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "safegp/barrier.hpp"
#include "safegp/config.hpp"
#include "safegp/experiments.hpp"
#include "safegp/systems.hpp"

namespace {

struct Fixture {
  safegp::ExperimentConfig cfg = safegp::ExperimentConfig::defaults(safegp::ExperimentKind::barrier_learning);
  safegp::VerticalQuadChannel sys{cfg.plant};
  safegp::StateGrid grid = safegp::barrier_grid(cfg);
  std::shared_ptr<safegp::VerticalEllipseFamily> family =
      std::make_shared<safegp::VerticalEllipseFamily>();
  safegp::GpModel gp{cfg.kernels[0], cfg.gp_budget};

  explicit Fixture(int points) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uz(-1.4, -0.2), uv(-1.0, 1.0);
    Eigen::MatrixXd x(points, 2);
    Eigen::VectorXd y(points);
    for (int i = 0; i < points; ++i) {
      x.row(i) << uz(rng), uv(rng);
      y[i] = sys.braking_residual(x.row(i).transpose())[1];
    }
    gp = safegp::GpModel::fit_batch(x, y, cfg.kernels[0], cfg.gp_budget);
  }
};

void BM_Snapshot(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  const safegp::GpResidual residual(2, {{1, &f.gp, {0, 1}}});
  for (auto _ : state) {
    auto snap = safegp::snapshot(f.grid, f.sys, residual, true);
    benchmark::DoNotOptimize(snap.mean.data());
  }
}
BENCHMARK(BM_Snapshot)->Arg(50)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_AdaptiveCover(benchmark::State& state) {
  Fixture f(300);
  const safegp::GpResidual residual(2, {{1, &f.gp, {0, 1}}});
  const auto snap = safegp::snapshot(f.grid, f.sys, residual, true);
  const safegp::BarrierCertificate cert{f.family, 2.0, 1.0};
  for (auto _ : state) {
    auto c = safegp::adaptive_cover(cert, snap, 2.0, f.cfg.barrier.verify);
    benchmark::DoNotOptimize(c.samples.data());
  }
}
BENCHMARK(BM_AdaptiveCover)->Unit(benchmark::kMillisecond);

void BM_SafeFilter(benchmark::State& state) {
  Fixture f(300);
  const safegp::GpResidual residual(2, {{1, &f.gp, {0, 1}}});
  const safegp::BarrierCertificate cert{f.family, 2.0, 1.0};
  const Eigen::VectorXd x = Eigen::Vector2d(-0.7, 0.3);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, -9.0);
  for (auto _ : state) {
    auto r = safegp::safe_filter(u, cert, x, f.sys, residual, 2.0);
    benchmark::DoNotOptimize(r.u.data());
  }
}
BENCHMARK(BM_SafeFilter)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
