#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "safegp/qp.hpp"

namespace {

void BM_FilterQp(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<safegp::FilterQp> problems(512);
  for (auto& p : problems) {
    p.u_hat = Eigen::VectorXd::NullaryExpr(m, [&] { return 2.0 * u(rng); });
    p.a = Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); });
    p.lo = Eigen::VectorXd::Constant(m, -1.0);
    p.hi = Eigen::VectorXd::Constant(m, 1.0);
    p.b = u(rng);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    auto s = safegp::solve(problems[i++ % problems.size()]);
    benchmark::DoNotOptimize(s.u.data());
  }
}
BENCHMARK(BM_FilterQp)->Arg(1)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
