#include "verify.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "safegp/barrier.hpp"
#include "safegp/config.hpp"
#include "safegp/emit.hpp"
#include "safegp/errors.hpp"
#include "safegp/experiments.hpp"
#include "safegp/gp.hpp"
#include "safegp/qp.hpp"
#include "safegp/systems.hpp"

namespace safegp::tools {

namespace {

struct Check {
  bool ok = false;
  std::string detail;
};

Check gp_recursive_matches_batch(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  KernelHyper hyper;
  hyper.signal_variance = 1.5;
  hyper.length_scales = Eigen::Vector2d(0.7, 1.1);
  hyper.noise_variance = 0.05;
  GpModel gp(hyper, 300);
  double worst = 0.0;
  for (int op = 0; op < 120; ++op) {
    const bool remove = gp.size() > 4 && rng() % 3 == 0;
    if (remove) {
      const auto i = static_cast<Eigen::Index>(rng() % gp.size());
      gp.remove_points(std::span<const Eigen::Index>(&i, 1));
    } else {
      const int m = 1 + static_cast<int>(rng() % 3);
      Eigen::MatrixXd x(m, 2);
      Eigen::VectorXd y(m);
      for (int r = 0; r < m; ++r) {
        x(r, 0) = u(rng);
        x(r, 1) = u(rng);
        y[r] = std::sin(x(r, 0)) * x(r, 1);
      }
      gp.add_points(x, y);
    }
    worst = std::max(worst, gp.rebuild_drift());
  }
  return {worst <= 1e-6, "max |inverse - batch| = " + std::to_string(worst)};
}

Check qp_matches_corner_oracle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int bad = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const int m = 1 + static_cast<int>(rng() % 4);
    FilterQp p;
    p.u_hat = Eigen::VectorXd::NullaryExpr(m, [&] { return 2.0 * u(rng); });
    p.a = Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); });
    p.lo = Eigen::VectorXd::NullaryExpr(m, [&] { return -1.0 + 0.5 * u(rng); });
    p.hi = p.lo + Eigen::VectorXd::NullaryExpr(m, [&] { return 0.1 + std::abs(u(rng)); });
    p.b = u(rng);
    const QpSolution s = solve(p);
    if (s.status == QpStatus::infeasible) {
      if (max_over_box(p.a, p.lo, p.hi) >= p.b - 1e-12) ++bad;
      continue;
    }
    // KKT for a single halfspace plus box: u = clip(u_hat + lambda a), lambda >= 0,
    // complementary with a^T u >= b.
    const Eigen::VectorXd clipped = (p.u_hat + s.multiplier * p.a).cwiseMax(p.lo).cwiseMin(p.hi);
    const double slack = p.a.dot(s.u) - p.b;
    worst = std::max({worst, (clipped - s.u).cwiseAbs().maxCoeff(), std::max(0.0, -slack),
                      s.multiplier > 1e-9 ? std::abs(slack) : 0.0});
  }
  return {bad == 0 && worst <= 1e-9,
          "worst KKT residual " + std::to_string(worst) + ", misreported infeasible " +
              std::to_string(bad)};
}

struct BarrierSetup {
  ExperimentConfig cfg;
  std::unique_ptr<VerticalQuadChannel> sys;
  std::shared_ptr<VerticalEllipseFamily> family;
  Algorithm1Result run;
};

BarrierSetup barrier_setup(const VerifyInputs& in) {
  BarrierSetup s;
  s.cfg = in.config ? ExperimentConfig::load(*in.config)
                    : ExperimentConfig::defaults(ExperimentKind::barrier_learning);
  if (s.cfg.experiment != ExperimentKind::barrier_learning) {
    throw ConfigError("verify expects a barrier-learning config");
  }
  if (in.tau) s.cfg.set_tau(*in.tau);
  if (in.k_delta) s.cfg.k_delta = *in.k_delta;
  s.cfg.seed = in.seed;
  s.cfg.validate();
  s.sys = std::make_unique<VerticalQuadChannel>(s.cfg.plant);
  s.family = std::make_shared<VerticalEllipseFamily>(s.cfg.barrier.ellipse_center,
                                                     s.cfg.barrier.ellipse_z_scale2);
  // The posterior and certificate come from a short learning run.
  ExperimentConfig short_run = s.cfg;
  short_run.horizon = std::min(short_run.horizon, 30.0);
  s.run = run_algorithm1(short_run);
  return s;
}

Check fine_grid_soundness(const BarrierSetup& s) {
  const GpResidual residual(2, {{1, &s.run.gp, {0, 1}}});
  const StateGrid grid = barrier_grid(s.cfg);
  const StateGrid fine = grid.refined(10);
  const GridSnapshot snap = snapshot(grid, *s.sys, residual, true);
  const GridSnapshot fine_snap = snapshot(fine, *s.sys, residual, true);
  int passes = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::vector<double> mus{6.3, 4.0, 2.5, 1.5, 1.0, 0.7};
  for (const MuTraceEntry& e : s.run.trace) mus.push_back(e.mu);
  for (double mu : mus) {
    const BarrierCertificate cert{s.family, mu, s.cfg.gamma};
    if (!verify_grid(cert, snap, s.cfg.k_delta, s.cfg.barrier.verify).passed) continue;
    ++passes;
    const MarginField f = margin_field(cert, fine_snap, s.cfg.k_delta);
    for (Eigen::Index p = 0; p < f.h.size(); ++p) {
      if (f.h[p] >= 0.0) worst = std::min(worst, f.margin[p]);
    }
  }
  return {passes > 0 && worst >= -1e-9,
          std::to_string(passes) + " passing mu values, min fine-grid margin " +
              std::to_string(worst)};
}

Check cover_complete(const BarrierSetup& s) {
  const GpResidual residual(2, {{1, &s.run.gp, {0, 1}}});
  const StateGrid grid = barrier_grid(s.cfg);
  const GridSnapshot snap = snapshot(grid, *s.sys, residual, true);
  // Latest trace level that still verifies under the final posterior.
  std::optional<BarrierCertificate> picked;
  CoverageSet c;
  for (auto it = s.run.trace.rbegin(); it != s.run.trace.rend() && !picked; ++it) {
    const BarrierCertificate cand{s.family, it->mu, s.cfg.gamma};
    c = adaptive_cover(cand, snap, s.cfg.k_delta, s.cfg.barrier.verify);
    if (c.certified) picked = cand;
  }
  if (!picked) return {false, "no trace level verifies under the final posterior"};
  const BarrierCertificate& cert = *picked;
  // Independent ball check: every safe point lies in some emitted ball.
  std::size_t missed = 0;
  const Eigen::MatrixXd pts = grid.points();
  for (Eigen::Index p = 0; p < pts.cols(); ++p) {
    if (cert.value(pts.col(p)) < 0.0) continue;
    bool inside = false;
    for (const CoverageSample& b : c.samples) {
      if ((pts.col(p) - b.point).norm() <= b.radius + 1e-12) {
        inside = true;
        break;
      }
    }
    missed += inside ? 0 : 1;
  }
  return {missed == 0,
          "mu " + std::to_string(cert.mu) + ", " + std::to_string(c.samples.size()) + " balls, " + std::to_string(missed) +
              " uncovered safe points"};
}

Check mu_monotone(const BarrierSetup& s) {
  const Algorithm1Result& r = s.run;
  bool mono = true;
  for (std::size_t i = 1; i < r.trace.size(); ++i) mono = mono && r.trace[i].mu <= r.trace[i - 1].mu;
  return {mono, std::to_string(r.trace.size()) + " trace entries, mu " +
                    std::to_string(r.initial.mu) + " -> " + std::to_string(r.final_cert.mu)};
}

Check deterministic(const BarrierSetup& s) {
  ExperimentConfig cfg = s.cfg;
  cfg.horizon = std::min(cfg.horizon, 10.0);
  const std::string a = to_csv(run_algorithm1(cfg).record);
  const std::string b = to_csv(run_algorithm1(cfg).record);
  return {a == b, "hashes " + git_blob_hash(a).substr(0, 12) + " / " + git_blob_hash(b).substr(0, 12)};
}

}  // namespace

bool run_invariant_suites(const VerifyInputs& in, std::ostream& out) {
  const BarrierSetup setup = barrier_setup(in);
  const std::vector<std::pair<std::string, std::function<Check()>>> checks = {
      {"gp-recursive-vs-batch", [&] { return gp_recursive_matches_batch(in.seed); }},
      {"qp-kkt", [&] { return qp_matches_corner_oracle(in.seed); }},
      {"fine-grid-soundness", [&] { return fine_grid_soundness(setup); }},
      {"cover-complete", [&] { return cover_complete(setup); }},
      {"mu-monotone", [&] { return mu_monotone(setup); }},
      {"deterministic", [&] { return deterministic(setup); }},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    const Check c = fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << (c.ok ? "PASS " : "FAIL ") << name << ": " << c.detail << " (" << secs << " s)\n";
    all = all && c.ok;
  }
  return all;
}

}  // namespace safegp::tools
