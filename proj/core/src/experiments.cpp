#include "safegp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "safegp/errors.hpp"
#include "safegp/flatness.hpp"
#include "safegp/log.hpp"
#include "safegp/quad_dynamics.hpp"
#include "safegp/systems.hpp"
#include "safegp/trajectory.hpp"

namespace safegp {

namespace {

double rms(const std::vector<double>& v, std::size_t from) {
  if (from >= v.size()) return 0.0;
  double s = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) s += v[i] * v[i];
  return std::sqrt(s / static_cast<double>(v.size() - from));
}

std::vector<std::string> tracking_columns() {
  return {"t",      "x",      "y",      "z",      "vx",     "vy",     "vz",     "theta",
          "phi",    "psi",    "ref_x",  "ref_y",  "ref_z",  "acc_cmd_x", "acc_cmd_y", "acc_cmd_z",
          "f",      "wx",     "wy",     "wz",     "m1",     "m2",     "m3",     "m4",
          "m5",     "m6",     "s1",     "s2",     "s3",     "s4",     "s5",     "s6",
          "err",    "gp_points", "theta_d", "phi_d"};
}

}  // namespace

// ---------------------------------------------------------------------------

TrackingRun run_tracking_once(const ExperimentConfig& cfg, bool use_gp) {
  if (cfg.experiment != ExperimentKind::tracking) throw UsageError("run_tracking: not a tracking config");
  const PlantConfig& plant = cfg.plant;
  const Lissajous& traj = cfg.tracking.trajectory;
  const FeatureSet fs = cfg.tracking.features;
  const double dt = cfg.dt;
  const std::size_t steps = cfg.steps();

  TrackingRun run;
  run.record = RunRecord(use_gp ? "tracking_with_gp" : "tracking_without_gp", tracking_columns());
  run.record.rows.reserve(steps);
  if (use_gp) {
    for (const KernelHyper& k : cfg.kernels) run.gps.emplace_back(k, cfg.gp_budget);
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  const FlatRef start = traj.at(0.0);
  QuadState q;
  q.r = start.pos;
  q.v = start.vel;
  const Attitude att0 = flat_to_attitude(start, plant.gravity);
  q.phi = att0.phi;
  q.theta = att0.theta;
  q.psi = start.yaw;

  ShapedReference shaped(start);
  const DerivativeFn plant_fn = [&plant](const QuadState& s, const QuadControl& c) {
    return true_derivative(s, c, plant);
  };

  std::vector<double> errors;
  errors.reserve(steps);
  std::vector<bool> applied(cfg.tracking.impulses.size(), false);

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    for (std::size_t i = 0; i < cfg.tracking.impulses.size(); ++i) {
      if (!applied[i] && t + 0.5 * dt >= cfg.tracking.impulses[i].t) {
        q.v += cfg.tracking.impulses[i].dv;
        applied[i] = true;
      }
    }
    const FlatRef nominal = traj.at(t);
    // The shaped reference supplies feedforward acceleration and jerk only. Its position
    // integrates a biased acceleration whenever the model is wrong and drifts off, so
    // the PD terms keep tracking the nominal path.
    FlatRef ref = nominal;
    if (cfg.tracking.pole_placement) {
      ref.acc = shaped.ref().acc;
      ref.jerk = shaped.ref().jerk;
    }

    const auto t0 = std::chrono::steady_clock::now();
    Vector6d mean = Vector6d::Zero();
    Vector6d sd = Vector6d::Zero();
    Eigen::VectorXd feats;
    if (use_gp) {
      feats = q.features(fs);
      for (int c = 0; c < 6; ++c) {
        const Posterior p = run.gps[static_cast<std::size_t>(c)].posterior(feats);
        mean[c] = p.mean;
        sd[c] = p.stddev();
      }
    }
    const auto t1 = std::chrono::steady_clock::now();

    const Feedforward ff =
        feedforward(ref, plant, use_gp ? std::optional<Vector6d>(mean) : std::nullopt);
    const Eigen::Vector3d rate_bias = mean.tail<3>();
    const QuadControl fb = feedback_implicit(q, ref, ff.attitude, ff.u.omega, cfg.gains, rate_bias);
    QuadControl u;
    u.f = ff.u.f + fb.f;
    u.omega = ff.u.omega + fb.omega;
    u = clamp_control(u, plant);

    const Vector9d qdot = true_derivative(q, u, plant);
    std::chrono::steady_clock::duration update_time{};
    if (use_gp) {
      Vector9d observed = qdot;
      for (int i = 3; i < 9; ++i) observed[i] += cfg.measurement_noise * noise(rng);
      const Vector6d resid = measured_residual(q, u, observed, plant);
      const auto u0 = std::chrono::steady_clock::now();
      for (int c = 0; c < 6; ++c) {
        GpModel& gp = run.gps[static_cast<std::size_t>(c)];
        if (gp.admit(feats, resid[c], feats)) ++run.gp_evictions;
        ++run.gp_adds;
        run.max_gp_points = std::max(run.max_gp_points, gp.size());
      }
      update_time = std::chrono::steady_clock::now() - u0;
      run.gp_step_ms.push_back(
          std::chrono::duration<double, std::milli>((t1 - t0) + update_time).count());
    }

    const double err = (q.r - nominal.pos).norm();
    errors.push_back(err);
    run.record.add({t,          q.r.x(),      q.r.y(),      q.r.z(),      q.v.x(),     q.v.y(),
                    q.v.z(),    q.theta,      q.phi,        q.psi,        nominal.pos.x(),
                    nominal.pos.y(), nominal.pos.z(), ref.acc.x(), ref.acc.y(), ref.acc.z(),
                    u.f,        u.omega.x(),  u.omega.y(),  u.omega.z(),  mean[0],     mean[1],
                    mean[2],    mean[3],      mean[4],      mean[5],      sd[0],       sd[1],
                    sd[2],      sd[3],        sd[4],        sd[5],        err,
                    use_gp ? static_cast<double>(run.gps[0].size()) : 0.0,
                    ff.attitude.theta, ff.attitude.phi});

    // Controller's acceleration estimate: nominal model plus the learned mean.
    const Eigen::Vector3d acc_est = nominal_derivative(q, u, plant).segment<3>(3) + mean.head<3>();
    const QuadState before = q;
    q = integrate_step(q, u, dt, plant_fn);
    if (cfg.tracking.pole_placement) {
      shaped.step(dt, nominal, before.r, before.v, acc_est, cfg.gains.pole_k);
    }
  }

  run.rms_error = rms(errors, 0);
  run.rms_error_final_half = rms(errors, errors.size() / 2);
  return run;
}

TrackingResult run_tracking(const ExperimentConfig& cfg) {
  TrackingResult out;
  out.with_gp = run_tracking_once(cfg, true);
  out.without_gp = run_tracking_once(cfg, false);
  return out;
}

// ---------------------------------------------------------------------------

StateGrid barrier_grid(const ExperimentConfig& cfg) {
  const BarrierSettings& b = cfg.barrier;
  const double half = std::sqrt(b.ellipse_z_scale2) + b.grid_z_pad;
  const Eigen::Vector2d lower(b.ellipse_center - half, -b.grid_zdot_limit);
  const Eigen::Vector2d upper(b.ellipse_center + half, b.grid_zdot_limit);
  return StateGrid(lower, upper, b.tau);
}

namespace {

std::vector<std::string> barrier_columns() {
  return {"t",        "z",       "zdot",     "target_z", "target_zdot", "u_hat",
          "u",        "h",       "margin",   "mu",       "gp_mean",     "gp_std",
          "d_true",   "in_tube", "filter_active", "infeasible", "gp_points"};
}

Eigen::Vector2d random_start(const BarrierCertificate& cert, const BarrierSettings& b,
                             std::mt19937_64& rng) {
  const double half_z = std::sqrt(b.ellipse_z_scale2);
  const double half_v = 1.0 / std::sqrt(cert.mu);
  std::uniform_real_distribution<double> uz(b.ellipse_center - half_z, b.ellipse_center + half_z);
  std::uniform_real_distribution<double> uv(-half_v, half_v);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const Eigen::Vector2d x(uz(rng), uv(rng));
    if (cert.value(x) >= b.start_h_min) return x;
  }
  throw ConfigError("could not sample a start state with h >= start_h_min");
}

}  // namespace

Algorithm1Result run_algorithm1(const ExperimentConfig& cfg) {
  if (cfg.experiment != ExperimentKind::barrier_learning) {
    throw UsageError("run_algorithm1: not a barrier-learning config");
  }
  const BarrierSettings& bs = cfg.barrier;
  const double dt = cfg.dt;
  const double k_delta = cfg.k_delta;
  const VerticalQuadChannel sys(cfg.plant);
  const double mass = cfg.plant.nominal_mass;
  const double g = cfg.plant.gravity;
  const auto family = std::make_shared<VerticalEllipseFamily>(bs.ellipse_center, bs.ellipse_z_scale2);
  const StateGrid grid = barrier_grid(cfg);

  Algorithm1Result res;
  res.gp = GpModel(cfg.kernels[0], cfg.gp_budget);
  std::unique_ptr<ResidualModel> residual;
  if (bs.oracle_residual) {
    residual = std::make_unique<OracleResidual>(
        [&sys](const Eigen::VectorXd& x) { return sys.braking_residual(x); });
  } else {
    residual = std::make_unique<GpResidual>(
        2, std::vector<GpResidual::Channel>{{1, &res.gp, {0, 1}}});
  }

  BarrierCertificate cert{family, bs.mu_initial, cfg.gamma};
  cert.validate();
  res.initial = cert;
  GridSnapshot snap = snapshot(grid, sys, *residual, true);
  {
    const CoverageSet initial = adaptive_cover(cert, snap, k_delta, bs.verify);
    if (!initial.certified) {
      std::ostringstream os;
      os << "initial certificate mu=" << cert.mu << " fails verification ("
         << initial.collar_failures << " collar failures)";
      throw CertificateAbort(os.str());
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::VectorXd x = bs.random_start ? Eigen::VectorXd(random_start(cert, bs, rng))
                                      : Eigen::VectorXd(bs.start);
  if (cert.value(x) < 0.0) throw ConfigError("start state lies outside the initial safe set");

  const std::size_t total = cfg.steps();
  const auto leg_steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(bs.goto_duration / dt)));
  res.record = RunRecord("barrier_run", barrier_columns());
  res.record.rows.reserve(total);
  res.min_h = std::numeric_limits<double>::infinity();
  res.min_h_in_tube = std::numeric_limits<double>::infinity();

  bool expanding = bs.iteration_cap > 0;
  int no_growth = 0;
  double acc_est = 0.0;
  std::size_t step = 0;
  res.trace.push_back({0, 0, cert.mu, cert.volume(), 0, false});

  while (step < total && (expanding || bs.run_full_horizon)) {
    const Eigen::VectorXd target = grid.point(next_target(cert, snap));
    const Quintic path(x[0], x[1], acc_est, target[0], target[1], 0.0, bs.goto_duration);

    for (std::size_t k = 0; k < leg_steps && step < total; ++k, ++step) {
      const Quintic::Sample s = path.at(static_cast<double>(k) * dt);
      Eigen::VectorXd mean, sd;
      residual->evaluate_one(x, mean, sd);
      // Altitude channel of the flatness controller: feedforward plus PD on the quintic.
      const double u_hat = mass * (s.acc - g - mean[1]) + cfg.gains.kp * (s.pos - x[0]) +
                           cfg.gains.kd * (s.vel - x[1]);
      const FilterResult fr = safe_filter(Eigen::VectorXd::Constant(1, u_hat), cert, x, sys,
                                          *residual, k_delta);
      const double f = fr.u[0];

      const double d_true = sys.true_residual(x, f)[1];
      const bool in_tube = std::abs(d_true - mean[1]) <= k_delta * sd[1] + 1e-12;
      const MarginTerms mt = margin_terms(cert, x, sys, *residual, k_delta);
      res.tube_violations += in_tube ? 0 : 1;
      res.filter_active_steps += fr.active ? 1 : 0;
      res.infeasible_steps += fr.infeasible ? 1 : 0;
      res.min_h = std::min(res.min_h, mt.h);
      if (mt.h < -1e-3) ++res.unsafe_steps_any;
      if (in_tube) {
        res.min_h_in_tube = std::min(res.min_h_in_tube, mt.h);
        if (mt.h < -1e-3) ++res.unsafe_steps;
      }

      if (!bs.oracle_residual && step % static_cast<std::size_t>(bs.sample_every) == 0) {
        const double observed = sys.true_derivative(x, f)[1] + cfg.measurement_noise * noise(rng);
        const double y = observed - sys.derivative(x, fr.u)[1];
        res.gp.admit(x, y, x);
      }

      res.record.add({static_cast<double>(step) * dt, x[0], x[1], target[0], target[1], u_hat, f,
                      mt.h, mt.margin, cert.mu, mean[1], sd[1], d_true, in_tube ? 1.0 : 0.0,
                      fr.active ? 1.0 : 0.0, fr.infeasible ? 1.0 : 0.0,
                      static_cast<double>(res.gp.size())});

      acc_est = g + f / mass + mean[1];
      x = rk4_step(x, dt, [&](const Eigen::VectorXd& v) { return sys.true_derivative(v, f); });
    }

    if (!bs.oracle_residual) snap = snapshot(grid, sys, *residual, true);
    if (expanding) {
      const ExpansionResult er =
          expand_certificate(cert, snap, k_delta, bs.mu_min, bs.mu_tol, bs.verify);
      ++res.iterations;
      const double growth = er.cert.volume() - cert.volume();
      // A failed re-verification says nothing about convergence; it does not count.
      if (!er.incumbent_failed) {
        no_growth = growth <= bs.volume_epsilon * cert.volume() ? no_growth + 1 : 0;
      }
      cert = er.cert;
      res.trace.push_back({res.iterations, step, cert.mu, cert.volume(), er.evaluations,
                           er.incumbent_failed});
      if (no_growth >= bs.patience) {
        expanding = false;
        res.converged = true;
      } else if (res.iterations >= bs.iteration_cap) {
        expanding = false;
      }
    }
  }

  res.steps = step;
  if (step == 0) {
    res.min_h = cert.value(x);
    res.min_h_in_tube = res.min_h;
  }
  res.final_cert = cert;
  res.coverage = adaptive_cover(cert, snap, k_delta, bs.verify);
  return res;
}

// ---------------------------------------------------------------------------

QuadraticField example1_lyapunov() {
  return QuadraticField::from_monomials(0.0, 0.0, 0.0, 1.343, 0.5155, 1.152);
}

QuadraticField example1_barrier() {
  return QuadraticField::from_monomials(1.0, -0.4254, -0.3248, -0.8616, -0.2846, -0.7549);
}

Example1Result run_example1(const ExperimentConfig& cfg) {
  const Example1Settings& e = cfg.example1;
  const QuadraticField v = example1_lyapunov();
  const QuadraticField h = example1_barrier();
  Example1Result res;

  const auto n = static_cast<int>(std::llround(2.0 * e.grid_extent / e.grid_step));
  res.min_h_on_lyapunov_set = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const Eigen::Vector2d p(-e.grid_extent + i * e.grid_step, -e.grid_extent + j * e.grid_step);
      ++res.grid_cells;
      const bool in_v = v.value(p) <= 1.0;
      const double hv = h.value(p);
      if (in_v) {
        ++res.lyapunov_cells;
        res.min_h_on_lyapunov_set = std::min(res.min_h_on_lyapunov_set, hv);
        if (hv < 0.0) ++res.lyapunov_outside;
      }
      if (hv >= 0.0) ++res.barrier_cells;
    }
  }

  const Example1System sys;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-e.grid_extent, e.grid_extent);
  const auto steps = cfg.steps();
  constexpr int kTraced = 5;
  constexpr std::size_t kTraceEvery = 10;
  res.starts = RunRecord("example1_trajectories", {"id", "x1", "x2", "h0", "min_h", "x1_end", "x2_end"});
  res.traces = RunRecord("example1_traces", {"id", "t", "x1", "x2", "h"});
  res.min_h = std::numeric_limits<double>::infinity();

  for (int id = 0; id < e.trajectories; ++id) {
    Eigen::Vector2d x0;
    do {
      x0 = Eigen::Vector2d(uni(rng), uni(rng));
    } while (h.value(x0) < e.h_start_min);
    Eigen::VectorXd x = x0;
    double min_h = h.value(x0);
    for (std::size_t k = 1; k <= steps; ++k) {
      x = rk4_step(x, cfg.dt, [&sys](const Eigen::VectorXd& s) { return sys.drift(s); });
      if (!x.allFinite()) {
        min_h = -std::numeric_limits<double>::infinity();
        break;
      }
      const double hv = h.value(Eigen::Vector2d(x));
      min_h = std::min(min_h, hv);
      if (id < kTraced && k % kTraceEvery == 0) {
        res.traces.add({static_cast<double>(id), static_cast<double>(k) * cfg.dt, x[0], x[1], hv});
      }
    }
    ++res.trajectories;
    if (min_h < -1e-3) ++res.crossings;
    res.min_h = std::min(res.min_h, min_h);
    res.starts.add({static_cast<double>(id), x0[0], x0[1], h.value(x0), min_h, x[0], x[1]});
  }
  if (res.trajectories == 0) res.min_h = 0.0;
  return res;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json timing_summary(const std::vector<double>& ms) {
  if (ms.empty()) return nullptr;
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const auto pct = [&](double p) {
    return sorted[static_cast<std::size_t>(p * static_cast<double>(sorted.size() - 1))];
  };
  const std::size_t half = ms.size() / 2;
  const double first = std::accumulate(ms.begin(), ms.begin() + static_cast<long>(half), 0.0) /
                       static_cast<double>(std::max<std::size_t>(half, 1));
  const double second = std::accumulate(ms.begin() + static_cast<long>(half), ms.end(), 0.0) /
                        static_cast<double>(ms.size() - half);
  return {{"mean_ms", std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size())},
          {"p50_ms", pct(0.5)},
          {"p99_ms", pct(0.99)},
          {"max_ms", sorted.back()},
          {"first_half_mean_ms", first},
          {"second_half_mean_ms", second}};
}

}  // namespace

nlohmann::json run_and_emit(const ExperimentConfig& cfg) {
  nlohmann::json summary;
  summary["experiment"] = to_string(cfg.experiment);
  switch (cfg.experiment) {
    case ExperimentKind::tracking: {
      const TrackingResult r = run_tracking(cfg);
      summary["rms_error_with_gp"] = r.with_gp.rms_error;
      summary["rms_error_without_gp"] = r.without_gp.rms_error;
      summary["rms_error_final_half_with_gp"] = r.with_gp.rms_error_final_half;
      summary["rms_error_final_half_without_gp"] = r.without_gp.rms_error_final_half;
      summary["final_half_ratio"] =
          r.without_gp.rms_error_final_half > 0.0
              ? r.with_gp.rms_error_final_half / r.without_gp.rms_error_final_half
              : 0.0;
      summary["gp_max_points"] = r.with_gp.max_gp_points;
      summary["gp_adds"] = r.with_gp.gp_adds;
      summary["gp_evictions"] = r.with_gp.gp_evictions;
      summary["gp_step_timing"] = timing_summary(r.with_gp.gp_step_ms);
      emit({&r.with_gp.record, &r.without_gp.record}, cfg.to_json(), cfg.seed, summary, cfg.output_dir);
      nlohmann::json checkpoint = nlohmann::json::array();
      for (const GpModel& gp : r.with_gp.gps) checkpoint.push_back(gp.to_json());
      write_text(cfg.output_dir / "gp_checkpoint.json", checkpoint.dump(2) + "\n");
      break;
    }
    case ExperimentKind::barrier_learning: {
      const Algorithm1Result r = run_algorithm1(cfg);
      RunRecord trace("mu_trace", {"iteration", "step", "mu", "volume", "evaluations", "incumbent_failed"});
      for (const MuTraceEntry& e : r.trace) {
        trace.add({static_cast<double>(e.iteration), static_cast<double>(e.step), e.mu, e.volume,
                   static_cast<double>(e.evaluations), e.incumbent_failed ? 1.0 : 0.0});
      }
      RunRecord coverage("coverage", {"z", "zdot", "margin", "radius", "passed"});
      for (const CoverageSample& s : r.coverage.samples) {
        coverage.add({s.point[0], s.point[1], s.margin, s.radius, s.passed ? 1.0 : 0.0});
      }
      summary["mu_initial"] = r.initial.mu;
      summary["mu_final"] = r.final_cert.mu;
      summary["certificate"] = r.final_cert.to_json();
      summary["converged"] = r.converged;
      summary["iterations"] = r.iterations;
      summary["steps"] = r.steps;
      summary["tube_violations"] = r.tube_violations;
      summary["unsafe_steps_in_tube"] = r.unsafe_steps;
      summary["unsafe_steps_any"] = r.unsafe_steps_any;
      summary["filter_active_steps"] = r.filter_active_steps;
      summary["infeasible_steps"] = r.infeasible_steps;
      summary["min_h"] = r.min_h;
      summary["min_h_in_tube"] = r.min_h_in_tube;
      summary["coverage_samples"] = r.coverage.samples.size();
      summary["coverage_safe_points"] = r.coverage.safe_points;
      summary["coverage_certified"] = r.coverage.certified;
      emit({&r.record, &trace, &coverage}, cfg.to_json(), cfg.seed, summary, cfg.output_dir);
      nlohmann::json checkpoint = {{"certificate", r.final_cert.to_json()}, {"gp", r.gp.to_json()}};
      write_text(cfg.output_dir / "gp_checkpoint.json", checkpoint.dump(2) + "\n");
      break;
    }
    case ExperimentKind::example1: {
      const Example1Result r = run_example1(cfg);
      summary["grid_cells"] = r.grid_cells;
      summary["lyapunov_cells"] = r.lyapunov_cells;
      summary["barrier_cells"] = r.barrier_cells;
      summary["lyapunov_cells_outside_barrier_set"] = r.lyapunov_outside;
      summary["min_h_on_lyapunov_set"] = r.min_h_on_lyapunov_set;
      summary["area_ratio"] = r.lyapunov_cells > 0 ? static_cast<double>(r.barrier_cells) /
                                                         static_cast<double>(r.lyapunov_cells)
                                                   : 0.0;
      summary["trajectories"] = r.trajectories;
      summary["crossings"] = r.crossings;
      summary["min_h"] = r.min_h;
      emit({&r.starts, &r.traces}, cfg.to_json(), cfg.seed, summary, cfg.output_dir);
      break;
    }
  }
  return summary;
}

}  // namespace safegp
