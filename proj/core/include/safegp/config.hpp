#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "safegp/barrier.hpp"
#include "safegp/flatness.hpp"
#include "safegp/gp.hpp"
#include "safegp/quad_dynamics.hpp"
#include "safegp/trajectory.hpp"

namespace safegp {

enum class ExperimentKind { tracking, barrier_learning, example1 };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

/// Velocity kick applied to the vehicle at time t.
struct Impulse {
  double t = 0.0;
  Eigen::Vector3d dv = Eigen::Vector3d::Zero();
};

struct TrackingSettings {
  FeatureSet features = FeatureSet::velocity_attitude;
  Lissajous trajectory;
  bool pole_placement = true;
  std::vector<Impulse> impulses;
};

struct BarrierSettings {
  double mu_initial = 6.3;
  double mu_min = 0.2;
  double mu_tol = 1e-3;
  double ellipse_center = -0.8;
  double ellipse_z_scale2 = 0.36;
  double grid_zdot_limit = 2.5;
  double grid_z_pad = 0.1;
  Eigen::Vector2d tau = Eigen::Vector2d(0.02, 0.05);
  double volume_epsilon = 1e-3;  // relative growth treated as no growth
  int patience = 3;              // consecutive no-growth expansions before stopping
  int iteration_cap = 200;
  double goto_duration = 2.5;
  int sample_every = 5;
  bool run_full_horizon = false;
  bool random_start = false;
  double start_h_min = 0.3;  // random starts satisfy h_mu0 >= this
  Eigen::Vector2d start = Eigen::Vector2d(-0.8, 0.0);
  bool oracle_residual = false;
  VerifyOptions verify;
};

struct Example1Settings {
  double grid_extent = 1.5;
  double grid_step = 0.01;
  int trajectories = 500;
  double h_start_min = 0.02;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::tracking;
  std::uint64_t seed = 1;
  double dt = 0.01;
  double horizon = 60.0;
  std::filesystem::path output_dir = "out";

  PlantConfig plant = PlantConfig::defaults();
  Gains gains;
  /// One entry per learned channel (six for tracking, one for barrier learning).
  std::vector<KernelHyper> kernels;
  double measurement_noise = 0.01;  // stddev of additive noise on observed derivatives
  std::size_t gp_budget = 300;
  double k_delta = 2.0;
  double gamma = 1.0;

  TrackingSettings tracking;
  BarrierSettings barrier;
  Example1Settings example1;

  /// Defaults for the given experiment.
  static ExperimentConfig defaults(ExperimentKind kind);
  /// Parses a flat JSON document over defaults(experiment). Unknown keys,
  /// wrong types and invalid values raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Fully resolved document; from_json(to_json()) reproduces the config.
  nlohmann::json to_json() const;
  void validate() const;
  std::size_t steps() const;
  /// Sets the lattice spacing to (tau, 2.5 tau).
  void set_tau(double tau);
};

}  // namespace safegp
