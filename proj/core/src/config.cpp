#include "safegp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "safegp/errors.hpp"

namespace safegp {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::tracking: return "tracking";
    case ExperimentKind::barrier_learning: return "barrier-learning";
    case ExperimentKind::example1: return "example1";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string& name) {
  if (name == "tracking") return ExperimentKind::tracking;
  if (name == "barrier-learning") return ExperimentKind::barrier_learning;
  if (name == "example1") return ExperimentKind::example1;
  throw ConfigError("unknown experiment '" + name + "'");
}

namespace {

std::string feature_name(FeatureSet f) {
  return f == FeatureSet::full_state ? "full_state" : "velocity_attitude";
}

FeatureSet feature_from_string(const std::string& s) {
  if (s == "full_state") return FeatureSet::full_state;
  if (s == "velocity_attitude") return FeatureSet::velocity_attitude;
  throw ConfigError("features must be 'full_state' or 'velocity_attitude', got '" + s + "'");
}

std::vector<KernelHyper> tracking_kernels(FeatureSet features) {
  Eigen::VectorXd ls(feature_dim(features));
  if (features == FeatureSet::full_state) {
    ls << 3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 0.5, 0.5, 0.5;
  } else {
    ls << 2.0, 2.0, 2.0, 0.5, 0.5, 0.5;
  }
  std::vector<KernelHyper> out;
  for (int c = 0; c < 6; ++c) {
    KernelHyper k;
    k.signal_variance = c < 3 ? 16.0 : 1.0;
    k.length_scales = ls;
    k.noise_variance = 1e-2;
    out.push_back(k);
  }
  return out;
}

std::vector<KernelHyper> barrier_kernels() {
  KernelHyper k;
  k.signal_variance = 13.69;
  k.length_scales = Eigen::Vector2d(0.3, 0.5);
  // Well above the sensor noise: a state-only GP sees the thrust-dependent part of the
  // residual as scatter, and a tighter noise model collapses sigma below it.
  k.noise_variance = 1.0;
  return {k};
}

// Walks a flat JSON object, remembering which keys were read.
class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {
    if (!doc_.is_object()) throw ConfigError("config must be a JSON object");
  }

  bool has(const char* key) const { return doc_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!doc_.contains(key)) return;
    used_.insert(key);
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }

  void vec3(const char* key, Eigen::Vector3d& out) {
    if (!doc_.contains(key)) return;
    std::vector<double> v;
    get(key, v);
    if (v.size() != 3) throw ConfigError(std::string("config key '") + key + "' needs 3 numbers");
    out = Eigen::Vector3d(v[0], v[1], v[2]);
  }

  void vec2(const char* key, Eigen::Vector2d& out) {
    if (!doc_.contains(key)) return;
    std::vector<double> v;
    get(key, v);
    if (v.size() != 2) throw ConfigError(std::string("config key '") + key + "' needs 2 numbers");
    out = Eigen::Vector2d(v[0], v[1]);
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return doc_.at(key);
  }

  void reject_unknown() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }

 private:
  const json& doc_;
  std::set<std::string> used_;
};

std::vector<double> broadcast(const json& value, std::size_t n, const char* key) {
  try {
    if (value.is_number()) return std::vector<double>(n, value.get<double>());
    auto v = value.get<std::vector<double>>();
    if (v.size() != n) {
      std::ostringstream os;
      os << "config key '" << key << "' needs " << n << " entries";
      throw ConfigError(os.str());
    }
    return v;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.experiment = kind;
  switch (kind) {
    case ExperimentKind::tracking:
      cfg.horizon = 60.0;
      cfg.kernels = tracking_kernels(cfg.tracking.features);
      break;
    case ExperimentKind::barrier_learning:
      cfg.horizon = 100.0;
      cfg.kernels = barrier_kernels();
      break;
    case ExperimentKind::example1:
      cfg.horizon = 20.0;
      break;
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  Reader rd(doc);
  std::string name = "tracking";
  rd.get("experiment", name);
  ExperimentConfig cfg = defaults(experiment_from_string(name));

  rd.get("seed", cfg.seed);
  rd.get("dt", cfg.dt);
  rd.get("horizon", cfg.horizon);
  std::string out_dir = cfg.output_dir.string();
  rd.get("output_dir", out_dir);
  cfg.output_dir = out_dir;

  PlantConfig& p = cfg.plant;
  double thrust_min_mg = p.thrust_min / (p.nominal_mass * p.gravity);
  double thrust_max_mg = p.thrust_max / (p.nominal_mass * p.gravity);
  rd.get("mass", p.nominal_mass);
  rd.get("mass_ratio", p.mass_ratio);
  rd.get("gravity", p.gravity);
  rd.vec3("wind", p.wind_accel);
  rd.get("thrust_min_mg", thrust_min_mg);
  rd.get("thrust_max_mg", thrust_max_mg);
  p.thrust_min = thrust_min_mg * p.nominal_mass * p.gravity;
  p.thrust_max = thrust_max_mg * p.nominal_mass * p.gravity;
  rd.vec3("rate_limit", p.rate_limit);

  std::string preset;
  rd.get("gain_preset", preset);
  if (preset == "high") {
    cfg.gains = Gains::high_gain();
  } else if (preset == "low") {
    cfg.gains = Gains::low_gain();
  } else if (!preset.empty()) {
    throw ConfigError("gain_preset must be 'low' or 'high'");
  }
  rd.get("kp", cfg.gains.kp);
  rd.get("kd", cfg.gains.kd);
  rd.get("kp_bar", cfg.gains.kp_bar);
  if (rd.has("poles") && rd.has("pole_k")) throw ConfigError("give either 'poles' or 'pole_k', not both");
  if (rd.has("poles")) {
    Eigen::Vector3d poles;
    rd.vec3("poles", poles);
    cfg.gains.pole_k = Gains::pole_row(poles[0], poles[1], poles[2]);
  }
  rd.vec3("pole_k", cfg.gains.pole_k);

  rd.get("measurement_noise", cfg.measurement_noise);
  rd.get("gp_budget", cfg.gp_budget);
  rd.get("k_delta", cfg.k_delta);
  rd.get("gamma", cfg.gamma);

  TrackingSettings& tr = cfg.tracking;
  if (rd.has("features")) {
    std::string f;
    rd.get("features", f);
    tr.features = feature_from_string(f);
    if (cfg.experiment == ExperimentKind::tracking) cfg.kernels = tracking_kernels(tr.features);
  }
  rd.vec3("traj_center", tr.trajectory.center);
  rd.vec3("traj_amplitude", tr.trajectory.amplitude);
  rd.vec3("traj_period", tr.trajectory.period);
  rd.vec3("traj_phase", tr.trajectory.phase);
  rd.get("traj_yaw", tr.trajectory.yaw);
  rd.get("pole_placement", tr.pole_placement);
  if (rd.has("impulses")) {
    std::vector<std::vector<double>> rows;
    rd.get("impulses", rows);
    tr.impulses.clear();
    for (const auto& row : rows) {
      if (row.size() != 4) throw ConfigError("impulses entries are [t, dvx, dvy, dvz]");
      tr.impulses.push_back({row[0], Eigen::Vector3d(row[1], row[2], row[3])});
    }
  }

  const std::size_t channels = cfg.kernels.size();
  if (rd.has("kernel_signal_variance")) {
    const auto v = broadcast(rd.raw("kernel_signal_variance"), channels, "kernel_signal_variance");
    for (std::size_t c = 0; c < channels; ++c) cfg.kernels[c].signal_variance = v[c];
  }
  if (rd.has("kernel_noise_variance")) {
    const auto v = broadcast(rd.raw("kernel_noise_variance"), channels, "kernel_noise_variance");
    for (std::size_t c = 0; c < channels; ++c) cfg.kernels[c].noise_variance = v[c];
  }
  if (rd.has("kernel_length_scales")) {
    const json& ls = rd.raw("kernel_length_scales");
    try {
      if (ls.is_array() && !ls.empty() && ls.front().is_array()) {
        const auto rows = ls.get<std::vector<std::vector<double>>>();
        if (rows.size() != channels) throw ConfigError("kernel_length_scales needs one row per channel");
        for (std::size_t c = 0; c < channels; ++c) {
          cfg.kernels[c].length_scales =
              Eigen::Map<const Eigen::VectorXd>(rows[c].data(), static_cast<Eigen::Index>(rows[c].size()));
        }
      } else {
        const auto row = ls.get<std::vector<double>>();
        for (auto& k : cfg.kernels) {
          k.length_scales = Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key 'kernel_length_scales': ") + e.what());
    }
  }

  BarrierSettings& b = cfg.barrier;
  rd.get("mu_initial", b.mu_initial);
  rd.get("mu_min", b.mu_min);
  rd.get("mu_tol", b.mu_tol);
  rd.get("ellipse_center", b.ellipse_center);
  rd.get("ellipse_z_scale2", b.ellipse_z_scale2);
  rd.get("grid_zdot_limit", b.grid_zdot_limit);
  rd.get("grid_z_pad", b.grid_z_pad);
  rd.vec2("tau", b.tau);
  rd.get("volume_epsilon", b.volume_epsilon);
  rd.get("patience", b.patience);
  rd.get("iteration_cap", b.iteration_cap);
  rd.get("goto_duration", b.goto_duration);
  rd.get("sample_every", b.sample_every);
  rd.get("run_full_horizon", b.run_full_horizon);
  rd.get("random_start", b.random_start);
  rd.get("start_h_min", b.start_h_min);
  rd.vec2("start", b.start);
  rd.get("oracle_residual", b.oracle_residual);
  rd.get("tangency_relaxation", b.verify.tangency_relaxation);
  rd.get("collar_scale", b.verify.collar_scale);
  rd.get("lipschitz_factor", b.verify.lipschitz_factor);
  rd.get("verify_tolerance", b.verify.tolerance);

  Example1Settings& e = cfg.example1;
  rd.get("ex1_grid_extent", e.grid_extent);
  rd.get("ex1_grid_step", e.grid_step);
  rd.get("ex1_trajectories", e.trajectories);
  rd.get("ex1_h_start_min", e.h_start_min);

  rd.reject_unknown();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json ExperimentConfig::to_json() const {
  json doc;
  doc["experiment"] = to_string(experiment);
  doc["seed"] = seed;
  doc["dt"] = dt;
  doc["horizon"] = horizon;
  doc["output_dir"] = output_dir.string();
  doc["mass"] = plant.nominal_mass;
  doc["mass_ratio"] = plant.mass_ratio;
  doc["gravity"] = plant.gravity;
  doc["wind"] = vec_json(plant.wind_accel);
  doc["thrust_min_mg"] = plant.thrust_min / (plant.nominal_mass * plant.gravity);
  doc["thrust_max_mg"] = plant.thrust_max / (plant.nominal_mass * plant.gravity);
  doc["rate_limit"] = vec_json(plant.rate_limit);
  doc["kp"] = gains.kp;
  doc["kd"] = gains.kd;
  doc["kp_bar"] = gains.kp_bar;
  doc["pole_k"] = vec_json(gains.pole_k);
  doc["measurement_noise"] = measurement_noise;
  doc["gp_budget"] = gp_budget;
  doc["k_delta"] = k_delta;
  doc["gamma"] = gamma;
  json sv = json::array(), nv = json::array(), ls = json::array();
  for (const KernelHyper& k : kernels) {
    sv.push_back(k.signal_variance);
    nv.push_back(k.noise_variance);
    ls.push_back(vec_json(k.length_scales));
  }
  if (!kernels.empty()) {
    doc["kernel_signal_variance"] = sv;
    doc["kernel_noise_variance"] = nv;
    doc["kernel_length_scales"] = ls;
  }
  switch (experiment) {
    case ExperimentKind::tracking: {
      doc["features"] = feature_name(tracking.features);
      doc["traj_center"] = vec_json(tracking.trajectory.center);
      doc["traj_amplitude"] = vec_json(tracking.trajectory.amplitude);
      doc["traj_period"] = vec_json(tracking.trajectory.period);
      doc["traj_phase"] = vec_json(tracking.trajectory.phase);
      doc["traj_yaw"] = tracking.trajectory.yaw;
      doc["pole_placement"] = tracking.pole_placement;
      json imp = json::array();
      for (const Impulse& i : tracking.impulses) imp.push_back({i.t, i.dv.x(), i.dv.y(), i.dv.z()});
      doc["impulses"] = imp;
      break;
    }
    case ExperimentKind::barrier_learning:
      doc["mu_initial"] = barrier.mu_initial;
      doc["mu_min"] = barrier.mu_min;
      doc["mu_tol"] = barrier.mu_tol;
      doc["ellipse_center"] = barrier.ellipse_center;
      doc["ellipse_z_scale2"] = barrier.ellipse_z_scale2;
      doc["grid_zdot_limit"] = barrier.grid_zdot_limit;
      doc["grid_z_pad"] = barrier.grid_z_pad;
      doc["tau"] = vec_json(barrier.tau);
      doc["volume_epsilon"] = barrier.volume_epsilon;
      doc["patience"] = barrier.patience;
      doc["iteration_cap"] = barrier.iteration_cap;
      doc["goto_duration"] = barrier.goto_duration;
      doc["sample_every"] = barrier.sample_every;
      doc["run_full_horizon"] = barrier.run_full_horizon;
      doc["random_start"] = barrier.random_start;
      doc["start_h_min"] = barrier.start_h_min;
      doc["start"] = vec_json(barrier.start);
      doc["oracle_residual"] = barrier.oracle_residual;
      doc["tangency_relaxation"] = barrier.verify.tangency_relaxation;
      doc["collar_scale"] = barrier.verify.collar_scale;
      doc["lipschitz_factor"] = barrier.verify.lipschitz_factor;
      doc["verify_tolerance"] = barrier.verify.tolerance;
      break;
    case ExperimentKind::example1:
      doc["ex1_grid_extent"] = example1.grid_extent;
      doc["ex1_grid_step"] = example1.grid_step;
      doc["ex1_trajectories"] = example1.trajectories;
      doc["ex1_h_start_min"] = example1.h_start_min;
      break;
  }
  return doc;
}

void ExperimentConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    plant.validate();
    gains.validate();
    for (const KernelHyper& k : kernels) k.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  require(dt > 0.0, "dt must be positive");
  require(horizon > 0.0, "horizon must be positive");
  require(measurement_noise >= 0.0, "measurement_noise must be non-negative");
  require(gp_budget >= 1, "gp_budget must be at least 1");
  require(k_delta >= 0.0, "k_delta must be non-negative");
  require(gamma > 0.0, "gamma must be positive");

  switch (experiment) {
    case ExperimentKind::tracking: {
      require(kernels.size() == 6, "tracking needs six kernels");
      for (const KernelHyper& k : kernels) {
        require(k.dim() == feature_dim(tracking.features),
                "kernel_length_scales must match the feature dimension");
      }
      try {
        tracking.trajectory.validate();
      } catch (const UsageError& e) {
        throw ConfigError(e.what());
      }
      for (const Impulse& i : tracking.impulses) require(i.t >= 0.0 && i.dv.allFinite(), "bad impulse");
      break;
    }
    case ExperimentKind::barrier_learning: {
      const BarrierSettings& b = barrier;
      require(kernels.size() == 1 && kernels[0].dim() == 2,
              "barrier-learning needs one kernel over (z, z_dot)");
      require(b.mu_min > 0.0 && b.mu_min <= b.mu_initial, "need 0 < mu_min <= mu_initial");
      require(b.mu_tol > 0.0, "mu_tol must be positive");
      require(b.ellipse_z_scale2 > 0.0, "ellipse_z_scale2 must be positive");
      require(b.tau[0] > 0.0 && b.tau[1] > 0.0, "tau entries must be positive");
      require(b.grid_zdot_limit * b.grid_zdot_limit * b.mu_min >= 1.0,
              "grid_zdot_limit must enclose the set at mu_min");
      require(b.grid_z_pad >= 0.0, "grid_z_pad must be non-negative");
      require(b.volume_epsilon >= 0.0, "volume_epsilon must be non-negative");
      require(b.patience >= 1, "patience must be at least 1");
      require(b.iteration_cap >= 0, "iteration_cap must be non-negative");
      require(b.goto_duration > 0.0, "goto_duration must be positive");
      require(b.sample_every >= 1, "sample_every must be at least 1");
      require(b.start_h_min >= 0.0 && b.start_h_min < 1.0, "start_h_min must be in [0, 1)");
      require(b.verify.lipschitz_factor > 0.0, "lipschitz_factor must be positive");
      require(b.verify.tolerance >= 0.0, "verify_tolerance must be non-negative");
      break;
    }
    case ExperimentKind::example1:
      require(example1.grid_extent > 0.0 && example1.grid_step > 0.0, "bad example1 grid");
      require(example1.trajectories >= 0, "ex1_trajectories must be non-negative");
      break;
  }
}

std::size_t ExperimentConfig::steps() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

void ExperimentConfig::set_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("--tau must be positive");
  barrier.tau = Eigen::Vector2d(tau, 2.5 * tau);
}

}  // namespace safegp
