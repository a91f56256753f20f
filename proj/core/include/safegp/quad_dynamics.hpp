#pragma once

#include <functional>

#include <Eigen/Dense>

namespace safegp {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

enum class FeatureSet {
  full_state,        // [r, v, theta, phi, psi]
  velocity_attitude  // [v, theta, phi, psi]
};

Eigen::Index feature_dim(FeatureSet set);

/// Quadrotor state. Vector layout is [r, v, theta, phi, psi]; angles are ZYX Euler.
struct QuadState {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;

  Vector9d to_vector() const;
  static QuadState from_vector(const Vector9d& x);
  Eigen::VectorXd features(FeatureSet set) const;
  /// (phi, theta, psi)
  Eigen::Vector3d euler() const { return {phi, theta, psi}; }
};

struct QuadControl {
  double f = 0.0;  // collective thrust, negative lifts (N)
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // body rates (rad/s)
};

struct PlantConfig {
  double nominal_mass = 1.0;
  double mass_ratio = 1.0;  // true / nominal
  double gravity = 9.81;
  Eigen::Vector3d wind_accel = Eigen::Vector3d::Zero();
  double thrust_min = -1.8 * 9.81;
  double thrust_max = 0.0;
  Eigen::Vector3d rate_limit = Eigen::Vector3d::Constant(4.0);

  /// 1 kg vehicle, 1.4x true mass, 0.1 g wind along -x, thrust in [-1.8 mg, 0].
  static PlantConfig defaults();
  double true_mass() const { return nominal_mass * mass_ratio; }
  void validate() const;
};

/// Body-to-world rotation, ZYX convention.
Eigen::Matrix3d rotation_matrix(double phi, double theta, double psi);
/// Maps body rates to (phi_dot, theta_dot, psi_dot).
Eigen::Matrix3d euler_rate_matrix(double phi, double theta);
/// Inverse of euler_rate_matrix.
Eigen::Matrix3d euler_rate_matrix_inverse(double phi, double theta);

constexpr double kThetaGuard = 1.5707963267948966 - 1e-3;

/// Throws NumericError when |theta| reaches the sec(theta) guard.
void check_attitude(const QuadState& q);
double wrap_angle(double a);

/// Derivative in state layout [r_dot, v_dot, theta_dot, phi_dot, psi_dot].
Vector9d nominal_derivative(const QuadState& q, const QuadControl& u, const PlantConfig& cfg);
/// Nominal model with mass scaled by mass_ratio plus the wind acceleration.
Vector9d true_derivative(const QuadState& q, const QuadControl& u, const PlantConfig& cfg);

/// Observed minus nominal on the learned channels [r_ddot; phi_dot, theta_dot, psi_dot].
Vector6d measured_residual(const QuadState& q, const QuadControl& u, const Vector9d& qdot_observed,
                           const PlantConfig& cfg);
/// The same six channels read out of a state derivative.
Vector6d residual_channels(const Vector9d& qdot);

using DerivativeFn = std::function<Vector9d(const QuadState&, const QuadControl&)>;

/// One classical RK4 step with u held constant. Angles are wrapped afterwards.
QuadState integrate_step(const QuadState& q, const QuadControl& u, double dt,
                         const DerivativeFn& derivative);

QuadControl clamp_control(const QuadControl& u, const PlantConfig& cfg);

}  // namespace safegp
