#pragma once

#include <optional>

#include <Eigen/Dense>

#include "safegp/quad_dynamics.hpp"

namespace safegp {

/// Flat output eta = [r, psi] and the derivatives the feedforward needs.
struct FlatRef {
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  Eigen::Vector3d vel = Eigen::Vector3d::Zero();
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  Eigen::Vector3d jerk = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

struct Gains {
  double kp = 4.0;
  double kd = 3.0;
  double kp_bar = 0.5;
  /// Pole-placement row [k_pos, k_vel, k_acc] for the triple integrator.
  Eigen::Vector3d pole_k = Eigen::Vector3d(15.0, 18.5, 7.5);

  /// Row placing the closed-loop poles of s^3 + k_acc s^2 + k_vel s + k_pos at `poles`.
  static Eigen::Vector3d pole_row(double p1, double p2, double p3);
  /// Closed-loop poles of the shaped triple integrator.
  Eigen::Vector3cd poles() const;
  void validate() const;

  /// Tighter feedback for poorly known models.
  static Gains high_gain();
  static Gains low_gain();
};

struct Attitude {
  double phi = 0.0;
  double theta = 0.0;
};

/// Desired attitude and Euler rates produced by the feedforward.
struct AttitudeRef {
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;
  Eigen::Vector3d rates = Eigen::Vector3d::Zero();  // phi_dot, theta_dot, psi_dot

  Eigen::Vector3d euler() const { return {phi, theta, psi}; }
};

/// Attitude that aligns the thrust axis with r_ddot - corr - g z_w.
Attitude flat_to_attitude(const FlatRef& ref, double gravity,
                          const std::optional<Eigen::Vector3d>& gp_corr = std::nullopt);

struct Feedforward {
  QuadControl u;
  AttitudeRef attitude;
};

/// Flatness inversion. `gp_corr6` is the residual mean on [r_ddot; phi_dot, theta_dot, psi_dot].
/// Desired phi/theta rates are central differences of flat_to_attitude with step `fd_step`,
/// extrapolating acc and yaw along jerk and yaw_rate.
Feedforward feedforward(const FlatRef& ref, const PlantConfig& plant,
                        const std::optional<Vector6d>& gp_corr6 = std::nullopt,
                        double fd_step = 1e-3);

/// The feedback law as printed, with measured Euler rates supplied by the caller.
QuadControl feedback(const QuadState& q, const Eigen::Vector3d& euler_rates, const FlatRef& ref,
                     const AttitudeRef& att, const Gains& gains);

/// Same law with the rate term closed on the command itself: the vehicle's Euler rates are
/// W(q) (omega_ff + omega_fb) + rate_bias, solved for omega_fb.
QuadControl feedback_implicit(const QuadState& q, const FlatRef& ref, const AttitudeRef& att,
                              const Eigen::Vector3d& omega_ff, const Gains& gains,
                              const Eigen::Vector3d& rate_bias = Eigen::Vector3d::Zero());

/// Per-axis shaped jerk: nominal jerk minus pole_k times the (pos, vel, acc) error.
Eigen::Vector3d pole_placement_jerk(const Eigen::Vector3d& nominal_jerk,
                                    const Eigen::Matrix3d& error,  // columns: pos, vel, acc
                                    const Eigen::Vector3d& pole_k);

/// Reference state driven by pole_placement_jerk and integrated exactly under constant jerk.
class ShapedReference {
 public:
  explicit ShapedReference(const FlatRef& start);

  /// Advances by dt. `nominal` is the planned reference at the current time and
  /// (r, v, a) the vehicle's position, velocity and acceleration estimate.
  void step(double dt, const FlatRef& nominal, const Eigen::Vector3d& r, const Eigen::Vector3d& v,
            const Eigen::Vector3d& a, const Eigen::Vector3d& pole_k);
  /// Reference at the current time; jerk is the last applied one.
  const FlatRef& ref() const { return ref_; }

 private:
  FlatRef ref_;
};

}  // namespace safegp
