#pragma once

#include <Eigen/Dense>

#include "safegp/quad_dynamics.hpp"

namespace safegp {

/// x_dot = f(x) + g(x) u, u in the box [control_lo, control_hi].
class ControlAffineSystem {
 public:
  virtual ~ControlAffineSystem() = default;

  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index control_dim() const = 0;
  virtual Eigen::VectorXd drift(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd control_lo() const = 0;
  virtual Eigen::VectorXd control_hi() const = 0;

  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

/// Altitude channel of the quadrotor with zero attitude: x = (z, z_dot), u = f.
/// The nominal model uses the nominal mass; the true one uses mass_ratio and
/// the z component of the wind.
class VerticalQuadChannel : public ControlAffineSystem {
 public:
  explicit VerticalQuadChannel(PlantConfig plant);

  Eigen::Index state_dim() const override { return 2; }
  Eigen::Index control_dim() const override { return 1; }
  Eigen::VectorXd drift(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd control_lo() const override;
  Eigen::VectorXd control_hi() const override;

  const PlantConfig& plant() const { return plant_; }

  Eigen::VectorXd true_derivative(const Eigen::VectorXd& x, double f) const;
  /// True minus nominal derivative; only the z_dot channel is nonzero.
  Eigen::VectorXd true_residual(const Eigen::VectorXd& x, double f) const;
  /// Residual under the thrust that best slows the current vertical motion:
  /// full thrust when descending (z_dot >= 0), zero thrust when climbing.
  Eigen::VectorXd braking_residual(const Eigen::VectorXd& x) const;

 private:
  PlantConfig plant_;
};

/// x1_dot = x2 + 0.8 x2^2,  x2_dot = -x1 - x2 + x1^2 x2. No inputs.
class Example1System : public ControlAffineSystem {
 public:
  Eigen::Index state_dim() const override { return 2; }
  Eigen::Index control_dim() const override { return 0; }
  Eigen::VectorXd drift(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd control_lo() const override { return Eigen::VectorXd(0); }
  Eigen::VectorXd control_hi() const override { return Eigen::VectorXd(0); }
};

/// Classical RK4 step of x_dot = fn(x).
template <typename Fn>
Eigen::VectorXd rk4_step(const Eigen::VectorXd& x, double dt, Fn&& fn) {
  const Eigen::VectorXd k1 = fn(x);
  const Eigen::VectorXd k2 = fn((x + 0.5 * dt * k1).eval());
  const Eigen::VectorXd k3 = fn((x + 0.5 * dt * k2).eval());
  const Eigen::VectorXd k4 = fn((x + dt * k3).eval());
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace safegp
