#include "safegp/systems.hpp"

#include "safegp/errors.hpp"

namespace safegp {

Eigen::VectorXd ControlAffineSystem::derivative(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& u) const {
  if (u.size() != control_dim()) throw UsageError("derivative: control dimension mismatch");
  Eigen::VectorXd d = drift(x);
  if (control_dim() > 0) d += input_matrix(x) * u;
  return d;
}

VerticalQuadChannel::VerticalQuadChannel(PlantConfig plant) : plant_(std::move(plant)) {
  plant_.validate();
}

Eigen::VectorXd VerticalQuadChannel::drift(const Eigen::VectorXd& x) const {
  return Eigen::Vector2d(x[1], plant_.gravity);
}

Eigen::MatrixXd VerticalQuadChannel::input_matrix(const Eigen::VectorXd&) const {
  return Eigen::Vector2d(0.0, 1.0 / plant_.nominal_mass);
}

Eigen::VectorXd VerticalQuadChannel::control_lo() const {
  return Eigen::VectorXd::Constant(1, plant_.thrust_min);
}

Eigen::VectorXd VerticalQuadChannel::control_hi() const {
  return Eigen::VectorXd::Constant(1, plant_.thrust_max);
}

Eigen::VectorXd VerticalQuadChannel::true_derivative(const Eigen::VectorXd& x, double f) const {
  return Eigen::Vector2d(x[1], plant_.gravity + f / plant_.true_mass() + plant_.wind_accel.z());
}

Eigen::VectorXd VerticalQuadChannel::true_residual(const Eigen::VectorXd& x, double f) const {
  return true_derivative(x, f) - derivative(x, Eigen::VectorXd::Constant(1, f));
}

Eigen::VectorXd VerticalQuadChannel::braking_residual(const Eigen::VectorXd& x) const {
  return true_residual(x, x[1] >= 0.0 ? plant_.thrust_min : plant_.thrust_max);
}

Eigen::VectorXd Example1System::drift(const Eigen::VectorXd& x) const {
  const double x1 = x[0], x2 = x[1];
  return Eigen::Vector2d(x2 + 0.8 * x2 * x2, -x1 - x2 + x1 * x1 * x2);
}

Eigen::MatrixXd Example1System::input_matrix(const Eigen::VectorXd&) const {
  return Eigen::MatrixXd(2, 0);
}

}  // namespace safegp
