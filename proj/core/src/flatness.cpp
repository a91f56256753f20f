#include "safegp/flatness.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "safegp/errors.hpp"

namespace safegp {

Eigen::Vector3d Gains::pole_row(double p1, double p2, double p3) {
  // (s - p1)(s - p2)(s - p3) = s^3 + k_acc s^2 + k_vel s + k_pos
  const double k_acc = -(p1 + p2 + p3);
  const double k_vel = p1 * p2 + p1 * p3 + p2 * p3;
  const double k_pos = -(p1 * p2 * p3);
  return {k_pos, k_vel, k_acc};
}

Eigen::Vector3cd Gains::poles() const {
  Eigen::Matrix3d companion;
  companion << 0.0, 1.0, 0.0,
               0.0, 0.0, 1.0,
               -pole_k[0], -pole_k[1], -pole_k[2];
  return companion.eigenvalues();
}

void Gains::validate() const {
  if (!(kp >= 0.0) || !(kd >= 0.0) || !(kp_bar >= 0.0)) {
    throw UsageError("gains: kp, kd and kp_bar must be non-negative");
  }
  if (!pole_k.allFinite()) throw UsageError("gains: pole_k must be finite");
  const Eigen::Vector3cd p = poles();
  for (Eigen::Index i = 0; i < 3; ++i) {
    if (!(p[i].real() < 0.0)) {
      std::ostringstream os;
      os << "gains: pole_k places a closed-loop pole at " << p[i].real() << (p[i].imag() >= 0 ? "+" : "")
         << p[i].imag() << "i";
      throw UsageError(os.str());
    }
  }
}

Gains Gains::high_gain() {
  Gains g;
  g.kp = 8.0;
  g.kd = 4.5;
  g.kp_bar = 1.0;
  return g;
}

Gains Gains::low_gain() { return Gains{}; }

Attitude flat_to_attitude(const FlatRef& ref, double gravity,
                          const std::optional<Eigen::Vector3d>& gp_corr) {
  Eigen::Vector3d acc = ref.acc;
  if (gp_corr) acc -= *gp_corr;
  const double cp = std::cos(ref.yaw), sp = std::sin(ref.yaw);
  const double beta_a = -acc.x() * cp - acc.y() * sp;
  const double beta_b = -acc.z() + gravity;
  const double beta_c = -acc.x() * sp + acc.y() * cp;
  if (beta_a == 0.0 && beta_b == 0.0 && beta_c == 0.0) {
    throw NumericError("flat_to_attitude: commanded specific force is zero");
  }
  Attitude att;
  att.theta = std::atan2(beta_a, beta_b);
  att.phi = std::atan2(beta_c, std::hypot(beta_a, beta_b));
  if (!(std::abs(att.theta) < kThetaGuard)) {
    std::ostringstream os;
    os << "flat_to_attitude: desired pitch " << att.theta << " beyond singularity guard";
    throw NumericError(os.str());
  }
  return att;
}

Feedforward feedforward(const FlatRef& ref, const PlantConfig& plant,
                        const std::optional<Vector6d>& gp_corr6, double fd_step) {
  if (!(fd_step > 0.0)) throw UsageError("feedforward: fd_step must be positive");
  std::optional<Eigen::Vector3d> corr;
  Eigen::Vector3d rate_corr = Eigen::Vector3d::Zero();
  if (gp_corr6) {
    corr = gp_corr6->head<3>();
    rate_corr = gp_corr6->tail<3>();
  }

  const Attitude att = flat_to_attitude(ref, plant.gravity, corr);

  FlatRef ahead = ref;
  ahead.acc = ref.acc + fd_step * ref.jerk;
  ahead.yaw = ref.yaw + fd_step * ref.yaw_rate;
  FlatRef behind = ref;
  behind.acc = ref.acc - fd_step * ref.jerk;
  behind.yaw = ref.yaw - fd_step * ref.yaw_rate;
  const Attitude a1 = flat_to_attitude(ahead, plant.gravity, corr);
  const Attitude a0 = flat_to_attitude(behind, plant.gravity, corr);

  Feedforward out;
  out.attitude.phi = att.phi;
  out.attitude.theta = att.theta;
  out.attitude.psi = ref.yaw;
  out.attitude.rates = Eigen::Vector3d((a1.phi - a0.phi) / (2.0 * fd_step),
                                       (a1.theta - a0.theta) / (2.0 * fd_step), ref.yaw_rate);

  const Eigen::Vector3d specific =
      ref.acc - (corr ? *corr : Eigen::Vector3d::Zero()) - Eigen::Vector3d(0.0, 0.0, plant.gravity);
  out.u.f = -plant.nominal_mass * specific.norm();
  out.u.omega =
      euler_rate_matrix_inverse(att.phi, att.theta) * (out.attitude.rates - rate_corr);
  return out;
}

namespace {

Eigen::Vector3d cross_position_term(const QuadState& q, const FlatRef& ref) {
  return {ref.pos.y() - q.r.y(), q.r.x() - ref.pos.x(), 0.0};
}

double thrust_feedback(const QuadState& q, const FlatRef& ref, const Gains& gains) {
  const Eigen::Vector3d axis = rotation_matrix(q.phi, q.theta, q.psi).col(2);
  return gains.kp * axis.dot(ref.pos - q.r) + gains.kd * axis.dot(ref.vel - q.v);
}

Eigen::Vector3d angle_error(const QuadState& q, const AttitudeRef& att) {
  return {wrap_angle(att.phi - q.phi), wrap_angle(att.theta - q.theta), wrap_angle(att.psi - q.psi)};
}

}  // namespace

QuadControl feedback(const QuadState& q, const Eigen::Vector3d& euler_rates, const FlatRef& ref,
                     const AttitudeRef& att, const Gains& gains) {
  QuadControl u;
  u.f = thrust_feedback(q, ref, gains);
  u.omega = gains.kp * angle_error(q, att) + gains.kd * (att.rates - euler_rates) +
            gains.kp_bar * cross_position_term(q, ref);
  return u;
}

QuadControl feedback_implicit(const QuadState& q, const FlatRef& ref, const AttitudeRef& att,
                              const Eigen::Vector3d& omega_ff, const Gains& gains,
                              const Eigen::Vector3d& rate_bias) {
  const Eigen::Matrix3d w = euler_rate_matrix(q.phi, q.theta);
  const Eigen::Vector3d rhs = gains.kp * angle_error(q, att) +
                              gains.kd * (att.rates - w * omega_ff - rate_bias) +
                              gains.kp_bar * cross_position_term(q, ref);
  const Eigen::Matrix3d lhs = Eigen::Matrix3d::Identity() + gains.kd * w;
  QuadControl u;
  u.f = thrust_feedback(q, ref, gains);
  u.omega = lhs.partialPivLu().solve(rhs);
  return u;
}

Eigen::Vector3d pole_placement_jerk(const Eigen::Vector3d& nominal_jerk, const Eigen::Matrix3d& error,
                                    const Eigen::Vector3d& pole_k) {
  return nominal_jerk - error * pole_k;
}

ShapedReference::ShapedReference(const FlatRef& start) : ref_(start) {}

void ShapedReference::step(double dt, const FlatRef& nominal, const Eigen::Vector3d& r,
                           const Eigen::Vector3d& v, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& pole_k) {
  Eigen::Matrix3d error;
  error.col(0) = r - nominal.pos;
  error.col(1) = v - nominal.vel;
  error.col(2) = a - nominal.acc;
  const Eigen::Vector3d j = pole_placement_jerk(nominal.jerk, error, pole_k);
  ref_.jerk = j;
  ref_.pos += dt * ref_.vel + 0.5 * dt * dt * ref_.acc + dt * dt * dt / 6.0 * j;
  ref_.vel += dt * ref_.acc + 0.5 * dt * dt * j;
  ref_.acc += dt * j;
  ref_.yaw = nominal.yaw;
  ref_.yaw_rate = nominal.yaw_rate;
}

}  // namespace safegp
