#include "safegp/quad_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "safegp/errors.hpp"

namespace safegp {

Eigen::Index feature_dim(FeatureSet set) {
  return set == FeatureSet::full_state ? 9 : 6;
}

Vector9d QuadState::to_vector() const {
  Vector9d x;
  x << r, v, theta, phi, psi;
  return x;
}

QuadState QuadState::from_vector(const Vector9d& x) {
  QuadState q;
  q.r = x.segment<3>(0);
  q.v = x.segment<3>(3);
  q.theta = x[6];
  q.phi = x[7];
  q.psi = x[8];
  return q;
}

Eigen::VectorXd QuadState::features(FeatureSet set) const {
  const Vector9d x = to_vector();
  if (set == FeatureSet::full_state) return x;
  return x.tail<6>();
}

PlantConfig PlantConfig::defaults() {
  PlantConfig cfg;
  cfg.nominal_mass = 1.0;
  cfg.mass_ratio = 1.4;
  cfg.gravity = 9.81;
  cfg.wind_accel = Eigen::Vector3d(-0.1 * cfg.gravity, 0.0, 0.0);
  cfg.thrust_min = -1.8 * cfg.nominal_mass * cfg.gravity;
  cfg.thrust_max = 0.0;
  return cfg;
}

void PlantConfig::validate() const {
  if (!(nominal_mass > 0.0)) throw UsageError("plant: nominal_mass must be positive");
  if (!(mass_ratio > 0.0)) throw UsageError("plant: mass_ratio must be positive");
  if (!(gravity > 0.0)) throw UsageError("plant: gravity must be positive");
  if (!(thrust_min < thrust_max)) throw UsageError("plant: thrust_min must be below thrust_max");
  if (!wind_accel.allFinite()) throw UsageError("plant: wind_accel must be finite");
  if (!(rate_limit.array() > 0.0).all()) throw UsageError("plant: rate limits must be positive");
}

Eigen::Matrix3d rotation_matrix(double phi, double theta, double psi) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(psi), sp = std::sin(psi);
  Eigen::Matrix3d r;
  r << ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp,
       ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp,
       -st, sf * ct, cf * ct;
  return r;
}

Eigen::Matrix3d euler_rate_matrix(double phi, double theta) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double tt = std::tan(theta), sec = 1.0 / std::cos(theta);
  Eigen::Matrix3d w;
  w << 1.0, sf * tt, cf * tt,
       0.0, cf, -sf,
       0.0, sf * sec, cf * sec;
  return w;
}

Eigen::Matrix3d euler_rate_matrix_inverse(double phi, double theta) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  Eigen::Matrix3d w;
  w << 1.0, 0.0, -st,
       0.0, cf, sf * ct,
       0.0, -sf, cf * ct;
  return w;
}

void check_attitude(const QuadState& q) {
  if (!(std::abs(q.theta) < kThetaGuard)) {
    std::ostringstream os;
    os << "attitude singularity: theta=" << q.theta << " (phi=" << q.phi << ", psi=" << q.psi
       << ", r=[" << q.r.transpose() << "])";
    throw NumericError(os.str());
  }
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

namespace {

Vector9d derivative_with_mass(const QuadState& q, const QuadControl& u, double mass,
                              double gravity, const Eigen::Vector3d& extra_accel) {
  check_attitude(q);
  const Eigen::Matrix3d rot = rotation_matrix(q.phi, q.theta, q.psi);
  const Eigen::Vector3d acc =
      Eigen::Vector3d(0.0, 0.0, gravity) + rot.col(2) * (u.f / mass) + extra_accel;
  const Eigen::Vector3d rates = euler_rate_matrix(q.phi, q.theta) * u.omega;  // phi, theta, psi
  Vector9d d;
  d << q.v, acc, rates[1], rates[0], rates[2];
  return d;
}

}  // namespace

Vector9d nominal_derivative(const QuadState& q, const QuadControl& u, const PlantConfig& cfg) {
  return derivative_with_mass(q, u, cfg.nominal_mass, cfg.gravity, Eigen::Vector3d::Zero());
}

Vector9d true_derivative(const QuadState& q, const QuadControl& u, const PlantConfig& cfg) {
  return derivative_with_mass(q, u, cfg.true_mass(), cfg.gravity, cfg.wind_accel);
}

Vector6d residual_channels(const Vector9d& qdot) {
  Vector6d s;
  s << qdot.segment<3>(3), qdot[7], qdot[6], qdot[8];
  return s;
}

Vector6d measured_residual(const QuadState& q, const QuadControl& u, const Vector9d& qdot_observed,
                           const PlantConfig& cfg) {
  return residual_channels(qdot_observed) - residual_channels(nominal_derivative(q, u, cfg));
}

QuadState integrate_step(const QuadState& q, const QuadControl& u, double dt,
                         const DerivativeFn& derivative) {
  if (!(dt > 0.0)) throw UsageError("integrate_step: dt must be positive");
  const Vector9d x0 = q.to_vector();
  const auto at = [&](const Vector9d& x) { return derivative(QuadState::from_vector(x), u); };
  const Vector9d k1 = at(x0);
  const Vector9d k2 = at(x0 + 0.5 * dt * k1);
  const Vector9d k3 = at(x0 + 0.5 * dt * k2);
  const Vector9d k4 = at(x0 + dt * k3);
  QuadState out = QuadState::from_vector(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  out.phi = wrap_angle(out.phi);
  out.theta = wrap_angle(out.theta);
  out.psi = wrap_angle(out.psi);
  check_attitude(out);
  return out;
}

QuadControl clamp_control(const QuadControl& u, const PlantConfig& cfg) {
  QuadControl c;
  c.f = std::clamp(u.f, cfg.thrust_min, cfg.thrust_max);
  c.omega = u.omega.cwiseMax(-cfg.rate_limit).cwiseMin(cfg.rate_limit);
  return c;
}

}  // namespace safegp
