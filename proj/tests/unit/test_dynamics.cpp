#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "safegp/errors.hpp"
#include "safegp/quad_dynamics.hpp"
#include "safegp/systems.hpp"
#include "safegp/trajectory.hpp"

using namespace safegp;

namespace {

PlantConfig matched() {
  PlantConfig p = PlantConfig::defaults();
  p.mass_ratio = 1.0;
  p.wind_accel.setZero();
  return p;
}

QuadState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuadState q;
  q.r = Eigen::Vector3d(u(rng), u(rng), u(rng));
  q.v = Eigen::Vector3d(u(rng), u(rng), u(rng));
  q.phi = u(rng);
  q.theta = 1.2 * u(rng);
  q.psi = 3.0 * u(rng);
  return q;
}

}  // namespace

TEST_CASE("rotation matrix") {
  CHECK((rotation_matrix(0, 0, 0) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::Vector3d y = rotation_matrix(0, 0, std::numbers::pi / 2) * Eigen::Vector3d::UnitX();
  CHECK((y - Eigen::Vector3d::UnitY()).norm() < 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng) / 2.0, c = u(rng);
    const Eigen::Matrix3d r = rotation_matrix(a, b, c);
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    CHECK((r - oracle::zyx_rotation(a, b, c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("euler rate matrix and its inverse") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int i = 0; i < 50; ++i) {
    const double phi = u(rng), theta = u(rng);
    const Eigen::Matrix3d p = euler_rate_matrix(phi, theta) * euler_rate_matrix_inverse(phi, theta);
    CHECK((p - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("nominal derivative") {
  const PlantConfig p = matched();
  QuadState q;
  q.v = Eigen::Vector3d(0.3, -0.2, 0.1);
  QuadControl hover;
  hover.f = -p.nominal_mass * p.gravity;
  const Vector9d d = nominal_derivative(q, hover, p);
  CHECK((d.head<3>() - q.v).norm() == 0.0);
  CHECK(d.tail<6>().norm() < 1e-15);

  const Vector9d fall = nominal_derivative(q, QuadControl{}, p);
  CHECK((fall.segment<3>(3) - Eigen::Vector3d(0, 0, p.gravity)).norm() < 1e-15);

  QuadState bad;
  bad.theta = std::numbers::pi / 2;
  CHECK_THROWS_AS(nominal_derivative(bad, hover, p), NumericError);
}

TEST_CASE("euler-rate block agrees with quaternion kinematics") {
  const PlantConfig p = matched();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double dt = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const QuadState q = random_state(rng);
    QuadControl c;
    c.f = -5.0;
    c.omega = Eigen::Vector3d(u(rng), u(rng), u(rng));
    const Vector9d d = nominal_derivative(q, c, p);
    const Eigen::Vector3d next = oracle::quaternion_step(q.euler(), c.omega, dt);
    Eigen::Vector3d fd;
    for (int k = 0; k < 3; ++k) fd[k] = wrap_angle(next[k] - q.euler()[k]) / dt;
    // state layout holds theta before phi
    const Eigen::Vector3d rates(d[7], d[6], d[8]);
    CHECK((rates - fd).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("true derivative and residual") {
  PlantConfig p = matched();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const QuadState q = random_state(rng);
    QuadControl c;
    c.f = -8.0;
    c.omega = Eigen::Vector3d(0.1, -0.2, 0.3);
    CHECK((true_derivative(q, c, p) - nominal_derivative(q, c, p)).norm() == 0.0);
    CHECK(measured_residual(q, c, nominal_derivative(q, c, p), p).norm() == 0.0);
  }

  p.mass_ratio = 1.4;
  QuadControl hover;
  hover.f = -p.nominal_mass * p.gravity;
  const Vector9d d = true_derivative(QuadState{}, hover, p);
  CHECK(d[5] == doctest::Approx(p.gravity * (1.0 - 1.0 / 1.4)));
  CHECK(d[5] == doctest::Approx(p.gravity * 2.0 / 7.0));
  const Vector6d res = measured_residual(QuadState{}, hover, d, p);
  CHECK(res[2] == doctest::Approx(p.gravity * 2.0 / 7.0));
  CHECK(res.tail<3>().norm() == 0.0);

  PlantConfig windy = matched();
  windy.wind_accel = Eigen::Vector3d(0.1 * windy.gravity, 0, 0);
  const QuadState q = random_state(rng);
  const Vector9d a = true_derivative(q, hover, windy);
  const Vector9d b = true_derivative(q, hover, matched());
  CHECK(((a - b).segment<3>(3) - windy.wind_accel).norm() < 1e-15);
}

TEST_CASE("noisy residual averages to the mismatch") {
  PlantConfig p = PlantConfig::defaults();
  QuadControl hover;
  hover.f = -p.nominal_mass * p.gravity;
  const Vector9d truth = true_derivative(QuadState{}, hover, p);
  const Vector6d injected = residual_channels(truth) - residual_channels(nominal_derivative(QuadState{}, hover, p));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  Vector6d sum = Vector6d::Zero();
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Vector9d obs = truth;
    for (int k = 0; k < 9; ++k) obs[k] += noise(rng);
    sum += measured_residual(QuadState{}, hover, obs, p);
  }
  CHECK(((sum / n) - injected).cwiseAbs().maxCoeff() < 3.0 * 0.01 / 100.0);
}

TEST_CASE("rk4 integration") {
  const PlantConfig p = matched();
  const DerivativeFn zero = [](const QuadState&, const QuadControl&) { return Vector9d::Zero().eval(); };
  QuadState q;
  q.r = Eigen::Vector3d(1, 2, 3);
  q.phi = 0.2;
  const QuadState same = integrate_step(q, QuadControl{}, 0.01, zero);
  CHECK((same.to_vector() - q.to_vector()).norm() == 0.0);

  const DerivativeFn nominal = [&](const QuadState& s, const QuadControl& u) { return nominal_derivative(s, u, p); };
  QuadControl hover;
  hover.f = -p.gravity;
  QuadState h;
  h.r = Eigen::Vector3d(0, 0, -1);
  for (int i = 0; i < 1000; ++i) h = integrate_step(h, hover, 0.01, nominal);
  CHECK((h.r - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);

  // one-step error against a fine reference shrinks like dt^4 per step (dt^5 local)
  QuadState s0;
  s0.v = Eigen::Vector3d(0.5, 0.0, -0.3);
  s0.phi = 0.3;
  s0.theta = -0.2;
  QuadControl c;
  c.f = -12.0;
  c.omega = Eigen::Vector3d(0.8, -0.5, 0.4);
  auto run = [&](double dt, int steps) {
    QuadState s = s0;
    for (int i = 0; i < steps; ++i) s = integrate_step(s, c, dt, nominal);
    return s.to_vector();
  };
  const double T = 0.4;
  const Vector9d ref = run(T / 400.0, 400);
  const double e1 = (run(T / 4.0, 4) - ref).norm();
  const double e2 = (run(T / 8.0, 8) - ref).norm();
  CHECK(e1 / e2 > 12.0);
  CHECK(e1 / e2 < 20.0);
}

TEST_CASE("control clamp") {
  const PlantConfig p = PlantConfig::defaults();
  const double mg = p.nominal_mass * p.gravity;
  QuadControl u;
  u.f = -mg;
  CHECK(clamp_control(u, p).f == -mg);
  u.f = 5.0;
  CHECK(clamp_control(u, p).f == 0.0);
  u.f = -3.0 * mg;
  CHECK(clamp_control(u, p).f == doctest::Approx(-1.8 * mg));
  u.omega = Eigen::Vector3d(10, -10, 1);
  const QuadControl c = clamp_control(u, p);
  CHECK(c.omega[0] == p.rate_limit[0]);
  CHECK(c.omega[1] == -p.rate_limit[1]);
  CHECK(c.omega[2] == 1.0);
}

TEST_CASE("plant validation and helpers") {
  PlantConfig p = PlantConfig::defaults();
  CHECK(p.true_mass() == doctest::Approx(1.4));
  p.mass_ratio = 0.0;
  CHECK_THROWS(p.validate());
  p = PlantConfig::defaults();
  p.thrust_min = 1.0;
  CHECK_THROWS(p.validate());
  CHECK(wrap_angle(3.0 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(0.5) == 0.5);

  QuadState q;
  q.r = Eigen::Vector3d(1, 2, 3);
  q.v = Eigen::Vector3d(4, 5, 6);
  q.phi = 0.1;
  q.theta = 0.2;
  q.psi = 0.3;
  const QuadState back = QuadState::from_vector(q.to_vector());
  CHECK((back.to_vector() - q.to_vector()).norm() == 0.0);
  CHECK(q.features(FeatureSet::full_state).size() == 9);
  CHECK(q.features(FeatureSet::velocity_attitude).size() == 6);
}

TEST_CASE("vertical channel and example system") {
  const VerticalQuadChannel ch(PlantConfig::defaults());
  const Eigen::Vector2d x(-0.5, 0.4);
  const double f = -9.0;
  Eigen::VectorXd u(1);
  u << f;
  const Eigen::VectorXd nominal = ch.derivative(x, u);
  CHECK(nominal[0] == 0.4);
  CHECK(nominal[1] == doctest::Approx(9.81 + f));
  const Eigen::VectorXd truth = ch.true_derivative(x, f);
  CHECK(truth[1] == doctest::Approx(9.81 + f / 1.4));
  CHECK((ch.true_residual(x, f) - (truth - nominal)).norm() < 1e-14);
  // descending: braking residual is the residual at full thrust
  CHECK(ch.braking_residual(x)[1] == doctest::Approx(ch.true_residual(x, ch.control_lo()[0])[1]));
  CHECK(ch.braking_residual(Eigen::Vector2d(-0.5, -0.4))[1] == doctest::Approx(0.0));

  const Example1System ex;
  const Eigen::VectorXd d = ex.drift(Eigen::Vector2d(0.5, -0.3));
  CHECK(d[0] == doctest::Approx(-0.3 + 0.8 * 0.09));
  CHECK(d[1] == doctest::Approx(-0.5 + 0.3 + 0.25 * -0.3));
}

TEST_CASE("quintic boundary conditions") {
  const Quintic q(1.0, 0.5, -0.2, 3.0, 0.0, 0.0, 2.0);
  CHECK(q.at(0).pos == doctest::Approx(1.0));
  CHECK(q.at(0).vel == doctest::Approx(0.5));
  CHECK(q.at(0).acc == doctest::Approx(-0.2));
  CHECK(q.at(2).pos == doctest::Approx(3.0));
  CHECK(std::abs(q.at(2).vel) < 1e-12);
  CHECK(std::abs(q.at(2).acc) < 1e-12);
  CHECK(q.at(5).pos == doctest::Approx(3.0));
  const double h = 1e-5;
  for (double t : {0.3, 1.1, 1.7}) {
    CHECK((q.at(t + h).pos - q.at(t - h).pos) / (2 * h) == doctest::Approx(q.at(t).vel).epsilon(1e-7));
    CHECK((q.at(t + h).acc - q.at(t - h).acc) / (2 * h) == doctest::Approx(q.at(t).jerk).epsilon(1e-6));
  }
}

TEST_CASE("lissajous derivatives") {
  const Lissajous l;
  const double h = 1e-5;
  for (double t : {0.0, 1.3, 7.7}) {
    const FlatRef r = l.at(t);
    CHECK(((l.at(t + h).pos - l.at(t - h).pos) / (2 * h) - r.vel).norm() < 1e-8);
    CHECK(((l.at(t + h).vel - l.at(t - h).vel) / (2 * h) - r.acc).norm() < 1e-8);
    CHECK(((l.at(t + h).acc - l.at(t - h).acc) / (2 * h) - r.jerk).norm() < 1e-8);
  }
}
