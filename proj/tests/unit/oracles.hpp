#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

// Test-side reference implementations, written without calling into the library.
namespace oracle {

inline double se_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double sf2,
                        const Eigen::VectorXd& ell) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double d = (x[j] - y[j]) / ell[j];
    s += d * d;
  }
  return sf2 * std::exp(-0.5 * s);
}

// (K + sn2 I)^{-1} by full-pivot LU on the rows of `x`.
inline Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& x, double sf2, const Eigen::VectorXd& ell,
                                    double sn2) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k(i, j) = se_kernel(x.row(i).transpose(), x.row(j).transpose(), sf2, ell);
    }
  }
  k.diagonal().array() += sn2;
  return k.fullPivLu().inverse();
}

struct MeanVar {
  double mean;
  double var;
};

// Posterior by solving the linear systems directly.
inline MeanVar posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                         double sf2, const Eigen::VectorXd& ell, double sn2) {
  const Eigen::Index n = x.rows();
  if (n == 0) return {0.0, sf2};
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ks[i] = se_kernel(x.row(i).transpose(), q, sf2, ell);
    for (Eigen::Index j = 0; j < n; ++j) {
      k(i, j) = se_kernel(x.row(i).transpose(), x.row(j).transpose(), sf2, ell);
    }
  }
  k.diagonal().array() += sn2;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  return {ks.dot(lu.solve(y)), sf2 - ks.dot(lu.solve(ks))};
}

// Body-to-world rotation composed from elementary rotations about z, y, x.
inline Eigen::Matrix3d zyx_rotation(double phi, double theta, double psi) {
  return (Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(phi, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// (phi, theta, psi) of a ZYX rotation matrix away from gimbal lock.
inline Eigen::Vector3d zyx_angles(const Eigen::Matrix3d& r) {
  return {std::atan2(r(2, 1), r(2, 2)), -std::asin(r(2, 0)), std::atan2(r(1, 0), r(0, 0))};
}

// Euler angles after flying body rates `omega` for `dt`, via quaternion integration.
inline Eigen::Vector3d quaternion_step(const Eigen::Vector3d& euler, const Eigen::Vector3d& omega,
                                       double dt) {
  const Eigen::Quaterniond q(zyx_rotation(euler[0], euler[1], euler[2]));
  const double angle = omega.norm() * dt;
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  if (angle > 0.0) dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega.normalized()));
  return zyx_angles((q * dq).normalized().toRotationMatrix());
}

// Minimizes |u - u_hat|^2 over a^T u >= b inside the box by scanning a lattice.
inline Eigen::VectorXd grid_qp_2d(const Eigen::Vector2d& u_hat, const Eigen::Vector2d& a, double b,
                                  const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int n,
                                  bool& feasible) {
  feasible = false;
  double best = INFINITY;
  Eigen::Vector2d arg = lo;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d u(lo[0] + (hi[0] - lo[0]) * i / (n - 1), lo[1] + (hi[1] - lo[1]) * j / (n - 1));
      if (a.dot(u) < b) continue;
      const double obj = (u - u_hat).squaredNorm();
      if (obj < best) {
        best = obj;
        arg = u;
        feasible = true;
      }
    }
  }
  return arg;
}

}  // namespace oracle
