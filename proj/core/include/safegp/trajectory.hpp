#pragma once

#include <Eigen/Dense>

#include "safegp/flatness.hpp"

namespace safegp {

/// r(t) = center + amplitude .* sin(2 pi t ./ period + phase), constant yaw.
struct Lissajous {
  Eigen::Vector3d center = Eigen::Vector3d(0.0, 0.0, -1.0);
  Eigen::Vector3d amplitude = Eigen::Vector3d(1.5, 1.0, 0.3);
  Eigen::Vector3d period = Eigen::Vector3d(12.0, 6.0, 12.0);
  Eigen::Vector3d phase = Eigen::Vector3d::Zero();
  double yaw = 0.0;

  FlatRef at(double t) const;
  void validate() const;
};

/// Scalar quintic through (p0, v0, a0) at t = 0 and (p1, v1, a1) at t = duration.
/// Past the end it continues at constant velocity v1.
class Quintic {
 public:
  Quintic(double p0, double v0, double a0, double p1, double v1, double a1, double duration);

  struct Sample {
    double pos = 0.0;
    double vel = 0.0;
    double acc = 0.0;
    double jerk = 0.0;
  };
  Sample at(double t) const;
  double duration() const { return duration_; }

 private:
  Eigen::Matrix<double, 6, 1> c_;  // ascending powers of t
  double duration_;
  double p1_, v1_;
};

}  // namespace safegp
