#include "safegp/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "safegp/errors.hpp"

namespace safegp {

FlatRef Lissajous::at(double t) const {
  FlatRef ref;
  for (int i = 0; i < 3; ++i) {
    const double w = 2.0 * std::numbers::pi / period[i];
    const double arg = w * t + phase[i];
    const double s = std::sin(arg), c = std::cos(arg);
    const double a = amplitude[i];
    ref.pos[i] = center[i] + a * s;
    ref.vel[i] = a * w * c;
    ref.acc[i] = -a * w * w * s;
    ref.jerk[i] = -a * w * w * w * c;
  }
  ref.yaw = yaw;
  ref.yaw_rate = 0.0;
  return ref;
}

void Lissajous::validate() const {
  if (!(period.array() > 0.0).all()) throw UsageError("lissajous: periods must be positive");
  if (!center.allFinite() || !amplitude.allFinite() || !phase.allFinite()) {
    throw UsageError("lissajous: parameters must be finite");
  }
}

Quintic::Quintic(double p0, double v0, double a0, double p1, double v1, double a1, double duration)
    : duration_(duration), p1_(p1), v1_(v1) {
  if (!(duration > 0.0)) throw UsageError("Quintic: duration must be positive");
  const double t = duration, t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  c_[0] = p0;
  c_[1] = v0;
  c_[2] = 0.5 * a0;
  // Remaining three coefficients from the end conditions.
  Eigen::Matrix3d m;
  m << t3, t4, t5,
       3 * t2, 4 * t3, 5 * t4,
       6 * t, 12 * t2, 20 * t3;
  const Eigen::Vector3d rhs(p1 - (c_[0] + c_[1] * t + c_[2] * t2), v1 - (c_[1] + 2 * c_[2] * t),
                            a1 - 2 * c_[2]);
  c_.tail<3>() = m.fullPivLu().solve(rhs);
}

Quintic::Sample Quintic::at(double t) const {
  Sample s;
  if (t >= duration_) {
    s.pos = p1_ + v1_ * (t - duration_);
    s.vel = v1_;
    return s;
  }
  t = std::max(t, 0.0);
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  s.pos = c_[0] + c_[1] * t + c_[2] * t2 + c_[3] * t3 + c_[4] * t4 + c_[5] * t5;
  s.vel = c_[1] + 2 * c_[2] * t + 3 * c_[3] * t2 + 4 * c_[4] * t3 + 5 * c_[5] * t4;
  s.acc = 2 * c_[2] + 6 * c_[3] * t + 12 * c_[4] * t2 + 20 * c_[5] * t3;
  s.jerk = 6 * c_[3] + 24 * c_[4] * t + 60 * c_[5] * t2;
  return s;
}

}  // namespace safegp
