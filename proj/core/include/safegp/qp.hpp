#pragma once

#include <Eigen/Dense>

namespace safegp {

/// minimize |u - u_hat|^2  subject to  a^T u >= b,  lo <= u <= hi.
struct FilterQp {
  Eigen::VectorXd u_hat;
  Eigen::VectorXd a;
  double b = 0.0;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Eigen::Index dim() const { return u_hat.size(); }
  void validate() const;
};

enum class QpStatus { optimal, infeasible };

struct QpSolution {
  Eigen::VectorXd u;
  QpStatus status = QpStatus::optimal;
  double multiplier = 0.0;  // lambda >= 0 on the halfspace constraint
  int iterations = 0;
};

/// max of a^T u over the box.
double max_over_box(const Eigen::VectorXd& a, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
/// A box corner attaining max_over_box (lo where a_j <= 0).
Eigen::VectorXd argmax_over_box(const Eigen::VectorXd& a, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi);

/// Exact solve. When infeasible, `u` is argmax_over_box(a) and status is infeasible.
QpSolution solve(const FilterQp& p);

}  // namespace safegp
