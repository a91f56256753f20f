#include "safegp/qp.hpp"

#include <algorithm>
#include <vector>

#include "safegp/errors.hpp"

namespace safegp {

void FilterQp::validate() const {
  const Eigen::Index m = u_hat.size();
  if (m < 1 || m > 8) throw UsageError("FilterQp: dimension must be in 1..8");
  if (a.size() != m || lo.size() != m || hi.size() != m) {
    throw UsageError("FilterQp: u_hat, a, lo, hi must have equal length");
  }
  if (!(lo.array() <= hi.array()).all()) throw UsageError("FilterQp: empty box (lo > hi)");
}

double max_over_box(const Eigen::VectorXd& a, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) total += a[j] > 0.0 ? a[j] * hi[j] : a[j] * lo[j];
  return total;
}

Eigen::VectorXd argmax_over_box(const Eigen::VectorXd& a, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi) {
  Eigen::VectorXd u(a.size());
  for (Eigen::Index j = 0; j < a.size(); ++j) u[j] = a[j] > 0.0 ? hi[j] : lo[j];
  return u;
}

// The minimizer is u(lambda) = clip(u_hat + lambda a) for the smallest lambda >= 0 with
// a^T u(lambda) >= b. a^T u(lambda) is nondecreasing and piecewise linear; each piece
// corresponds to one active set of box bounds, so the pieces are walked in order until
// the one containing the root.
QpSolution solve(const FilterQp& p) {
  p.validate();
  const Eigen::Index m = p.dim();
  const auto point_at = [&](double lambda) {
    return (p.u_hat + lambda * p.a).cwiseMax(p.lo).cwiseMin(p.hi).eval();
  };

  QpSolution sol;
  sol.u = point_at(0.0);
  if (p.a.dot(sol.u) >= p.b) return sol;

  if (max_over_box(p.a, p.lo, p.hi) < p.b) {
    sol.u = argmax_over_box(p.a, p.lo, p.hi);
    sol.status = QpStatus::infeasible;
    return sol;
  }

  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(2 * m));
  for (Eigen::Index j = 0; j < m; ++j) {
    if (p.a[j] == 0.0) continue;
    for (double bound : {p.lo[j], p.hi[j]}) {
      const double lambda = (bound - p.u_hat[j]) / p.a[j];
      if (lambda > 0.0) breaks.push_back(lambda);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  double start = 0.0;
  double value = p.a.dot(sol.u);
  for (std::size_t k = 0; k <= breaks.size(); ++k) {
    ++sol.iterations;
    // Slope on (start, end): sum of a_j^2 over coordinates strictly inside the box.
    const double end = k < breaks.size() ? breaks[k] : start + 1.0;
    const double mid = 0.5 * (start + end);
    double slope = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double x = p.u_hat[j] + mid * p.a[j];
      if (x > p.lo[j] && x < p.hi[j]) slope += p.a[j] * p.a[j];
    }
    if (slope > 0.0) {
      const double lambda = start + (p.b - value) / slope;
      if (k == breaks.size() || lambda <= end) {
        sol.multiplier = lambda;
        sol.u = point_at(lambda);
        return sol;
      }
    }
    if (k == breaks.size()) break;
    start = end;
    value = p.a.dot(point_at(start));
    if (value >= p.b) {
      sol.multiplier = start;
      sol.u = point_at(start);
      return sol;
    }
  }
  // Unreachable for a feasible problem; fall back on the best corner.
  sol.u = argmax_over_box(p.a, p.lo, p.hi);
  sol.status = QpStatus::infeasible;
  return sol;
}

}  // namespace safegp
