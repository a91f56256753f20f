#include "safegp/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "safegp/errors.hpp"
#include "safegp/log.hpp"
#include "safegp/qp.hpp"

namespace safegp {

void ResidualModel::evaluate_one(const Eigen::VectorXd& x, Eigen::VectorXd& mean,
                                 Eigen::VectorXd& stddev) const {
  Eigen::MatrixXd m, s;
  evaluate(x, m, s);
  mean = m.col(0);
  stddev = s.col(0);
}

GpResidual::GpResidual(Eigen::Index state_dim, std::vector<Channel> channels)
    : state_dim_(state_dim), channels_(std::move(channels)) {
  for (const Channel& c : channels_) {
    if (c.model == nullptr) throw UsageError("GpResidual: null model");
    if (c.state_index < 0 || c.state_index >= state_dim_) {
      throw UsageError("GpResidual: channel index out of range");
    }
    if (static_cast<Eigen::Index>(c.features.size()) != c.model->dim()) {
      throw UsageError("GpResidual: feature list does not match the model dimension");
    }
    for (Eigen::Index f : c.features) {
      if (f < 0 || f >= state_dim_) throw UsageError("GpResidual: feature index out of range");
    }
  }
}

void GpResidual::evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                          Eigen::MatrixXd& stddev) const {
  if (states.rows() != state_dim_) throw UsageError("GpResidual: state dimension mismatch");
  const Eigen::Index p = states.cols();
  mean = Eigen::MatrixXd::Zero(state_dim_, p);
  stddev = Eigen::MatrixXd::Zero(state_dim_, p);
  for (const Channel& c : channels_) {
    const Eigen::MatrixXd queries = states(c.features, Eigen::all).transpose();
    const PosteriorBatch post = c.model->posterior_batch(queries);
    mean.row(c.state_index) = post.mean.transpose();
    stddev.row(c.state_index) = post.variance.cwiseMax(0.0).cwiseSqrt().transpose();
  }
}

OracleResidual OracleResidual::zero(Eigen::Index state_dim) {
  return OracleResidual([state_dim](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(state_dim).eval();
  });
}

void OracleResidual::evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                              Eigen::MatrixXd& stddev) const {
  mean.resize(states.rows(), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const Eigen::VectorXd d = fn_(states.col(j));
    if (d.size() != states.rows()) throw UsageError("OracleResidual: wrong output dimension");
    mean.col(j) = d;
  }
  stddev = Eigen::MatrixXd::Zero(states.rows(), states.cols());
}

VerticalEllipseFamily::VerticalEllipseFamily(double center, double z_scale2)
    : center_(center), z_scale2_(z_scale2) {
  if (!(z_scale2_ > 0.0)) throw UsageError("VerticalEllipseFamily: z_scale2 must be positive");
}

double VerticalEllipseFamily::value(const Eigen::VectorXd& x, double mu) const {
  const double dz = x[0] - center_;
  return 1.0 - dz * dz / z_scale2_ - mu * x[1] * x[1];
}

Eigen::VectorXd VerticalEllipseFamily::gradient(const Eigen::VectorXd& x, double mu) const {
  return Eigen::Vector2d(-2.0 * (x[0] - center_) / z_scale2_, -2.0 * mu * x[1]);
}

double VerticalEllipseFamily::volume(double mu) const {
  return std::numbers::pi * std::sqrt(z_scale2_) / std::sqrt(mu);
}

QuadraticField QuadraticField::from_monomials(double c, double x1, double x2, double x1x1,
                                              double x1x2, double x2x2) {
  QuadraticField q;
  q.c = c;
  q.b = Eigen::Vector2d(x1, x2);
  q.a << x1x1, 0.5 * x1x2, 0.5 * x1x2, x2x2;
  return q;
}

void BarrierCertificate::validate() const {
  if (!family) throw UsageError("certificate: no family");
  if (!family->valid_mu(mu)) throw UsageError("certificate: mu outside the family's range");
  if (!(gamma > 0.0)) throw UsageError("certificate: gamma must be positive");
}

nlohmann::json BarrierCertificate::to_json() const {
  return {{"family", family ? family->name() : std::string()}, {"mu", mu}, {"gamma", gamma}};
}

// ---------------------------------------------------------------------------

StateGrid::StateGrid(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::VectorXd spacing)
    : lower_(std::move(lower)), spacing_(std::move(spacing)) {
  const Eigen::Index n = lower_.size();
  if (n < 1 || upper.size() != n || spacing_.size() != n) {
    throw UsageError("StateGrid: lower, upper and spacing must share a nonzero dimension");
  }
  counts_.resize(n);
  size_ = 1;
  for (Eigen::Index d = 0; d < n; ++d) {
    if (!(spacing_[d] > 0.0)) throw UsageError("StateGrid: spacing must be positive");
    if (!(upper[d] >= lower_[d])) throw UsageError("StateGrid: upper below lower");
    counts_[d] = static_cast<int>(std::floor((upper[d] - lower_[d]) / spacing_[d] + 1e-9)) + 1;
    size_ *= static_cast<std::size_t>(counts_[d]);
  }
}

Eigen::VectorXi StateGrid::multi_index(std::size_t flat) const {
  Eigen::VectorXi idx(dim());
  for (Eigen::Index d = dim() - 1; d >= 0; --d) {
    const auto c = static_cast<std::size_t>(counts_[d]);
    idx[d] = static_cast<int>(flat % c);
    flat /= c;
  }
  return idx;
}

std::size_t StateGrid::flat_index(const Eigen::VectorXi& idx) const {
  std::size_t flat = 0;
  for (Eigen::Index d = 0; d < dim(); ++d) {
    flat = flat * static_cast<std::size_t>(counts_[d]) + static_cast<std::size_t>(idx[d]);
  }
  return flat;
}

Eigen::VectorXd StateGrid::point(std::size_t flat) const {
  const Eigen::VectorXi idx = multi_index(flat);
  return lower_ + (idx.cast<double>().array() * spacing_.array()).matrix();
}

Eigen::MatrixXd StateGrid::points() const {
  Eigen::MatrixXd out(dim(), static_cast<Eigen::Index>(size_));
  for (std::size_t p = 0; p < size_; ++p) out.col(static_cast<Eigen::Index>(p)) = point(p);
  return out;
}

StateGrid StateGrid::refined(int factor) const {
  if (factor < 1) throw UsageError("StateGrid::refined: factor must be >= 1");
  const Eigen::VectorXd upper =
      lower_ + ((counts_.array() - 1).cast<double>() * spacing_.array()).matrix();
  return StateGrid(lower_, upper, spacing_ / factor);
}

GridSnapshot snapshot(const StateGrid& grid, const ControlAffineSystem& system,
                      const ResidualModel& residual, bool constant_input) {
  if (grid.dim() != system.state_dim()) throw UsageError("snapshot: grid/system dimension mismatch");
  GridSnapshot snap;
  snap.grid = &grid;
  snap.states = grid.points();
  const auto p = static_cast<Eigen::Index>(grid.size());
  snap.drift.resize(system.state_dim(), p);
  for (Eigen::Index j = 0; j < p; ++j) snap.drift.col(j) = system.drift(snap.states.col(j));
  if (constant_input) {
    snap.input.push_back(system.input_matrix(snap.states.col(0)));
  } else {
    snap.input.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) snap.input.push_back(system.input_matrix(snap.states.col(j)));
  }
  residual.evaluate(snap.states, snap.mean, snap.stddev);
  snap.control_lo = system.control_lo();
  snap.control_hi = system.control_hi();
  return snap;
}

namespace {

MarginTerms terms_from(double h, const Eigen::VectorXd& grad, const Eigen::VectorXd& drift,
                       const Eigen::MatrixXd& input, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& stddev, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, double k_delta, double gamma) {
  MarginTerms t;
  t.h = h;
  double control = 0.0;
  if (input.cols() > 0) control = max_over_box(input.transpose() * grad, lo, hi);
  t.hdot = control + grad.dot(drift + mean) - k_delta * grad.cwiseAbs().dot(stddev);
  t.margin = t.hdot + gamma * h;
  return t;
}

}  // namespace

MarginTerms margin_terms(const BarrierCertificate& cert, const Eigen::VectorXd& x,
                         const ControlAffineSystem& system, const ResidualModel& residual,
                         double k_delta) {
  Eigen::VectorXd mean, stddev;
  residual.evaluate_one(x, mean, stddev);
  return terms_from(cert.value(x), cert.gradient(x), system.drift(x), system.input_matrix(x), mean,
                    stddev, system.control_lo(), system.control_hi(), k_delta, cert.gamma);
}

double margin(const BarrierCertificate& cert, const Eigen::VectorXd& x,
              const ControlAffineSystem& system, const ResidualModel& residual, double k_delta) {
  return margin_terms(cert, x, system, residual, k_delta).margin;
}

MarginField margin_field(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta) {
  const Eigen::Index p = snap.states.cols();
  MarginField field;
  field.h.resize(p);
  field.hdot.resize(p);
  field.margin.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd x = snap.states.col(j);
    const MarginTerms t =
        terms_from(cert.value(x), cert.gradient(x), snap.drift.col(j),
                   snap.input_at(static_cast<std::size_t>(j)), snap.mean.col(j), snap.stddev.col(j),
                   snap.control_lo, snap.control_hi, k_delta, cert.gamma);
    field.h[j] = t.h;
    field.hdot[j] = t.hdot;
    field.margin[j] = t.margin;
  }
  return field;
}

double lipschitz_from_field(const StateGrid& grid, const Eigen::VectorXd& values,
                            const std::vector<char>& region, double factor) {
  const Eigen::Index n = grid.dim();
  Eigen::VectorXd slope = Eigen::VectorXd::Zero(n);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (!region[p]) continue;
    const Eigen::VectorXi idx = grid.multi_index(p);
    for (Eigen::Index d = 0; d < n; ++d) {
      if (idx[d] + 1 >= grid.counts()[d]) continue;
      Eigen::VectorXi next = idx;
      ++next[d];
      const std::size_t q = grid.flat_index(next);
      if (!region[q]) continue;
      const double s = std::abs(values[static_cast<Eigen::Index>(q)] -
                                values[static_cast<Eigen::Index>(p)]) /
                       grid.spacing()[d];
      slope[d] = std::max(slope[d], s);
    }
  }
  return factor * slope.norm();
}

namespace {

struct Analysis {
  MarginField field;
  RegionMasks masks;
  LipschitzBounds lips;
};

RegionMasks safe_mask(const MarginField& field) {
  RegionMasks masks;
  const auto p = static_cast<std::size_t>(field.h.size());
  masks.safe.assign(p, 0);
  masks.collar.assign(p, 0);
  for (std::size_t j = 0; j < p; ++j) masks.safe[j] = field.h[static_cast<Eigen::Index>(j)] >= 0.0;
  return masks;
}

void fill_collar(RegionMasks& masks, const MarginField& field, double width) {
  masks.collar_width = width;
  if (!(width > 0.0)) return;
  for (std::size_t j = 0; j < masks.safe.size(); ++j) {
    const double h = field.h[static_cast<Eigen::Index>(j)];
    masks.collar[j] = h < 0.0 && h >= -width;
  }
}

Analysis analyse(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                 const VerifyOptions& options, const LipschitzBounds* given) {
  Analysis a;
  a.field = margin_field(cert, snap, k_delta);
  a.masks = safe_mask(a.field);
  const StateGrid& grid = *snap.grid;
  if (given) {
    a.lips = *given;
  } else {
    a.lips.l_h = lipschitz_from_field(grid, a.field.h, a.masks.safe, options.lipschitz_factor);
  }
  if (options.collar_scale >= 0.0) {
    fill_collar(a.masks, a.field, options.collar_scale * a.lips.l_h * grid.tau());
  }
  if (!given) {
    std::vector<char> region(a.masks.safe.size());
    for (std::size_t j = 0; j < region.size(); ++j) region[j] = a.masks.safe[j] || a.masks.collar[j];
    a.lips.l_hdot = lipschitz_from_field(grid, a.field.hdot, region, options.lipschitz_factor);
  }
  return a;
}

// Slack of the acceptance rule at a point of the safe set (>= -tolerance passes).
double safe_point_slack(const MarginField& field, Eigen::Index j, double threshold,
                        const VerifyOptions& options) {
  const double strict = field.margin[j] - threshold;
  if (!options.tangency_relaxation) return strict;
  return std::max(strict, field.hdot[j]);
}

}  // namespace

LipschitzBounds estimate_lipschitz(const BarrierCertificate& cert, const GridSnapshot& snap,
                                   double k_delta, const VerifyOptions& options) {
  return analyse(cert, snap, k_delta, options, nullptr).lips;
}

namespace {

VerifyResult verify_impl(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                         const LipschitzBounds* lips, const VerifyOptions& options) {
  const Analysis a = analyse(cert, snap, k_delta, options, lips);
  VerifyResult r;
  r.lips = a.lips;
  r.threshold = a.lips.combined(cert.gamma) * snap.grid->tau();
  r.worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < a.masks.safe.size(); ++p) {
    const auto j = static_cast<Eigen::Index>(p);
    double slack;
    if (a.masks.safe[p]) {
      slack = safe_point_slack(a.field, j, r.threshold, options);
    } else if (a.masks.collar[p]) {
      slack = a.field.hdot[j];
    } else {
      continue;
    }
    ++r.checked;
    if (slack < -options.tolerance) ++r.failed;
    if (slack < r.worst_slack) {
      r.worst_slack = slack;
      r.worst_index = p;
    }
  }
  r.passed = r.failed == 0;
  if (r.checked == 0) r.worst_slack = 0.0;
  return r;
}

}  // namespace

VerifyResult verify_grid(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                         const LipschitzBounds& lips, const VerifyOptions& options) {
  return verify_impl(cert, snap, k_delta, &lips, options);
}

VerifyResult verify_grid(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                         const VerifyOptions& options) {
  return verify_impl(cert, snap, k_delta, nullptr, options);
}

namespace {

// Marks every lattice point within `radius` (Euclidean, state units) of `center`.
void mark_ball(const StateGrid& grid, std::size_t center, double radius, std::vector<char>& covered) {
  const Eigen::Index n = grid.dim();
  const Eigen::VectorXi c = grid.multi_index(center);
  Eigen::VectorXi lo(n), hi(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const double reach = std::isfinite(radius) ? std::floor(radius / grid.spacing()[d]) : 1e9;
    const int r = static_cast<int>(std::min(reach, 1e9));
    lo[d] = std::max(0, c[d] - r);
    hi[d] = std::min(grid.counts()[d] - 1, c[d] + r);
  }
  Eigen::VectorXi idx = lo;
  const double r2 = radius * radius;
  while (true) {
    const Eigen::VectorXd off =
        ((idx - c).cast<double>().array() * grid.spacing().array()).matrix();
    if (off.squaredNorm() <= r2) covered[grid.flat_index(idx)] = 1;
    Eigen::Index d = n - 1;
    while (d >= 0 && idx[d] == hi[d]) {
      idx[d] = lo[d];
      --d;
    }
    if (d < 0) break;
    ++idx[d];
  }
}

}  // namespace

CoverageSet adaptive_cover(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                           const VerifyOptions& options) {
  const Analysis a = analyse(cert, snap, k_delta, options, nullptr);
  const StateGrid& grid = *snap.grid;
  CoverageSet cover;
  cover.lips = a.lips;
  const double l = a.lips.combined(cert.gamma);
  cover.threshold = l * grid.tau();
  cover.covered.assign(grid.size(), 0);

  std::size_t worst_collar = grid.size();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto j = static_cast<Eigen::Index>(p);
    if (a.masks.collar[p] && a.field.hdot[j] < -options.tolerance) {
      ++cover.collar_failures;
      cover.certified = false;
      if (worst_collar == grid.size() || a.field.hdot[j] < a.field.hdot[static_cast<Eigen::Index>(worst_collar)]) {
        worst_collar = p;
      }
    }
    if (!a.masks.safe[p]) continue;
    ++cover.safe_points;
    if (cover.covered[p]) continue;
    CoverageSample s;
    s.index = p;
    s.point = snap.states.col(j);
    s.margin = a.field.margin[j];
    s.passed = safe_point_slack(a.field, j, cover.threshold, options) >= -options.tolerance;
    // every lattice point inside the ball still clears the threshold itself
    const double excess = s.margin - cover.threshold;
    if (excess <= 0.0) {
      s.radius = 0.0;
    } else {
      s.radius = l > 0.0 ? excess / l : std::numeric_limits<double>::infinity();
    }
    if (!s.passed) cover.certified = false;
    cover.covered[p] = 1;
    if (s.radius > 0.0) mark_ball(grid, p, s.radius, cover.covered);
    cover.samples.push_back(std::move(s));
  }
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (a.masks.safe[p] && cover.covered[p]) ++cover.covered_points;
  }
  if (worst_collar < grid.size()) {
    const auto j = static_cast<Eigen::Index>(worst_collar);
    std::ostringstream os;
    os << "mu=" << cert.mu << ": " << cover.collar_failures << " collar failures, worst h_dot "
       << a.field.hdot[j] << " at (" << snap.states.col(j).transpose() << ")";
    log::debug(os.str());
  }
  return cover;
}

ExpansionResult expand_certificate(const BarrierCertificate& incumbent, const GridSnapshot& snap,
                                   double k_delta, double mu_lo, double mu_tol,
                                   const VerifyOptions& options) {
  incumbent.validate();
  if (!incumbent.family->valid_mu(mu_lo)) throw UsageError("expand_certificate: invalid mu_lo");
  if (!(mu_tol > 0.0)) throw UsageError("expand_certificate: mu_tol must be positive");
  ExpansionResult out;
  out.cert = incumbent;
  const auto passes = [&](double mu) {
    BarrierCertificate c = incumbent;
    c.mu = mu;
    ++out.evaluations;
    return adaptive_cover(c, snap, k_delta, options).certified;
  };

  if (!passes(incumbent.mu)) {
    std::ostringstream os;
    os << "incumbent certificate mu=" << incumbent.mu << " no longer verifies; keeping it";
    log::info(os.str());
    out.incumbent_failed = true;
    return out;
  }
  if (mu_lo >= incumbent.mu) return out;
  if (passes(mu_lo)) {
    out.cert.mu = mu_lo;
    return out;
  }
  double lo = mu_lo;  // fails
  double hi = incumbent.mu;  // passes
  while (hi - lo > mu_tol) {
    const double mid = 0.5 * (lo + hi);
    if (passes(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  out.cert.mu = hi;
  return out;
}

std::size_t next_target(const BarrierCertificate& cert, const GridSnapshot& snap) {
  std::size_t best = 0;
  double best_sigma = -1.0;
  bool found = false;
  for (Eigen::Index j = 0; j < snap.states.cols(); ++j) {
    if (cert.value(snap.states.col(j)) < 0.0) continue;
    const double sigma = snap.stddev.col(j).sum();
    if (!found || sigma > best_sigma) {
      best = static_cast<std::size_t>(j);
      best_sigma = sigma;
      found = true;
    }
  }
  if (!found) throw UsageError("next_target: the certified set contains no grid point");
  return best;
}

FilterResult safe_filter(const Eigen::VectorXd& u_hat, const BarrierCertificate& cert,
                         const Eigen::VectorXd& x, const ControlAffineSystem& system,
                         const ResidualModel& residual, double k_delta) {
  Eigen::VectorXd mean, stddev;
  residual.evaluate_one(x, mean, stddev);
  const Eigen::VectorXd grad = cert.gradient(x);
  FilterQp qp;
  qp.u_hat = u_hat;
  qp.a = system.input_matrix(x).transpose() * grad;
  qp.b = -(grad.dot(system.drift(x) + mean) - k_delta * grad.cwiseAbs().dot(stddev) +
           cert.gamma * cert.value(x));
  qp.lo = system.control_lo();
  qp.hi = system.control_hi();
  const QpSolution sol = solve(qp);
  FilterResult out;
  out.u = sol.u;
  out.infeasible = sol.status == QpStatus::infeasible;
  out.active = (out.u - u_hat).lpNorm<Eigen::Infinity>() > 1e-12;
  if (out.infeasible) {
    std::ostringstream os;
    os << "safety filter infeasible at x=[" << x.transpose() << "]; applying best-effort control";
    log::debug(os.str());
  }
  return out;
}

}  // namespace safegp
