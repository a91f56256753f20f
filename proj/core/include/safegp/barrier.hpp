#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "safegp/gp.hpp"
#include "safegp/systems.hpp"

namespace safegp {

// ---------------------------------------------------------------------------
// Residual models: per-state-channel mean and standard deviation of d(x).

class ResidualModel {
 public:
  virtual ~ResidualModel() = default;
  /// Columns of `states` are states; fills state_dim x P matrices.
  virtual void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                        Eigen::MatrixXd& stddev) const = 0;

  void evaluate_one(const Eigen::VectorXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& stddev) const;
};

/// Independent GPs on selected state channels. Channels without a GP have zero mean
/// and zero stddev. Models are referenced, not owned.
class GpResidual : public ResidualModel {
 public:
  struct Channel {
    Eigen::Index state_index = 0;
    const GpModel* model = nullptr;
    std::vector<Eigen::Index> features;  // state indices fed to the GP, in order
  };

  GpResidual(Eigen::Index state_dim, std::vector<Channel> channels);
  void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                Eigen::MatrixXd& stddev) const override;

 private:
  Eigen::Index state_dim_;
  std::vector<Channel> channels_;
};

/// Known residual with zero uncertainty.
class OracleResidual : public ResidualModel {
 public:
  using Fn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  explicit OracleResidual(Fn fn) : fn_(std::move(fn)) {}
  static OracleResidual zero(Eigen::Index state_dim);

  void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                Eigen::MatrixXd& stddev) const override;

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Certificates.

/// Scalar-parameter family h_mu(x).
class BarrierFamily {
 public:
  virtual ~BarrierFamily() = default;
  virtual std::string name() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual double value(const Eigen::VectorXd& x, double mu) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x, double mu) const = 0;
  /// Volume of {h_mu >= 0}, up to a constant; nonincreasing in mu.
  virtual double volume(double mu) const = 0;
  virtual bool valid_mu(double mu) const { return mu > 0.0; }
};

/// h_mu(z, z_dot) = 1 - (z - center)^2 / z_scale2 - mu z_dot^2.
class VerticalEllipseFamily : public BarrierFamily {
 public:
  VerticalEllipseFamily(double center = -0.8, double z_scale2 = 0.36);

  std::string name() const override { return "vertical-ellipse"; }
  Eigen::Index state_dim() const override { return 2; }
  double value(const Eigen::VectorXd& x, double mu) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double mu) const override;
  /// pi * sqrt(z_scale2) / sqrt(mu)
  double volume(double mu) const override;

  double center() const { return center_; }
  double z_scale2() const { return z_scale2_; }

 private:
  double center_;
  double z_scale2_;
};

/// c + b^T x + x^T A x on the plane, A symmetric.
struct QuadraticField {
  double c = 0.0;
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();

  double value(const Eigen::Vector2d& x) const { return c + b.dot(x) + x.dot(a * x); }
  Eigen::Vector2d gradient(const Eigen::Vector2d& x) const { return b + 2.0 * a * x; }

  /// Coefficients listed as c, x1, x2, x1^2, x1 x2, x2^2.
  static QuadraticField from_monomials(double c, double x1, double x2, double x1x1, double x1x2,
                                       double x2x2);
};

struct BarrierCertificate {
  std::shared_ptr<const BarrierFamily> family;
  double mu = 1.0;
  double gamma = 1.0;

  double value(const Eigen::VectorXd& x) const { return family->value(x, mu); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return family->gradient(x, mu); }
  double volume() const { return family->volume(mu); }
  void validate() const;
  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Grids and margins.

/// Axis-aligned lattice lower + i * spacing, i_d in [0, counts_d). Flat indices are
/// lexicographic with the first dimension slowest.
class StateGrid {
 public:
  StateGrid(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::VectorXd spacing);

  Eigen::Index dim() const { return lower_.size(); }
  std::size_t size() const { return size_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& spacing() const { return spacing_; }
  const Eigen::VectorXi& counts() const { return counts_; }
  /// Diagonal of one lattice cell.
  double tau() const { return spacing_.norm(); }

  Eigen::VectorXd point(std::size_t flat) const;
  Eigen::VectorXi multi_index(std::size_t flat) const;
  std::size_t flat_index(const Eigen::VectorXi& idx) const;
  /// Every point as a column.
  Eigen::MatrixXd points() const;
  /// Same bounds with spacing divided by `factor`.
  StateGrid refined(int factor) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd spacing_;
  Eigen::VectorXi counts_;
  std::size_t size_ = 0;
};

/// Dynamics and residual posterior evaluated once over a grid, reused across mu.
struct GridSnapshot {
  const StateGrid* grid = nullptr;
  Eigen::MatrixXd states;          // n x P
  Eigen::MatrixXd drift;           // n x P
  std::vector<Eigen::MatrixXd> input;  // per point n x m; a single entry when constant
  Eigen::MatrixXd mean;            // n x P
  Eigen::MatrixXd stddev;          // n x P
  Eigen::VectorXd control_lo;
  Eigen::VectorXd control_hi;

  const Eigen::MatrixXd& input_at(std::size_t p) const { return input.size() == 1 ? input[0] : input[p]; }
};

/// `constant_input` skips per-point evaluation of g(x) when it does not depend on x.
GridSnapshot snapshot(const StateGrid& grid, const ControlAffineSystem& system,
                      const ResidualModel& residual, bool constant_input = false);

struct MarginTerms {
  double h = 0.0;
  /// Robust best-case h_dot: max_u dh g u + dh (f + m) - k_delta |dh| sigma.
  double hdot = 0.0;
  double margin = 0.0;  // hdot + gamma h
};

MarginTerms margin_terms(const BarrierCertificate& cert, const Eigen::VectorXd& x,
                         const ControlAffineSystem& system, const ResidualModel& residual,
                         double k_delta);
double margin(const BarrierCertificate& cert, const Eigen::VectorXd& x,
              const ControlAffineSystem& system, const ResidualModel& residual, double k_delta);

struct MarginField {
  Eigen::VectorXd h;
  Eigen::VectorXd hdot;
  Eigen::VectorXd margin;
};

MarginField margin_field(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta);

struct LipschitzBounds {
  double l_h = 0.0;
  double l_hdot = 0.0;

  double combined(double gamma) const { return l_hdot + gamma * l_h; }
};

/// Lipschitz constant surrogate for `values` on `grid`: factor times the norm of the per-axis
/// maximum finite-difference slope over adjacent pairs with both ends in `region`.
double lipschitz_from_field(const StateGrid& grid, const Eigen::VectorXd& values,
                            const std::vector<char>& region, double factor = 1.5);

struct VerifyOptions {
  /// Accept a point whose margin is below the Lipschitz threshold when the robust h_dot
  /// there is non-negative. Needed wherever h and h_dot vanish together (the tips of an
  /// ellipse on the z_dot = 0 axis), where the strict test cannot pass at any resolution.
  bool tangency_relaxation = true;
  /// Require h_dot >= 0 on the band -collar <= h < 0 just outside the set, with
  /// collar = collar_scale * L_h * tau (negative collar_scale disables it).
  double collar_scale = 0.5;
  double tolerance = 1e-9;
  double lipschitz_factor = 1.5;
};

/// Regions used by verification.
struct RegionMasks {
  std::vector<char> safe;    // h >= 0
  std::vector<char> collar;  // -collar_width <= h < 0
  double collar_width = 0.0;
};

LipschitzBounds estimate_lipschitz(const BarrierCertificate& cert, const GridSnapshot& snap,
                                   double k_delta, const VerifyOptions& options = {});

struct VerifyResult {
  bool passed = true;
  double worst_slack = 0.0;  // min over checked points of (margin - threshold) or h_dot for relaxed ones
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double threshold = 0.0;
  LipschitzBounds lips;
};

VerifyResult verify_grid(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                         const LipschitzBounds& lips, const VerifyOptions& options = {});
VerifyResult verify_grid(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                         const VerifyOptions& options = {});

struct CoverageSample {
  std::size_t index = 0;
  Eigen::VectorXd point;
  double margin = 0.0;
  double radius = 0.0;  // (margin - threshold) / L, zero when the margin is at or below threshold
  bool passed = true;
};

struct CoverageSet {
  std::vector<CoverageSample> samples;
  bool certified = true;
  std::size_t safe_points = 0;
  std::size_t covered_points = 0;
  std::size_t collar_failures = 0;
  double threshold = 0.0;
  LipschitzBounds lips;
  std::vector<char> covered;  // per grid point
};

CoverageSet adaptive_cover(const BarrierCertificate& cert, const GridSnapshot& snap, double k_delta,
                           const VerifyOptions& options = {});

struct ExpansionResult {
  BarrierCertificate cert;
  bool incumbent_failed = false;
  int evaluations = 0;
};

/// Smallest mu in [mu_lo, incumbent.mu] whose region passes adaptive_cover, by bisection
/// to `mu_tol`. Never returns a mu above the incumbent's.
ExpansionResult expand_certificate(const BarrierCertificate& incumbent, const GridSnapshot& snap,
                                   double k_delta, double mu_lo, double mu_tol = 1e-3,
                                   const VerifyOptions& options = {});

/// Grid point of {h >= 0} with the largest summed residual stddev; ties go to the lowest index.
std::size_t next_target(const BarrierCertificate& cert, const GridSnapshot& snap);

struct FilterResult {
  Eigen::VectorXd u;
  bool active = false;      // u differs from u_hat
  bool infeasible = false;  // no admissible control; u is the best effort
};

FilterResult safe_filter(const Eigen::VectorXd& u_hat, const BarrierCertificate& cert,
                         const Eigen::VectorXd& x, const ControlAffineSystem& system,
                         const ResidualModel& residual, double k_delta);

}  // namespace safegp
