#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace safegp {

/// Squared-exponential kernel hyperparameters.
///
/// k(x, x') = signal_variance * exp(-0.5 * sum_j ((x_j - x'_j) / length_scales_j)^2)
/// Observations are corrupted by N(0, noise_variance).
struct KernelHyper {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales = Eigen::VectorXd::Ones(1);
  double noise_variance = 0.0;

  Eigen::Index dim() const { return length_scales.size(); }
  void validate() const;
};

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y,
                   const KernelHyper& hyper);

/// Cross-covariance matrix, rows of `a` against rows of `b`.
Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const KernelHyper& hyper);

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;

  double stddev() const;
};

struct PosteriorBatch {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// High-probability interval [mean - k*sigma, mean + k*sigma] on the latent function.
struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double k_delta = 0.0;

  bool contains(double value) const { return value >= lower && value <= upper; }
  double width() const { return upper - lower; }
};

/// Scalar-output GP with a bounded training set.
///
/// The model keeps the explicit inverse L = (K + sigma_n^2 I)^{-1} and updates it
/// in place when points are added or removed; only an M x M block is inverted per
/// update. Explicit inverses lose accuracy faster than a factorization when K is
/// badly conditioned, so `rebuild_drift()` reports the distance to a from-scratch
/// inverse and `rebuild()` restores it.
class GpModel {
 public:
  static constexpr std::size_t kDefaultBudget = 300;

  explicit GpModel(KernelHyper hyper, std::size_t budget = kDefaultBudget);

  /// Direct construction; one training point per row of `inputs`.
  static GpModel fit_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::VectorXd>& targets,
                           KernelHyper hyper, std::size_t budget = kDefaultBudget);

  std::size_t size() const { return static_cast<std::size_t>(targets_.size()); }
  bool empty() const { return targets_.size() == 0; }
  std::size_t budget() const { return budget_; }
  Eigen::Index dim() const { return hyper_.dim(); }
  const KernelHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  /// (K + sigma_n^2 I)^{-1}, N x N. A view into storage that is reused across updates.
  Eigen::Block<const Eigen::MatrixXd> inverse() const { return inv_buf_.topLeftCorner(n(), n()); }

  Posterior posterior(const Eigen::Ref<const Eigen::VectorXd>& query) const;
  /// Posterior at every row of `queries`.
  PosteriorBatch posterior_batch(const Eigen::Ref<const Eigen::MatrixXd>& queries) const;
  ConfidenceInterval confidence(const Eigen::Ref<const Eigen::VectorXd>& query,
                                double k_delta) const;

  /// Appends M >= 1 points (rows of `new_inputs`) via the block-inverse identity.
  void add_points(const Eigen::Ref<const Eigen::MatrixXd>& new_inputs,
                  const Eigen::Ref<const Eigen::VectorXd>& new_targets);
  /// Removes the points at `indices` via the Schur complement of the permuted inverse.
  void remove_points(std::span<const Eigen::Index> indices);

  /// k(x_i, query) for each stored point.
  Eigen::VectorXd relevance_scores(const Eigen::Ref<const Eigen::VectorXd>& query) const;
  /// Index of the least relevant point; ties go to the lowest index.
  Eigen::Index least_relevant(const Eigen::Ref<const Eigen::VectorXd>& query) const;

  /// Budgeted insertion: when full, evicts the point least relevant to
  /// `relevance_query`, then adds (x, y). Returns the evicted index, if any.
  std::optional<Eigen::Index> admit(const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                    const Eigen::Ref<const Eigen::VectorXd>& relevance_query);

  /// max |inverse() - fit_batch(...).inverse()|
  double rebuild_drift() const;
  void rebuild();

  /// Inputs, targets, hyperparameters and budget. The inverse is not stored.
  nlohmann::json to_json() const;
  static GpModel from_json(const nlohmann::json& doc);

 private:
  void check_query(const Eigen::Ref<const Eigen::VectorXd>& query) const;
  void refresh_weights();
  Eigen::Index n() const { return targets_.size(); }
  Eigen::Block<Eigen::MatrixXd> inv() { return inv_buf_.topLeftCorner(n(), n()); }
  void reserve(Eigen::Index size);

  KernelHyper hyper_;
  std::size_t budget_;
  Eigen::MatrixXd inputs_;   // N x d
  Eigen::VectorXd targets_;  // N
  Eigen::MatrixXd inv_buf_;  // capacity x capacity; the leading N x N block is the inverse
  Eigen::VectorXd weights_;  // inv_ * targets_
};

}  // namespace safegp
