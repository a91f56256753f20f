#include "safegp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "safegp/errors.hpp"
#include "safegp/log.hpp"

namespace safegp {
namespace {

// Below this reciprocal condition estimate a block is treated as singular.
constexpr double kSingularRcond = 1e-14;
// Negative posterior variances beyond this are reported; beyond kVarianceError they throw.
constexpr double kVarianceLogThreshold = -1e-9;
constexpr double kVarianceError = -1e-6;

std::string dims_message(const char* what, Eigen::Index got, Eigen::Index want) {
  std::ostringstream os;
  os << what << ": dimension " << got << ", expected " << want;
  return os.str();
}

void symmetrize(Eigen::MatrixXd& m) {
  m = 0.5 * (m + m.transpose()).eval();
}

// Lower Cholesky factor of an SPD block, rejecting near-singular ones.
Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond) {
    std::ostringstream os;
    os << what << ": matrix is numerically singular (size " << m.rows() << ")";
    throw NumericError(os.str());
  }
  return llt;
}

// m += sign * g g^T, keeping m exactly symmetric. A rank-1 outer product already is
// (a*b == b*a); wider updates are mirrored from the lower triangle.
template <typename Block>
void symmetric_rank_update(Block&& m, const Eigen::MatrixXd& g, double sign) {
  if (g.cols() == 1) {
    m.noalias() += (sign * g.col(0)) * g.col(0).transpose();
    return;
  }
  m.template selfadjointView<Eigen::Lower>().rankUpdate(g, sign);
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) m(i, j) = m(j, i);
  }
}

double clamp_variance(double variance) {
  if (variance >= 0.0) return variance;
  if (variance < kVarianceError) {
    std::ostringstream os;
    os << "posterior variance " << variance << " is negative beyond tolerance";
    throw NumericError(os.str());
  }
  if (variance < kVarianceLogThreshold) {
    std::ostringstream os;
    os << "clamped negative posterior variance " << variance;
    log::debug(os.str());
  }
  return 0.0;
}

Eigen::MatrixXd invert_spd(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  return checked_llt(m, what).solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

void KernelHyper::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw UsageError("kernel signal_variance must be positive");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw UsageError("kernel noise_variance must be non-negative");
  }
  if (length_scales.size() == 0) throw UsageError("kernel length_scales must be non-empty");
  for (Eigen::Index j = 0; j < length_scales.size(); ++j) {
    if (!(length_scales[j] > 0.0) || !std::isfinite(length_scales[j])) {
      throw UsageError("kernel length_scales must be positive");
    }
  }
}

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y, const KernelHyper& hyper) {
  if (x.size() != hyper.dim()) throw UsageError(dims_message("kernel_eval x", x.size(), hyper.dim()));
  if (y.size() != hyper.dim()) throw UsageError(dims_message("kernel_eval y", y.size(), hyper.dim()));
  const double r2 = ((x - y).array() / hyper.length_scales.array()).square().sum();
  return hyper.signal_variance * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const KernelHyper& hyper) {
  if (a.rows() > 0 && a.cols() != hyper.dim()) {
    throw UsageError(dims_message("kernel_matrix a", a.cols(), hyper.dim()));
  }
  if (b.rows() > 0 && b.cols() != hyper.dim()) {
    throw UsageError(dims_message("kernel_matrix b", b.cols(), hyper.dim()));
  }
  const Eigen::RowVectorXd inv_ls = hyper.length_scales.cwiseInverse().transpose();
  const Eigen::MatrixXd as = a.array().rowwise() * inv_ls.array();
  const Eigen::MatrixXd bs = b.array().rowwise() * inv_ls.array();
  const Eigen::VectorXd an = as.rowwise().squaredNorm();
  const Eigen::VectorXd bn = bs.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * as * bs.transpose();
  d2.colwise() += an;
  d2.rowwise() += bn.transpose();
  return hyper.signal_variance * (-0.5 * d2.array().max(0.0)).exp().matrix();
}

double Posterior::stddev() const { return std::sqrt(std::max(variance, 0.0)); }

GpModel::GpModel(KernelHyper hyper, std::size_t budget)
    : hyper_(std::move(hyper)),
      budget_(budget),
      inputs_(0, hyper_.dim()),
      targets_(0),
      inv_buf_(0, 0),
      weights_(0) {
  hyper_.validate();
  if (budget_ == 0) throw UsageError("GP budget must be at least 1");
}

GpModel GpModel::fit_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::VectorXd>& targets, KernelHyper hyper,
                           std::size_t budget) {
  GpModel model(std::move(hyper), budget);
  if (inputs.rows() != targets.size()) {
    throw UsageError("fit_batch: inputs and targets have different counts");
  }
  if (static_cast<std::size_t>(targets.size()) > budget) {
    throw UsageError("fit_batch: more points than the budget allows");
  }
  if (targets.size() == 0) return model;
  if (inputs.cols() != model.dim()) {
    throw UsageError(dims_message("fit_batch inputs", inputs.cols(), model.dim()));
  }
  model.inputs_ = inputs;
  model.targets_ = targets;
  Eigen::MatrixXd gram = kernel_matrix(inputs, inputs, model.hyper_);
  gram.diagonal().array() += model.hyper_.noise_variance;
  model.inv_buf_ = invert_spd(gram, "fit_batch");
  symmetrize(model.inv_buf_);
  model.refresh_weights();
  return model;
}

void GpModel::check_query(const Eigen::Ref<const Eigen::VectorXd>& query) const {
  if (query.size() != dim()) throw UsageError(dims_message("GP query", query.size(), dim()));
}

void GpModel::refresh_weights() { weights_.noalias() = inverse() * targets_; }

void GpModel::reserve(Eigen::Index size) {
  const Eigen::Index cap = inv_buf_.rows();
  if (size <= cap) return;
  const auto limit = static_cast<Eigen::Index>(budget_);
  const Eigen::Index next = std::max(size, std::min(limit, std::max<Eigen::Index>(2 * cap, 16)));
  Eigen::MatrixXd grown(next, next);
  grown.topLeftCorner(n(), n()) = inverse();
  inv_buf_.swap(grown);
}

Posterior GpModel::posterior(const Eigen::Ref<const Eigen::VectorXd>& query) const {
  check_query(query);
  const double prior = hyper_.signal_variance;
  if (empty()) return {0.0, prior};
  const Eigen::VectorXd k = kernel_matrix(inputs_, query.transpose(), hyper_);
  const double mean = k.dot(weights_);
  const double variance = prior - k.dot(inverse() * k);
  return {mean, clamp_variance(variance)};
}

PosteriorBatch GpModel::posterior_batch(const Eigen::Ref<const Eigen::MatrixXd>& queries) const {
  PosteriorBatch out;
  const Eigen::Index q = queries.rows();
  if (q > 0 && queries.cols() != dim()) {
    throw UsageError(dims_message("GP batch query", queries.cols(), dim()));
  }
  if (empty()) {
    out.mean = Eigen::VectorXd::Zero(q);
    out.variance = Eigen::VectorXd::Constant(q, hyper_.signal_variance);
    return out;
  }
  out.mean.resize(q);
  out.variance.resize(q);
  // Large batches: k^T L k = |U k|^2 with L = U^T U halves the work, and chunking keeps
  // the N x chunk block in cache.
  constexpr Eigen::Index kChunk = 128;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (q >= kChunk) llt.compute(inverse());
  if (q >= kChunk && llt.info() == Eigen::Success) {
    const Eigen::MatrixXd u = llt.matrixU();
    Eigen::MatrixXd kt, proj;
    for (Eigen::Index s = 0; s < q; s += kChunk) {
      const Eigen::Index n = std::min(kChunk, q - s);
      kt = kernel_matrix(inputs_, queries.middleRows(s, n), hyper_);  // N x n
      out.mean.segment(s, n).noalias() = kt.transpose() * weights_;
      proj.noalias() = u.triangularView<Eigen::Upper>() * kt;
      out.variance.segment(s, n) =
          (hyper_.signal_variance - proj.colwise().squaredNorm().array()).matrix().transpose();
    }
  } else {
    const Eigen::MatrixXd k = kernel_matrix(queries, inputs_, hyper_);  // q x N
    out.mean = k * weights_;
    const Eigen::MatrixXd kl = k * inverse();
    out.variance = (hyper_.signal_variance - (kl.array() * k.array()).rowwise().sum()).matrix();
  }
  for (Eigen::Index i = 0; i < q; ++i) out.variance[i] = clamp_variance(out.variance[i]);
  return out;
}

ConfidenceInterval GpModel::confidence(const Eigen::Ref<const Eigen::VectorXd>& query,
                                       double k_delta) const {
  if (!(k_delta >= 0.0)) throw UsageError("confidence: k_delta must be non-negative");
  const Posterior p = posterior(query);
  const double half = k_delta * p.stddev();
  return {p.mean - half, p.mean + half, k_delta};
}

void GpModel::add_points(const Eigen::Ref<const Eigen::MatrixXd>& new_inputs,
                         const Eigen::Ref<const Eigen::VectorXd>& new_targets) {
  const Eigen::Index m = new_targets.size();
  if (m < 1) throw UsageError("add_points: need at least one point");
  if (new_inputs.rows() != m) throw UsageError("add_points: inputs and targets differ in count");
  if (new_inputs.cols() != dim()) {
    throw UsageError(dims_message("add_points inputs", new_inputs.cols(), dim()));
  }
  if (size() + static_cast<std::size_t>(m) > budget_) {
    throw UsageError("add_points: budget exceeded; evict before adding");
  }
  const Eigen::Index n = targets_.size();

  Eigen::MatrixXd c = kernel_matrix(new_inputs, new_inputs, hyper_);
  c.diagonal().array() += hyper_.noise_variance;

  reserve(n + m);
  auto next = inv_buf_.topLeftCorner(n + m, n + m);
  if (n == 0) {
    Eigen::MatrixXd ci = invert_spd(c, "add_points");
    symmetrize(ci);
    next = ci;
  } else {
    // [L + L k S^-1 k^T L, -L k S^-1; ., S^-1] with S = c - k^T L k.
    const Eigen::MatrixXd k = kernel_matrix(inputs_, new_inputs, hyper_);  // N x M
    const Eigen::MatrixXd lk = inverse() * k;                               // N x M
    Eigen::MatrixXd schur = c - k.transpose() * lk;
    symmetrize(schur);
    const Eigen::LLT<Eigen::MatrixXd> llt = checked_llt(schur, "add_points Schur complement");
    Eigen::MatrixXd schur_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    symmetrize(schur_inv);
    // lk S^-1 lk^T = g g^T with g = lk L_S^-T.
    const Eigen::MatrixXd g = llt.matrixL().solve(lk.transpose()).transpose();
    const Eigen::MatrixXd lk_s = lk * schur_inv;  // N x M
    symmetric_rank_update(next.topLeftCorner(n, n), g, 1.0);
    next.topRightCorner(n, m) = -lk_s;
    next.bottomLeftCorner(m, n) = -lk_s.transpose();
    next.bottomRightCorner(m, m) = schur_inv;
  }

  Eigen::MatrixXd inputs(n + m, dim());
  inputs << inputs_, new_inputs;
  inputs_ = std::move(inputs);
  Eigen::VectorXd targets(n + m);
  targets << targets_, new_targets;
  targets_ = std::move(targets);
  refresh_weights();
}

void GpModel::remove_points(std::span<const Eigen::Index> indices) {
  const Eigen::Index n = targets_.size();
  const auto m = static_cast<Eigen::Index>(indices.size());
  if (m < 1) throw UsageError("remove_points: need at least one index");
  std::vector<char> drop(static_cast<std::size_t>(n), 0);
  for (Eigen::Index idx : indices) {
    if (idx < 0 || idx >= n) throw UsageError("remove_points: index out of range");
    if (drop[static_cast<std::size_t>(idx)]) throw UsageError("remove_points: duplicate index");
    drop[static_cast<std::size_t>(idx)] = 1;
  }
  std::vector<Eigen::Index> keep;
  std::vector<Eigen::Index> gone;
  keep.reserve(static_cast<std::size_t>(n - m));
  gone.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) (drop[static_cast<std::size_t>(i)] ? gone : keep).push_back(i);

  if (keep.empty()) {
    inputs_.resize(0, dim());
    targets_.resize(0);
    weights_.resize(0);
    return;
  }

  // Blocks of the permuted inverse P L P^T = [A B; B^T C]; the result is A - B C^-1 B^T.
  const Eigen::MatrixXd b = inverse()(keep, gone);
  const Eigen::MatrixXd c = inverse()(gone, gone);
  const Eigen::MatrixXd g =
      checked_llt(c, "remove_points").matrixL().solve(b.transpose()).transpose();
  // Compact A into the leading block in place. keep is increasing, so every source
  // entry is read before it is overwritten.
  const auto k = static_cast<Eigen::Index>(keep.size());
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index sj = keep[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < k; ++i) inv_buf_(i, j) = inv_buf_(keep[static_cast<std::size_t>(i)], sj);
  }
  symmetric_rank_update(inv_buf_.topLeftCorner(k, k), g, -1.0);

  inputs_ = inputs_(keep, Eigen::all).eval();
  targets_ = targets_(keep).eval();
  refresh_weights();
}

Eigen::VectorXd GpModel::relevance_scores(const Eigen::Ref<const Eigen::VectorXd>& query) const {
  check_query(query);
  if (empty()) throw UsageError("relevance_scores: model is empty");
  return kernel_matrix(inputs_, query.transpose(), hyper_);
}

Eigen::Index GpModel::least_relevant(const Eigen::Ref<const Eigen::VectorXd>& query) const {
  const Eigen::VectorXd scores = relevance_scores(query);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return best;
}

std::optional<Eigen::Index> GpModel::admit(const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                           const Eigen::Ref<const Eigen::VectorXd>& relevance_query) {
  check_query(x);
  std::optional<Eigen::Index> evicted;
  if (size() >= budget_) {
    const Eigen::Index victim = least_relevant(relevance_query);
    const Eigen::Index one[] = {victim};
    remove_points(one);
    evicted = victim;
  }
  Eigen::VectorXd target(1);
  target[0] = y;
  add_points(x.transpose(), target);
  return evicted;
}

double GpModel::rebuild_drift() const {
  if (empty()) return 0.0;
  const GpModel fresh = fit_batch(inputs_, targets_, hyper_, budget_);
  return (inverse() - fresh.inverse()).cwiseAbs().maxCoeff();
}

void GpModel::rebuild() {
  if (empty()) return;
  *this = fit_batch(inputs_, targets_, hyper_, budget_);
}

nlohmann::json GpModel::to_json() const {
  nlohmann::json doc;
  doc["budget"] = budget_;
  doc["hyper"] = {
      {"signal_variance", hyper_.signal_variance},
      {"noise_variance", hyper_.noise_variance},
      {"length_scales", std::vector<double>(hyper_.length_scales.data(),
                                            hyper_.length_scales.data() + hyper_.length_scales.size())},
  };
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(inputs_.cols()));
    for (Eigen::Index j = 0; j < inputs_.cols(); ++j) row[static_cast<std::size_t>(j)] = inputs_(i, j);
    rows.push_back(row);
  }
  doc["inputs"] = std::move(rows);
  doc["targets"] = std::vector<double>(targets_.data(), targets_.data() + targets_.size());
  return doc;
}

GpModel GpModel::from_json(const nlohmann::json& doc) {
  try {
    KernelHyper hyper;
    hyper.signal_variance = doc.at("hyper").at("signal_variance").get<double>();
    hyper.noise_variance = doc.at("hyper").at("noise_variance").get<double>();
    const auto ls = doc.at("hyper").at("length_scales").get<std::vector<double>>();
    hyper.length_scales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
    const auto budget = doc.at("budget").get<std::size_t>();
    const auto rows = doc.at("inputs").get<std::vector<std::vector<double>>>();
    const auto targets = doc.at("targets").get<std::vector<double>>();
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), hyper.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != hyper.dim()) {
        throw UsageError("GP checkpoint: input row has wrong dimension");
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
    return fit_batch(inputs, y, std::move(hyper), budget);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("GP checkpoint: ") + e.what());
  }
}

}  // namespace safegp
