#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "safegp/errors.hpp"
#include "safegp/gp.hpp"

using namespace safegp;

namespace {

KernelHyper hyper(Eigen::Index d, double sf2 = 1.3, double ell = 0.7, double sn2 = 0.05) {
  KernelHyper h;
  h.signal_variance = sf2;
  h.length_scales = Eigen::VectorXd::Constant(d, ell);
  h.noise_variance = sn2;
  return h;
}

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

Eigen::VectorXd random_targets(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = g(rng);
  return y;
}

double max_abs(const Eigen::MatrixXd& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

double inverse_error(const GpModel& m) {
  const KernelHyper& h = m.hyper();
  return max_abs(Eigen::MatrixXd(m.inverse()) -
                 oracle::gram_inverse(m.inputs(), h.signal_variance, h.length_scales, h.noise_variance));
}

}  // namespace

TEST_CASE("kernel closed form") {
  const KernelHyper h = hyper(1, 1.0, 1.0, 0.0);
  Eigen::VectorXd x(1), y(1);
  x << 0.0;
  y << 1.0;
  CHECK(kernel_eval(x, x, h) == doctest::Approx(1.0));
  CHECK(kernel_eval(x, y, h) == doctest::Approx(0.6065306597126334).epsilon(1e-14));

  std::mt19937_64 rng(3);
  const KernelHyper h3 = hyper(3, 2.0, 0.4);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd a = random_inputs(rng, 1, 3).transpose();
    const Eigen::VectorXd b = random_inputs(rng, 1, 3).transpose();
    CHECK(kernel_eval(a, b, h3) == kernel_eval(b, a, h3));
    CHECK(kernel_eval(a, b, h3) ==
          doctest::Approx(oracle::se_kernel(a, b, 2.0, h3.length_scales)).epsilon(1e-14));
  }
}

TEST_CASE("kernel input validation") {
  const KernelHyper h = hyper(2);
  CHECK_THROWS_AS(kernel_eval(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), h), UsageError);
  KernelHyper bad = h;
  bad.length_scales[1] = 0.0;
  CHECK_THROWS_AS(GpModel{bad}, UsageError);
  bad = h;
  bad.noise_variance = -1.0;
  CHECK_THROWS_AS(GpModel{bad}, UsageError);
}

TEST_CASE("fit_batch small cases") {
  const KernelHyper h = hyper(2, 1.5, 0.8, 0.1);
  const GpModel empty = GpModel::fit_batch(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), h);
  CHECK(empty.size() == 0);
  CHECK(empty.inverse().rows() == 0);

  Eigen::MatrixXd x1(1, 2);
  x1 << 0.3, -0.2;
  const GpModel one = GpModel::fit_batch(x1, Eigen::VectorXd::Constant(1, 2.0), h);
  CHECK(one.inverse()(0, 0) == doctest::Approx(1.0 / 1.6));

  std::mt19937_64 rng(11);
  const Eigen::MatrixXd x = random_inputs(rng, 5, 2);
  const GpModel five = GpModel::fit_batch(x, random_targets(rng, 5), h);
  Eigen::MatrixXd k(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) k(i, j) = oracle::se_kernel(x.row(i).transpose(), x.row(j).transpose(), 1.5, h.length_scales);
  k.diagonal().array() += 0.1;
  CHECK(max_abs(Eigen::MatrixXd(five.inverse()) * k - Eigen::MatrixXd::Identity(5, 5)) < 1e-8);
}

TEST_CASE("posterior against a dense solve") {
  const KernelHyper h = hyper(3, 1.2, 0.9, 0.02);
  GpModel prior(h);
  const Posterior p0 = prior.posterior(Eigen::VectorXd::Zero(3));
  CHECK(p0.mean == 0.0);
  CHECK(p0.variance == doctest::Approx(1.2));
  const ConfidenceInterval ci = prior.confidence(Eigen::VectorXd::Zero(3), 2.0);
  CHECK(ci.lower == doctest::Approx(-2.0 * std::sqrt(1.2)));
  CHECK(ci.upper == doctest::Approx(2.0 * std::sqrt(1.2)));

  Eigen::MatrixXd x1(1, 3);
  x1 << 0.1, 0.2, 0.3;
  const GpModel one = GpModel::fit_batch(x1, Eigen::VectorXd::Constant(1, 0.7), h);
  CHECK(one.posterior(x1.row(0).transpose()).mean == doctest::Approx(0.7 * 1.2 / 1.22));

  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = random_inputs(rng, 10, 3);
  const Eigen::VectorXd y = random_targets(rng, 10);
  const GpModel m = GpModel::fit_batch(x, y, h);
  const Eigen::MatrixXd q = random_inputs(rng, 5, 3);
  const PosteriorBatch batch = m.posterior_batch(q);
  for (int i = 0; i < 5; ++i) {
    const oracle::MeanVar o = oracle::posterior(x, y, q.row(i).transpose(), 1.2, h.length_scales, 0.02);
    const Posterior p = m.posterior(q.row(i).transpose());
    CHECK(std::abs(p.mean - o.mean) < 1e-8);
    CHECK(std::abs(p.variance - o.var) < 1e-8);
    CHECK(std::abs(batch.mean[i] - o.mean) < 1e-8);
    CHECK(std::abs(batch.variance[i] - o.var) < 1e-8);
    const ConfidenceInterval flat = m.confidence(q.row(i).transpose(), 0.0);
    CHECK(flat.lower == flat.upper);
  }
}

TEST_CASE("posterior_batch on a large query set matches pointwise") {
  const KernelHyper h = hyper(2, 1.0, 0.5, 0.01);
  std::mt19937_64 rng(8);
  const GpModel m = GpModel::fit_batch(random_inputs(rng, 60, 2), random_targets(rng, 60), h);
  const Eigen::MatrixXd q = random_inputs(rng, 400, 2);
  const PosteriorBatch b = m.posterior_batch(q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Posterior p = m.posterior(q.row(i).transpose());
    CHECK(std::abs(b.mean[i] - p.mean) < 1e-10);
    CHECK(std::abs(b.variance[i] - p.variance) < 1e-10);
  }
}

TEST_CASE("add_points matches the batch inverse") {
  const KernelHyper h = hyper(2);
  std::mt19937_64 rng(21);
  const Eigen::MatrixXd x = random_inputs(rng, 53, 2);
  const Eigen::VectorXd y = random_targets(rng, 53);

  GpModel from_empty(h);
  from_empty.add_points(x.topRows(3), y.head(3));
  const GpModel b3 = GpModel::fit_batch(x.topRows(3), y.head(3), h);
  CHECK(max_abs(Eigen::MatrixXd(from_empty.inverse()) - Eigen::MatrixXd(b3.inverse())) < 1e-12);

  GpModel m = GpModel::fit_batch(x.topRows(50), y.head(50), h);
  m.add_points(x.bottomRows(3), y.tail(3));
  CHECK(m.size() == 53);
  CHECK(inverse_error(m) < 1e-8);
  CHECK(m.rebuild_drift() < 1e-8);
}

TEST_CASE("remove_points matches the batch inverse") {
  const KernelHyper h = hyper(2);
  std::mt19937_64 rng(22);
  const Eigen::MatrixXd x = random_inputs(rng, 100, 2);
  const Eigen::VectorXd y = random_targets(rng, 100);

  GpModel m = GpModel::fit_batch(x, y, h);
  const std::vector<Eigen::Index> drop{3, 41, 42, 97};
  m.remove_points(drop);
  CHECK(m.size() == 96);
  Eigen::MatrixXd kept(96, 2);
  Eigen::VectorXd kept_y(96);
  for (Eigen::Index i = 0, r = 0; i < 100; ++i) {
    if (std::find(drop.begin(), drop.end(), i) != drop.end()) continue;
    kept.row(r) = x.row(i);
    kept_y[r++] = y[i];
  }
  CHECK(max_abs(m.inputs() - kept) == 0.0);
  CHECK(max_abs(m.targets() - kept_y) == 0.0);
  CHECK(inverse_error(m) < 1e-8);

  GpModel base = GpModel::fit_batch(x.topRows(40), y.head(40), h);
  const Eigen::MatrixXd before = base.inverse();
  base.add_points(x.middleRows(40, 4), y.segment(40, 4));
  const std::vector<Eigen::Index> last{40, 41, 42, 43};
  base.remove_points(last);
  CHECK(max_abs(Eigen::MatrixXd(base.inverse()) - before) < 1e-8);

  std::vector<Eigen::Index> all(40);
  for (Eigen::Index i = 0; i < 40; ++i) all[static_cast<std::size_t>(i)] = i;
  base.remove_points(all);
  CHECK(base.empty());
  CHECK(base.inverse().rows() == 0);

  GpModel e = GpModel::fit_batch(x.topRows(5), y.head(5), h);
  const std::vector<Eigen::Index> bad{5};
  CHECK_THROWS_AS(e.remove_points(bad), UsageError);
  const std::vector<Eigen::Index> dup{1, 1};
  CHECK_THROWS_AS(e.remove_points(dup), UsageError);
}

TEST_CASE("long add/remove sequences near the budget stay close to the batch inverse") {
  const KernelHyper h = hyper(3, 1.0, 1.0, 0.01);
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd x = random_inputs(rng, 299, 3);
  GpModel m = GpModel::fit_batch(x, random_targets(rng, 299), h, 300);
  std::uniform_int_distribution<int> pick(0, 298);
  for (int i = 0; i < 50; ++i) {
    m.add_points(random_inputs(rng, 1, 3), random_targets(rng, 1));
    const std::vector<Eigen::Index> one{pick(rng)};
    m.remove_points(one);
  }
  CHECK(m.size() == 299);
  CHECK(inverse_error(m) < 1e-6);
}

TEST_CASE("random operation sequences (property)") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const KernelHyper h = hyper(2, 1.0, 0.6, 0.02);
    GpModel m(h, 120);
    std::uniform_int_distribution<int> msize(1, 5);
    for (int op = 0; op < 120; ++op) {
      const int k = msize(rng);
      const bool add = m.size() + static_cast<std::size_t>(k) <= m.budget() &&
                       (m.size() < static_cast<std::size_t>(k) || (rng() % 3) != 0);
      if (add) {
        m.add_points(random_inputs(rng, k, 2), random_targets(rng, k));
      } else {
        std::vector<Eigen::Index> idx(m.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min<std::size_t>(static_cast<std::size_t>(k), idx.size()));
        m.remove_points(idx);
      }
    }
    INFO("seed " << seed);
    CHECK(inverse_error(m) < 1e-6);
  }
}

TEST_CASE("relevance and budgeted admission") {
  const KernelHyper h = hyper(2, 2.0, 0.5, 0.01);
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd x = random_inputs(rng, 8, 2);
  GpModel m = GpModel::fit_batch(x, random_targets(rng, 8), h, 8);
  const Eigen::VectorXd s = m.relevance_scores(x.row(4).transpose());
  CHECK(s[4] == doctest::Approx(2.0));
  CHECK(s.maxCoeff() == doctest::Approx(2.0));
  CHECK(m.relevance_scores(Eigen::Vector2d(100.0, 100.0)).maxCoeff() < 1e-6 * 2.0);

  const Eigen::Vector2d q(1.9, 1.9);
  const Eigen::VectorXd sq = m.relevance_scores(q);
  Eigen::Index lowest = 0;
  for (Eigen::Index i = 1; i < sq.size(); ++i)
    if (sq[i] < sq[lowest]) lowest = i;
  CHECK(m.least_relevant(q) == lowest);

  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d p = random_inputs(rng, 1, 2).row(0).transpose();
    const auto evicted = m.admit(p, 0.5, p);
    CHECK(evicted.has_value());
    CHECK(m.size() == 8);
    CHECK(max_abs(m.inputs().row(7) - p.transpose()) == 0.0);
  }
  CHECK(inverse_error(m) < 1e-8);

  // ties go to the lowest index: far from everything, every score underflows to zero
  GpModel ties(h, 3);
  ties.add_points(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1));
  ties.add_points(Eigen::MatrixXd::Constant(1, 2, 0.1), Eigen::VectorXd::Zero(1));
  CHECK(ties.least_relevant(Eigen::Vector2d(1e3, 1e3)) == 0);
}

TEST_CASE("interval narrows as the neighbourhood of a query is sampled") {
  const KernelHyper h = hyper(2, 1.0, 0.5, 0.05);
  GpModel m(h, 100);
  const Eigen::Vector2d q(0.2, -0.1);
  std::mt19937_64 rng(51);
  std::normal_distribution<double> jitter(0.0, 0.2);
  double width = m.confidence(q, 2.0).width();
  for (int i = 0; i < 40; ++i) {
    const Eigen::Vector2d p = q + Eigen::Vector2d(jitter(rng), jitter(rng));
    m.add_points(p.transpose(), Eigen::VectorXd::Constant(1, std::sin(p[0])));
    const double w = m.confidence(q, 2.0).width();
    CHECK(w <= width + 1e-12);
    width = w;
  }
}

TEST_CASE("singular training data is reported") {
  KernelHyper h = hyper(1, 1.0, 1.0, 0.0);
  Eigen::MatrixXd x(2, 1);
  x << 0.5, 0.5;
  CHECK_THROWS_AS(GpModel::fit_batch(x, Eigen::Vector2d(1.0, 1.0), h), NumericError);
  GpModel m = GpModel::fit_batch(x.topRows(1), Eigen::VectorXd::Ones(1), h);
  CHECK_THROWS_AS(m.add_points(x.topRows(1), Eigen::VectorXd::Ones(1)), NumericError);
}

TEST_CASE("budget is enforced") {
  GpModel m(hyper(1), 2);
  m.add_points(Eigen::MatrixXd::Constant(2, 1, 0.0) + Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(0, 0));
  CHECK_THROWS_AS(m.add_points(Eigen::MatrixXd::Constant(1, 1, 3.0), Eigen::VectorXd::Zero(1)), UsageError);
  CHECK_THROWS_AS(GpModel(hyper(1), 0), UsageError);
}

TEST_CASE("checkpoint round trip rebuilds the inverse") {
  const KernelHyper h = hyper(2);
  std::mt19937_64 rng(61);
  GpModel m = GpModel::fit_batch(random_inputs(rng, 30, 2), random_targets(rng, 30), h, 50);
  m.add_points(random_inputs(rng, 2, 2), random_targets(rng, 2));
  const nlohmann::json doc = m.to_json();
  CHECK_FALSE(doc.contains("inverse"));
  const GpModel back = GpModel::from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.size() == m.size());
  CHECK(back.budget() == 50);
  CHECK(max_abs(back.inputs() - m.inputs()) == 0.0);
  CHECK(inverse_error(back) < 1e-10);
  const Eigen::Vector2d q(0.3, 0.4);
  CHECK(std::abs(back.posterior(q).mean - m.posterior(q).mean) < 1e-8);

  nlohmann::json broken = doc;
  broken["inputs"][0] = {1.0};
  CHECK_THROWS_AS(GpModel::from_json(broken), UsageError);
}

TEST_CASE("rank-1 add is cheaper than a rebuild at N = 300") {
  const KernelHyper h = hyper(6, 1.0, 1.0, 0.01);
  std::mt19937_64 rng(71);
  const Eigen::MatrixXd x = random_inputs(rng, 300, 6);
  const Eigen::VectorXd y = random_targets(rng, 300);
  GpModel m = GpModel::fit_batch(x.topRows(299), y.head(299), h, 300);
  using clock = std::chrono::steady_clock;
  double add_s = 1e9, rebuild_s = 1e9;
  for (int rep = 0; rep < 5; ++rep) {
    auto t0 = clock::now();
    m.add_points(x.bottomRows(1), y.tail(1));
    add_s = std::min(add_s, std::chrono::duration<double>(clock::now() - t0).count());
    const std::vector<Eigen::Index> last{299};
    m.remove_points(last);
    t0 = clock::now();
    const GpModel b = GpModel::fit_batch(x, y, h, 300);
    rebuild_s = std::min(rebuild_s, std::chrono::duration<double>(clock::now() - t0).count());
    CHECK(b.size() == 300);
  }
  CHECK(rebuild_s / add_s >= 5.0);
}
