#include <doctest.h>

#include <cmath>
#include <random>

#include "dynsl/boosting.hpp"
#include "dynsl/error.hpp"
#include "dynsl/simulator.hpp"

using namespace dynsl;
using doctest::Approx;

namespace {

struct CoxData {
  Eigen::MatrixXd X;
  std::vector<double> t;
  std::vector<bool> e;
};

// exponential times with log-hazard 0.8 * 1{x0 > 0} and a noise column
CoxData step_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CoxData d{Eigen::MatrixXd(n, 3), std::vector<double>(n), std::vector<bool>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < 3; ++k) d.X(r, k) = z(rng);
    const double lp = d.X(r, 0) > 0 ? 0.8 : 0.0;
    const double event = -std::log(u(rng)) / (0.2 * std::exp(lp));
    const double cens = 15.0 * u(rng);
    d.t[i] = std::min(event, cens);
    d.e[i] = event <= cens;
  }
  return d;
}

}  // namespace

TEST_CASE("negative gradient matches finite differences of the loss") {
  const CoxData d = step_data(40, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<double> psi(40);
  for (auto& x : psi) x = z(rng);
  const Eigen::VectorXd g = cox_negative_gradient(psi, d.t, d.e);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    auto a = psi, b = psi;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    const double fd = (cox_negative_partial_loglik(a, d.t, d.e) - cox_negative_partial_loglik(b, d.t, d.e)) / 2e-6;
    CHECK(std::fabs(-fd - g(static_cast<Eigen::Index>(i))) < 1e-6);
  }
  // martingale residuals sum to zero
  CHECK(std::fabs(g.sum()) < 1e-10);
}

TEST_CASE("regression tree recovers a step and respects its limits") {
  Eigen::MatrixXd X(20, 1);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = i;
    y(i) = i < 7 ? -1.0 : 2.0;
  }
  const RegressionTree tree = fit_tree(X, y, TreeSpec{{0}, 1, 2, 1});
  REQUIRE(tree.leaf_count() == 2);
  CHECK(tree.nodes[0].threshold == 6.5);
  CHECK((tree.predict(X) - y).norm() == 0.0);

  const RegressionTree deep = fit_tree(X, Eigen::VectorXd::LinSpaced(20, 0, 1), TreeSpec{{0}, 3, 2, 1});
  CHECK(deep.leaf_count() <= 8);
  const RegressionTree bucket = fit_tree(X, y, TreeSpec{{0}, 1, 2, 8});
  CHECK(bucket.nodes[0].threshold == 7.5);  // a 7-row child is not admissible

  const RegressionTree flat = fit_tree(X, Eigen::VectorXd::Constant(20, 3.0), TreeSpec{{0}, 2, 2, 1});
  CHECK(flat.leaf_count() == 1);
  CHECK(flat.predict_row(X.row(4)) == 3.0);
  const RegressionTree tiny = fit_tree(X, y, TreeSpec{{0}, 2, 21, 1});
  CHECK(tiny.leaf_count() == 1);
}

TEST_CASE("candidate specs") {
  BoostOptions o;
  CHECK(candidate_specs(4, o).size() == 4 + 6);
  o.interactions = false;
  CHECK(candidate_specs(4, o).size() == 4);
}

TEST_CASE("boosting lowers the training risk and picks the signal feature") {
  const CoxData d = step_data(300, 3);
  BoostOptions o;
  o.nu = 0.1;
  o.b_stop = 60;
  o.interactions = false;
  const BoostFit fit = boost(d.X, d.t, d.e, o);
  REQUIRE(fit.risk_path.size() == 61);
  CHECK(fit.risk_path.back() < fit.risk_path.front());
  for (std::size_t b = 0; b < 5; ++b) CHECK(fit.selected[b].spec.features == std::vector<std::size_t>{0});
  // truncated prediction equals a shorter run
  BoostOptions shorter = o;
  shorter.b_stop = 20;
  CHECK((boost(d.X, d.t, d.e, shorter).predict(d.X) - fit.predict(d.X, 20)).norm() < 1e-12);
}

TEST_CASE("tree boosting is invariant under increasing feature transforms") {
  const CoxData d = step_data(150, 4);
  Eigen::MatrixXd Y = d.X;
  Y.col(1) = d.X.col(1).array().exp();
  Y.col(2) = d.X.col(2).array().pow(3) * 5.0 + 2.0;
  BoostOptions o;
  o.nu = 0.2;
  o.b_stop = 30;
  const Eigen::VectorXd a = boost(d.X, d.t, d.e, o).predict(d.X);
  const Eigen::VectorXd b = boost(Y, d.t, d.e, o).predict(Y);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("early stopping") {
  const CoxData d = step_data(200, 5);
  BoostOptions o;
  o.nu = 0.1;
  o.b_stop = 80;
  const EarlyStopping a = select_b_opt(d.X, d.t, d.e, o, 17);
  const EarlyStopping b = select_b_opt(d.X, d.t, d.e, o, 17);
  REQUIRE(a.cv_risk.size() == 81);
  CHECK(a.cv_risk == b.cv_risk);
  CHECK(a.b_opt == b.b_opt);
  for (double r : a.cv_risk) CHECK(a.cv_risk[a.b_opt] <= r);
  CHECK(a.b_opt > 0);  // the step effect is real

  // pure noise: stopping stays early
  CoxData noise = d;
  std::mt19937_64 rng(6);
  std::shuffle(noise.t.begin(), noise.t.end(), rng);
  const EarlyStopping z = select_b_opt(noise.X, noise.t, noise.e, o, 17);
  CHECK(z.b_opt < a.b_opt);

  o.inner_folds = 1;
  CHECK_THROWS_AS(select_b_opt(d.X, d.t, d.e, o, 1), DomainError);
}

TEST_CASE("boosted predictions from a dataset") {
  SimConfig c = SimConfig::defaults();
  c.n = 300;
  SimulatedCohort cohort = gen_longitudinal(c, 7);
  cohort.truth.event_time = gen_events_landmark(cohort, c, 8);
  const Dataset d = apply_censoring(cohort, CensoringScenario::random, c, 9).data;
  BoostOptions o;
  o.nu = 0.1;
  o.b_stop = 40;
  const BoostedCoxModel m = train_boosted_cox(d, c.window.t, LandmarkStage::one_stage, {}, o, 3);
  const RiskSet rs = risk_set(d, c.window.t);
  CHECK(m.fit.iterations() == m.stopping.b_opt);
  for (double p : predict_boosted(m, d, rs.indices, c.window.t)) CHECK(p == 1.0);
  const auto p5 = predict_boosted(m, d, rs.indices, 5.0), p7 = predict_boosted(m, d, rs.indices, 7.0);
  for (std::size_t i = 0; i < p5.size(); ++i) {
    CHECK(p5[i] >= p7[i]);
    CHECK(p7[i] > 0.0);
  }
  CHECK_THROWS_AS(predict_boosted(m, d, rs.indices, 1.0), DomainError);
}
