#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/landmark.hpp"
#include "dynsl/simulator.hpp"
#include "fixtures.hpp"

using namespace dynsl;
using doctest::Approx;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Dataset one_stage_truth_data(std::size_t n, std::uint64_t seed, const SimConfig& c) {
  SimulatedCohort cohort = gen_longitudinal(c, seed);
  cohort.truth.event_time = gen_events_landmark(cohort, c, seed + 1);
  return apply_censoring(cohort, CensoringScenario::none, c, seed + 2).data;
  (void)n;
}

}  // namespace

TEST_CASE("lvcf features") {
  const Dataset d = fixtures::make({
      {9, true, {}, {{1, 10}, {4, 20}, {7, 30}}},
      {8, false, {}, {{2, 5}, {6, 15}}},
      {10, true, {}, {{6.5, 3}}},
      {12, true, {}, {{0, 1}, {5, 7}}},
  });
  const LandmarkFeatures f = lvcf_features(d, 6);
  REQUIRE(f.feature_names == std::vector<std::string>{"y", "y_missing"});
  CHECK(f.design(0, 0) == 20);
  CHECK(f.design(1, 0) == 15);  // measured exactly at t
  CHECK(f.design(2, 0) == median({20, 15, 7}));
  CHECK(f.design(2, 1) == 1.0);
  CHECK(f.design(0, 1) == 0.0);
}

TEST_CASE("two-stage features on nearly noiseless lines") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> a(0.0, 1.0), b(0.0, 0.3), e(0.0, 0.01);
  std::vector<fixtures::Subject> s;
  std::vector<std::pair<double, double>> lines;
  for (int i = 0; i < 60; ++i) {
    const double ai = a(rng), bi = b(rng);
    lines.push_back({ai, bi});
    std::vector<std::pair<double, double>> v;
    for (double x : {0.0, 1.5, 3.0, 4.5}) v.push_back({x, ai + x * bi + e(rng)});
    s.push_back({20, true, {}, v});
  }
  s.push_back({20, false, {}, {}});
  const Dataset d = fixtures::make(s);
  const FeatureSchema schema = learn_two_stage_schema(d, 5, TrajectorySpec{});
  const LandmarkFeatures f = build_features(schema, d, risk_set(d, 5).indices);
  for (int i = 0; i < 60; ++i) CHECK(std::fabs(f.design(i, 0) - (lines[i].first + 5 * lines[i].second)) < 0.05);
  const double pop = predict_eta(schema.lmm_fits[0], Eigen::Vector2d::Zero(), 5);
  CHECK(f.design(60, 0) == Approx(pop).epsilon(1e-12));
}

TEST_CASE("two-stage features track the true trajectory") {
  SimConfig c = SimConfig::defaults();
  c.n = 500;
  c.test_n = 1;
  SimulatedCohort cohort = gen_longitudinal(c, 90);
  cohort.truth.event_time = std::vector<double>(c.n, 50.0);
  const Dataset d = apply_censoring(cohort, CensoringScenario::none, c, 91).data;
  const double t = c.window.t;
  const LandmarkFeatures f = two_stage_features(d, t, TrajectorySpec{});
  const auto col = static_cast<Eigen::Index>(
      std::find(f.feature_names.begin(), f.feature_names.end(), "y_eta") - f.feature_names.begin());
  REQUIRE(col < f.design.cols());
  // oracle: posterior variance of eta(t) under the true parameters bounds the mean squared error
  const auto& L = c.longitudinal;
  double mse = 0.0, bound = 0.0;
  for (std::size_t r = 0; r < f.subjects.size(); ++r) {
    const std::size_t i = f.subjects[r];
    const double truth = L.beta[0] + cohort.truth.random_effects[i][0] + (L.beta[1] + cohort.truth.random_effects[i][1]) * t;
    mse += std::pow(f.design(static_cast<Eigen::Index>(r), col) - truth, 2);
    Eigen::MatrixXd Z(0, 2);
    for (double v : cohort.visit_times[i])
      if (v <= t) {
        Z.conservativeResize(Z.rows() + 1, 2);
        Z.row(Z.rows() - 1) << 1.0, v;
      }
    const Eigen::MatrixXd post = (L.D.inverse() + Z.transpose() * Z / L.sigma2).inverse();
    const Eigen::Vector2d z(1.0, t);
    bound += z.dot(post * z);
  }
  mse /= static_cast<double>(f.subjects.size());
  bound /= static_cast<double>(f.subjects.size());
  CHECK(mse < 1.5 * bound);
}

TEST_CASE("fit_cox matches a grid search on a 4-subject example") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 0, 1, 0;
  const std::vector<double> t{1, 2, 3, 4};
  const std::vector<bool> e{true, true, false, true};
  // partial likelihood written out by hand: risk sets {1,2,3,4}, {2,3,4}, {4}
  auto pl = [](double b) {
    const double eb = std::exp(b);
    return b - std::log(2 * eb + 2) + 0.0 - std::log(eb + 2) + 0.0 - 0.0;
  };
  double best = 0.0, best_v = -1e300;
  for (double b = -5; b <= 5; b += 1e-3)
    if (pl(b) > best_v) best_v = pl(b), best = b;
  for (double b = best - 1e-3; b <= best + 1e-3; b += 1e-7)
    if (pl(b) > best_v) best_v = pl(b), best = b;
  const CoxFit fit = fit_cox(X, t, e);
  CHECK(fit.converged);
  CHECK(fit.coefficients[0] == Approx(best).epsilon(1e-4));
  CHECK(fit.log_partial_likelihood == Approx(best_v).epsilon(1e-10));
  CHECK(fit.max_abs_score < 1e-6);
}

TEST_CASE("fit_cox leaves a zero covariate at zero") {
  Eigen::MatrixXd X(6, 2);
  X << 0.5, 0, -1, 0, 0.3, 0, 1.2, 0, -0.7, 0, 0.1, 0;
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<bool> e{true, false, true, true, false, true};
  const CoxFit fit = fit_cox(X, t, e);
  CHECK(fit.coefficients[1] == 0.0);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(6, 1);
  const CoxFit null = fit_cox(Eigen::MatrixXd(X.col(0)), t, e);
  CHECK(fit.log_partial_likelihood == Approx(null.log_partial_likelihood).epsilon(1e-12));
  CHECK(fit.null_log_partial_likelihood == Approx(cox_partial_loglik(Z, Eigen::VectorXd::Zero(1), t, e)).epsilon(1e-12));
}

TEST_CASE("fit_cox failure modes") {
  const std::vector<double> t{1, 2, 3, 4};
  Eigen::MatrixXd sep(4, 1);
  sep << 3, 2, 1, 0;  // events in covariate order: monotone likelihood
  CHECK_THROWS_AS(fit_cox(sep, t, {true, true, true, false}), FitError);

  Eigen::MatrixXd dup(4, 2);
  dup << 1, 2, 0, 0, 1, 2, 3, 6;
  try {
    fit_cox(dup, t, {true, false, true, true}, {}, {"a", "b"});
    FAIL("expected rank deficiency");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_cox(Eigen::MatrixXd::Ones(4, 1) * 0.0 + Eigen::MatrixXd::Random(4, 1), t, {false, false, false, false}),
                  FitError);
}

TEST_CASE("fit_cox gradient matches finite differences") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd X(10, 2);
    std::vector<double> t(10);
    std::vector<bool> e(10);
    for (int i = 0; i < 10; ++i) {
      X(i, 0) = z(rng);
      X(i, 1) = z(rng);
      t[i] = std::round(u(rng) * 2) / 2;  // ties
      e[i] = i % 3 != 0;
    }
    const Eigen::Vector2d beta(z(rng) * 0.5, z(rng) * 0.5);
    Eigen::VectorXd g;
    cox_partial_loglik(X, beta, t, e, &g);
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d a = beta, b = beta;
      a[k] += 1e-6;
      b[k] -= 1e-6;
      const double fd = (cox_partial_loglik(X, a, t, e) - cox_partial_loglik(X, b, t, e)) / 2e-6;
      CHECK(std::fabs(fd - g[k]) < 1e-6);
    }
  }
}

TEST_CASE("one-stage landmark Cox recovers the generating coefficients") {
  SimConfig c = SimConfig::defaults();
  c.n = 500;
  c.measurement.span = c.window.t;  // history complete at the landmark: the landmark model is exact
  const Dataset d = one_stage_truth_data(c.n, 101, c);
  const LandmarkFeatures f = lvcf_features(d, c.window.t);
  const CoxFit fit = fit_cox(f, d);
  REQUIRE(fit.converged);
  const Eigen::MatrixXd cov = fit.information.inverse();
  const std::vector<double> truth{c.landmark_hazard.gamma[0], c.landmark_hazard.gamma[1], c.landmark_hazard.alpha};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto pos = static_cast<Eigen::Index>(std::find(fit.kept.begin(), fit.kept.end(), k) - fit.kept.begin());
    REQUIRE(pos < static_cast<Eigen::Index>(fit.kept.size()));
    const double se = std::sqrt(cov(pos, pos));
    CHECK(std::fabs(fit.coefficients[static_cast<Eigen::Index>(k)] - truth[k]) < 3 * se);
  }
  // accepted Newton steps never lose more than rounding noise
  for (std::size_t k = 1; k < fit.loglik_path.size(); ++k)
    CHECK(fit.loglik_path[k] >= fit.loglik_path[k - 1] - 64 * 2.2e-16 * std::fabs(fit.loglik_path[k - 1]));
}

TEST_CASE("landmark predictions") {
  SimConfig c = SimConfig::defaults();
  c.n = 400;
  const Dataset d = one_stage_truth_data(c.n, 111, c);
  const double t = c.window.t;
  const LandmarkCoxModel m = train_landmark_cox(d, t, LandmarkStage::one_stage);
  const RiskSet rs = risk_set(d, t);

  for (double p : predict_landmark(m, d, rs.indices, t)) CHECK(p == 1.0);
  const auto p5 = predict_landmark(m, d, rs.indices, 5.0), p7 = predict_landmark(m, d, rs.indices, 7.0);
  for (std::size_t i = 0; i < p5.size(); ++i) CHECK(p5[i] >= p7[i]);

  // second implementation: LVCF by hand, Breslow by direct sums over the training risk set
  const auto& beta = m.fit.coefficients;
  auto lp_of = [&](std::size_t i) {
    const auto& s = d.subject(i);
    const auto hist = d.history(i, 0, t);
    const double y = hist.empty() ? m.schema.biomarker_medians[0] : hist.back().value;
    return beta[0] * s.baseline[0] + beta[1] * s.baseline[1] + beta[2] * y + beta[3] * (hist.empty() ? 1.0 : 0.0);
  };
  const double u = c.window.u;
  double H = 0.0;
  for (std::size_t i : rs.indices) {
    const auto& s = d.subject(i);
    if (!s.event || s.observed_time > u) continue;
    double denom = 0.0;
    for (std::size_t j : rs.indices)
      if (d.subject(j).observed_time >= s.observed_time) denom += std::exp(lp_of(j));
    H += 1.0 / denom;
  }
  const auto p = predict_landmark(m, d, rs.indices, u);
  for (std::size_t r = 0; r < rs.size(); ++r)
    CHECK(std::fabs(p[r] - std::exp(-H * std::exp(lp_of(rs.indices[r])))) < 1e-10);

  // equal linear predictors give equal predictions
  std::vector<std::size_t> twice{rs.indices[0], rs.indices[0]};
  const auto q = predict_landmark(m, d, twice, u);
  CHECK(q[0] == q[1]);
  CHECK_THROWS_AS(predict_landmark(m, d, rs.indices, t - 1), DomainError);
}

TEST_CASE("rescaling a feature rescales its coefficient only") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(80, 2);
  std::vector<double> t(80);
  std::vector<bool> e(80);
  for (int i = 0; i < 80; ++i) {
    X(i, 0) = z(rng);
    X(i, 1) = z(rng);
    t[i] = -std::log(u(rng)) / std::exp(0.5 * X(i, 0) - 0.3 * X(i, 1));
    e[i] = u(rng) < 0.8;
  }
  const CoxFit a = fit_cox(X, t, e);
  Eigen::MatrixXd Y = X;
  Y.col(1) *= 7.5;
  const CoxFit b = fit_cox(Y, t, e);
  CHECK(b.coefficients[1] == Approx(a.coefficients[1] / 7.5).epsilon(1e-8));
  const Eigen::VectorXd la = X * a.coefficients, lb = Y * b.coefficients;
  CHECK((la - lb).cwiseAbs().maxCoeff() < 1e-8);
}
