#include <doctest.h>

#include <cmath>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/superlearner.hpp"

using namespace dynsl;
using doctest::Approx;

namespace {

const SimConfig& config() {
  static const SimConfig c = [] {
    SimConfig s = SimConfig::defaults();
    s.n = 400;
    return s;
  }();
  return c;
}

const Dataset& train_data() {
  static const Dataset d = [] {
    SimulatedCohort cohort = gen_longitudinal(config(), 501);
    cohort.truth.event_time = gen_events_landmark(cohort, config(), 502);
    return apply_censoring(cohort, CensoringScenario::random, config(), 503).data;
  }();
  return d;
}

LearnerSpec spec(std::string id, LearnerKind kind, nlohmann::json h = nlohmann::json::object()) {
  LearnerSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.hyperparameters = std::move(h);
  return s;
}

std::vector<LearnerSpec> cox_library() {
  LearnerSpec two = spec("two", LearnerKind::two_stage_cox);
  return {spec("one", LearnerKind::one_stage_cox), two, spec("half", LearnerKind::custom, {{"value", 0.85}})};
}

struct Cv {
  FoldAssignment folds;
  CvPredictions pred;
};

const Cv& cv() {
  static const Cv c = [] {
    const PredictionWindow w = config().window;
    FoldAssignment f = stratified_folds(train_data(), w, 5, 9);
    CvPredictions p = cv_predictions(cox_library(), train_data(), w, f, 10);
    return Cv{std::move(f), std::move(p)};
  }();
  return c;
}

}  // namespace

TEST_CASE("cross-validated predictions come from models that never saw the row") {
  const PredictionWindow w = config().window;
  const Cv& c = cv();
  REQUIRE(c.pred.dropped.empty());
  REQUIRE(c.pred.end.learner_ids == std::vector<std::string>{"one", "two", "half"});
  CHECK(c.pred.end.rows == risk_set(train_data(), w.t).indices);
  for (std::size_t v = 0; v < 5; ++v) {
    const Dataset tr = train_data().subset(c.folds.training_rows(v));
    const auto m = train_learner(cox_library()[0], tr, w.t, 0);
    std::vector<std::size_t> rows, pos;
    for (std::size_t r = 0; r < c.pred.end.rows.size(); ++r)
      if (c.pred.end.fold_of[r] == v) {
        rows.push_back(c.pred.end.rows[r]);
        pos.push_back(r);
      }
    const auto pe = m->predict(train_data(), rows, w.u);
    const auto pm = m->predict(train_data(), rows, w.midpoint());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      CHECK(c.pred.end.values(static_cast<Eigen::Index>(pos[j]), 0) == pe[j]);
      CHECK(c.pred.mid.values(static_cast<Eigen::Index>(pos[j]), 0) == pm[j]);
    }
  }
  for (Eigen::Index r = 0; r < c.pred.end.values.rows(); ++r) CHECK(c.pred.end.values(r, 2) == 0.85);
}

TEST_CASE("convex weights beat a simplex grid and every vertex") {
  const LossEvaluator loss(train_data(), config().window);
  const Cv& c = cv();
  for (MetricKind kind : {MetricKind::brier, MetricKind::integrated_brier}) {
    const EnsembleWeights w = optimize_weights_convex(c.pred.end, c.pred.mid, loss, kind);
    CHECK(w.converged);
    double sum = 0.0;
    for (double x : w.omega) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == Approx(1.0).epsilon(1e-12));
    double grid = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 50; ++a)
      for (int b = 0; a + b <= 50; ++b) {
        const std::vector<double> o{a / 50.0, b / 50.0, (50 - a - b) / 50.0};
        grid = std::min(grid, loss(kind, c.pred.end.mix(o), c.pred.mid.mix(o)));
      }
    CHECK(w.achieved_loss <= grid + 1e-12);
    for (double l : column_losses(loss, kind, c.pred.end, c.pred.mid)) CHECK(w.achieved_loss <= l + 1e-15);
    const auto cols = column_losses(loss, kind, c.pred.end, c.pred.mid);
    CHECK(discrete_select(c.pred.end, c.pred.mid, loss, kind) ==
          static_cast<std::size_t>(std::min_element(cols.begin(), cols.end()) - cols.begin()));
  }
}

TEST_CASE("mixing two constants lands on the weighted survivor fraction") {
  const PredictionWindow w = config().window;
  const std::vector<LearnerSpec> lib{spec("lo", LearnerKind::custom, {{"value", 0.2}}),
                                     spec("hi", LearnerKind::custom, {{"value", 0.95}})};
  const CvPredictions p = cv_predictions(lib, train_data(), w, cv().folds, 1);
  const LossEvaluator loss(train_data(), w);
  const EnsembleWeights e = optimize_weights_convex(p.end, p.mid, loss, MetricKind::brier);
  // the BS-optimal constant is sum w_i 1{T_i > u} / sum w_i
  const IpcwWeights& iw = loss.end_weights();
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < iw.subjects.size(); ++k) {
    num += iw.weight[k] * (train_data().subject(iw.subjects[k]).observed_time > w.u ? 1.0 : 0.0);
    den += iw.weight[k];
  }
  const double target = num / den;
  REQUIRE(target > 0.2);
  REQUIRE(target < 0.95);
  CHECK(e.omega[0] * 0.2 + e.omega[1] * 0.95 == Approx(target).epsilon(1e-5));
}

TEST_CASE("tv-AUC weights") {
  const LossEvaluator loss(train_data(), config().window);
  const Cv& c = cv();
  const EnsembleWeights a = optimize_weights_auc(c.pred.end, loss, 10, 4);
  const EnsembleWeights b = optimize_weights_auc(c.pred.end, loss, 10, 4);
  CHECK(a.omega == b.omega);
  double sum = 0.0;
  for (double x : a.omega) sum += x;
  CHECK(sum == Approx(1.0).epsilon(1e-12));
  for (double v : column_losses(loss, MetricKind::tv_auc, c.pred.end, c.pred.mid)) CHECK(a.achieved_loss >= v - 1e-10);
  CHECK(a.achieved_loss == loss(MetricKind::tv_auc, c.pred.end.mix(a.omega)));
  CHECK_THROWS_AS(optimize_weights_convex(c.pred.end, c.pred.mid, loss, MetricKind::tv_auc), DomainError);
}

TEST_CASE("fit_super_learner end to end") {
  const PredictionWindow w = config().window;
  SuperLearnerConfig sc;
  sc.library = cox_library();
  sc.library.push_back(
      spec("broken", LearnerKind::one_stage_boost, {{"inner_folds", 500}, {"b_stop", 5}}));  // more folds than events
  sc.seed = 9;
  const SuperLearnerFit fit = fit_super_learner(train_data(), w, sc);
  CHECK(fit.dropped == std::vector<std::string>{"broken"});
  REQUIRE(fit.warnings.size() == 1);
  CHECK(fit.warnings[0].find("broken") != std::string::npos);
  CHECK(fit.learner_ids == std::vector<std::string>{"one", "two", "half"});
  CHECK(fit.folds.fold_of == cv().folds.fold_of);

  const RiskSet rs = risk_set(train_data(), w.t);
  const Eigen::MatrixXd P = fit.learner_predictions(train_data(), rs.indices, w.u);
  for (MetricKind kind : sc.losses) {
    const auto& r = fit.result(kind);
    const auto ens = fit.predict(train_data(), rs.indices, w.u, kind);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += r.weights.omega[k] * P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      CHECK(ens[i] == Approx(s).epsilon(1e-14));
    }
  }

  // serialization keeps predictions bit-identical
  const SuperLearnerFit back = SuperLearnerFit::from_json(nlohmann::json::parse(fit.to_json().dump()));
  CHECK(back.fitted.size() == fit.fitted.size());
  for (MetricKind kind : sc.losses)
    CHECK(back.predict(train_data(), rs.indices, w.u, kind) == fit.predict(train_data(), rs.indices, w.u, kind));

  // refit-and-predict on the same data agrees with the stored refits
  std::vector<LearnerSpec> kept = cox_library();
  const auto again = fit_full_and_predict(kept, fit.result(MetricKind::brier).weights, train_data(), train_data(), w, sc.seed);
  const auto direct = fit.predict(train_data(), rs.indices, w.u, MetricKind::brier);
  for (std::size_t i = 0; i < rs.size(); ++i) CHECK(again[i] == Approx(direct[i]).epsilon(1e-12));
}

TEST_CASE("single-learner library gets all the weight") {
  SuperLearnerConfig sc;
  sc.library = {spec("only", LearnerKind::one_stage_cox)};
  const SuperLearnerFit fit = fit_super_learner(train_data(), config().window, sc);
  for (const auto& r : fit.losses) {
    CHECK(r.weights.omega == std::vector<double>{1.0});
    CHECK(r.discrete == 0);
  }
}

TEST_CASE("configuration errors") {
  SuperLearnerConfig sc;
  sc.library = {spec("a", LearnerKind::one_stage_cox), spec("a", LearnerKind::two_stage_cox)};
  CHECK_THROWS_AS(fit_super_learner(train_data(), config().window, sc), ConfigError);
  sc.library = {};
  CHECK_THROWS_AS(fit_super_learner(train_data(), config().window, sc), ConfigError);
  sc.library = {spec("a", LearnerKind::one_stage_cox)};
  sc.folds = 1;
  CHECK_THROWS_AS(fit_super_learner(train_data(), config().window, sc), ConfigError);
}
