#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dynsl/error.hpp"
#include "dynsl/report.hpp"

using namespace dynsl;
using doctest::Approx;

namespace {

struct Setup {
  SimConfig config;
  Dataset train, test;
  SuperLearnerFit fit;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup x;
    x.config = SimConfig::defaults();
    x.config.n = 450;
    SimulatedCohort cohort = gen_longitudinal(x.config, 601);
    cohort.truth.event_time = gen_events_landmark(cohort, x.config, 602);
    const Dataset all = apply_censoring(cohort, CensoringScenario::random, x.config, 603).data;
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < all.size(); ++i) (i < 350 ? tr : te).push_back(i);
    x.train = all.subset(tr);
    x.test = all.subset(te);
    SuperLearnerConfig sc;
    LearnerSpec a, b;
    a.id = "one";
    b.id = "two";
    b.kind = LearnerKind::two_stage_cox;
    sc.library = {a, b};
    sc.seed = 5;
    x.fit = fit_super_learner(x.train, x.config.window, sc);
    return x;
  }();
  return s;
}

}  // namespace

TEST_CASE("weight table mirrors the fit") {
  const auto& s = setup();
  const WeightTable t = weight_table(s.fit);
  CHECK(t.learners == s.fit.learner_ids);
  REQUIRE(t.losses.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    std::size_t marks = 0;
    for (std::size_t k = 0; k < t.learners.size(); ++k) {
      sum += t.omega[k][c];
      marks += t.dsl[k][c];
      CHECK(t.omega[k][c] == s.fit.result(t.losses[c]).weights.omega[k]);
    }
    CHECK(sum == Approx(1.0));
    CHECK(marks == 1);
  }
  std::ostringstream text, csv;
  write_text(t, text);
  write_csv(t, csv);
  CHECK(text.str().find("one") != std::string::npos);
  CHECK(std::count(csv.str().begin(), csv.str().end(), '\n') >= 3);
}

TEST_CASE("evaluate_fit agrees with direct metric calls") {
  const auto& s = setup();
  const PredictionWindow w = s.config.window;
  const MetricTable t = evaluate_fit(s.fit, s.test);
  CHECK(t.models == std::vector<std::string>{"one", "two", "eSL", "dSL", "KM"});
  const RiskSet rs = risk_set(s.test, w.t);
  CHECK(t.at_risk == rs.size());

  const IpcwWeights we = ipcw(s.test, w), wm = ipcw(s.test, {w.t, w.midpoint()});
  for (std::size_t k = 0; k < 2; ++k) {
    const auto pe = s.fit.fitted[k]->predict(s.test, rs.indices, w.u);
    const auto pm = s.fit.fitted[k]->predict(s.test, rs.indices, w.midpoint());
    CHECK(t.value[k][0] == brier(pe, s.test, we, BrierPairing::conventional).value);
    CHECK(t.value[k][1] == integrated_brier(pm, pe, s.test, wm, we, BrierPairing::conventional).value);
    CHECK(t.value[k][2] == tv_auc(pe, s.test, we, AucOrientation::conventional).value);
  }
  const auto esl = s.fit.predict(s.test, rs.indices, w.u, MetricKind::brier);
  CHECK(t.value[2][0] == Approx(brier(esl, s.test, we, BrierPairing::conventional).value).epsilon(1e-14));
  const std::size_t d = s.fit.result(MetricKind::brier).discrete;
  CHECK(t.value[3][0] == t.value[d][0]);

  std::ostringstream text, csv;
  write_text(t, text);
  write_csv(t, csv);
  CHECK(text.str().find("1-tvAUC") != std::string::npos);
  CHECK(csv.str().find("KM,1-tvAUC,") != std::string::npos);
}

TEST_CASE("study rows survive a write/read round trip and summarize") {
  StudyResult r;
  r.learner_ids = {"a", "b"};
  for (std::size_t rep = 0; rep < 3; ++rep)
    for (const char* model : {"a", "b", "eSL"}) {
      StudyRow row;
      row.replicate = rep;
      row.scenario = CensoringScenario::random;
      row.loss = MetricKind::brier;
      row.model = model;
      row.train_value = 0.1 * static_cast<double>(rep + 1);
      row.test_value = 0.2 + 0.01 * static_cast<double>(rep);
      row.weights = std::string(model) == "eSL" ? std::vector<double>{0.25 * static_cast<double>(rep), 1 - 0.25 * static_cast<double>(rep)}
                                                : std::vector<double>{0.0, 0.0};
      row.converged = rep != 1;
      row.censor_rate = 0.3;
      r.rows.push_back(row);
    }
  std::ostringstream out;
  write_study_rows(r, out);
  std::istringstream in(out.str());
  const StudyResult back = read_study_rows(in);
  CHECK(back.learner_ids == r.learner_ids);
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(back.rows[i].replicate == r.rows[i].replicate);
    CHECK(back.rows[i].model == r.rows[i].model);
    CHECK(back.rows[i].test_value == r.rows[i].test_value);
    CHECK(back.rows[i].weights == r.rows[i].weights);
    CHECK(back.rows[i].converged == r.rows[i].converged);
  }

  const auto summary = summarize_study(back);
  REQUIRE(summary.size() == 3);
  CHECK(summary[2].model == "eSL");
  CHECK(summary[2].count == 3);
  CHECK(summary[2].mean_test == Approx(0.21));
  CHECK(summary[2].mean_weights[0] == Approx(0.25));
  CHECK(summary[2].converged_fraction == Approx(2.0 / 3.0));

  std::istringstream broken("replicate,model\n1,a\n");
  CHECK_THROWS_AS(read_study_rows(broken), SchemaError);
}
