#include <doctest.h>

#include <cmath>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/simulator.hpp"
#include "dynsl/survival.hpp"
#include "fixtures.hpp"

using namespace dynsl;
using doctest::Approx;

TEST_CASE("kaplan_meier hand examples") {
  const std::vector<double> t{1, 2, 3};
  const StepFunction s = kaplan_meier(t, {true, true, true});
  CHECK(s(0.5) == 1.0);
  CHECK(s(1) == Approx(2.0 / 3.0));
  CHECK(s(2) == Approx(1.0 / 3.0));
  CHECK(s(3) == 0.0);

  const std::vector<double> cens{1, 2, 3};
  const StepFunction one = kaplan_meier(cens, {false, false, false});
  for (double x : {0.0, 1.0, 2.5, 10.0}) CHECK(one(x) == 1.0);

  const std::vector<double> tied{2, 2, 4};
  const StepFunction k = kaplan_meier(tied, {true, false, true});
  CHECK(k(2) == Approx(2.0 / 3.0));
  CHECK(k(4) == 0.0);

  CHECK_THROWS_AS(kaplan_meier(std::vector<double>{}, {}), DomainError);
}

TEST_CASE("kaplan_meier equals the empirical survivor fraction without censoring") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(1, 10);
  std::vector<double> t(57);
  for (auto& x : t) x = d(rng);
  const StepFunction s = kaplan_meier(t, std::vector<bool>(t.size(), true));
  for (int g = 0; g <= 11; ++g) {
    const double frac = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double x) { return x > g; })) / 57.0;
    CHECK(s(g) == Approx(frac).epsilon(1e-12));
  }
}

TEST_CASE("censoring_survival conditions on the risk set") {
  // subject 1 leaves before the landmark; R(2) = {T=4 censored, T=6 event}
  const Dataset d = fixtures::times({1, 4, 6}, {true, false, true});
  const StepFunction g = censoring_survival(d, 2);
  CHECK(g(2) == 1.0);
  CHECK(g(3.9) == 1.0);
  CHECK(g(4) == Approx(0.5));
  CHECK(g(10) == Approx(0.5));

  const Dataset none = fixtures::times({3, 5, 7}, {true, true, true});
  const StepFunction one = censoring_survival(none, 1);
  for (double x : {1.0, 4.0, 8.0}) CHECK(one(x) == 1.0);

  CHECK_THROWS_AS(censoring_survival(d, 6), DomainError);
}

TEST_CASE("censoring_survival equals reverse KM on the at-risk subset") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0), b(0.0, 1.0);
  std::vector<double> t(200);
  std::vector<bool> e(200);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = u(rng);
    e[i] = b(rng) < 0.6;
  }
  const Dataset d = fixtures::times(t, e);
  const double land = 3.0;
  std::vector<double> sub_t;
  std::vector<bool> sub_c;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > land) {
      sub_t.push_back(t[i]);
      sub_c.push_back(!e[i]);
    }
  const StepFunction g = censoring_survival(d, land);
  const StepFunction k = kaplan_meier(sub_t, sub_c);
  for (double s = 3.0; s < 10.0; s += 0.05) CHECK(g(s) == k(s));
}

TEST_CASE("ipcw hand example and zero weights") {
  const Dataset d = fixtures::times({1, 4, 6}, {true, false, true});
  const IpcwWeights w = ipcw(d, {2, 6});
  REQUIRE(w.subjects == std::vector<std::size_t>{1, 2});
  CHECK(w.weight[0] == 0.0);
  CHECK(w.weight[1] == Approx(2.0));

  const Dataset full = fixtures::times({3, 5, 7, 9}, {true, true, true, false});
  const IpcwWeights v = ipcw(full, {1, 6});
  for (double x : v.weight) CHECK((x == 0.0 || x == 1.0));
  CHECK(v.weight == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("ipcw on simulated random censoring") {
  SimConfig c = SimConfig::defaults();
  c.n = 2000;
  c.target_censor_rate = 0.25;
  SimulatedCohort cohort = gen_longitudinal(c, 21);
  cohort.truth.event_time = gen_events_landmark(cohort, c, 22);
  const CensoringOutcome cens = apply_censoring(cohort, CensoringScenario::random, c, 23);
  const Dataset& d = cens.data;
  const PredictionWindow w = c.window;

  // C ~ Uniform(0, c_max): P(C > u | C > t) = (c_max - u) / (c_max - t)
  const double cmax = cens.calibrated_parameter;
  const double truth = (cmax - w.u) / (cmax - w.t);
  CHECK(censoring_survival(d, w.t)(w.u) == Approx(truth).epsilon(0.05 / truth));

  const IpcwWeights iw = ipcw(d, w);
  double sum = 0.0;
  for (std::size_t k = 0; k < iw.subjects.size(); ++k) {
    const auto& s = d.subject(iw.subjects[k]);
    const bool kept = event_in_window(s, w) || s.observed_time > w.u;
    sum += iw.weight[k] * (kept ? 1.0 : 0.0);
    CHECK(std::isfinite(iw.weight[k]));
    CHECK(iw.weight[k] >= 0.0);
    if (!s.event && s.observed_time <= w.u) CHECK(iw.weight[k] == 0.0);
  }
  CHECK(sum / static_cast<double>(iw.subjects.size()) == Approx(1.0).epsilon(0.05));
}

TEST_CASE("breslow") {
  // lp {0, ln 2, 0}; events at 1 and 2; at-risk sums 1 + 2 + 1 = 4 then 2 + 1 = 3
  const std::vector<double> lp{0.0, std::log(2.0), 0.0}, t{1, 2, 3};
  const std::vector<bool> e{true, true, false};
  CHECK(breslow_cumhaz(lp, t, e, 0, 0.5) == 0.0);
  CHECK(breslow_cumhaz(lp, t, e, 0, 1.5) == Approx(0.25));
  CHECK(breslow_cumhaz(lp, t, e, 0, 2) == Approx(0.25 + 1.0 / 3.0));
  CHECK(breslow_cumhaz(lp, t, e, 0, 9) == Approx(0.25 + 1.0 / 3.0));
  CHECK_THROWS_AS(breslow_cumhaz(lp, t, e, 2, 1), DomainError);

  // lp = 0: Nelson-Aalen, computed independently
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 5.0), b(0.0, 1.0);
  std::vector<double> tt(80), zero(80, 0.0);
  std::vector<bool> ee(80);
  for (std::size_t i = 0; i < tt.size(); ++i) {
    tt[i] = u(rng);
    ee[i] = b(rng) < 0.7;
  }
  double prev = 0.0;
  for (double h = 0.0; h <= 5.0; h += 0.25) {
    double na = 0.0;
    for (std::size_t i = 0; i < tt.size(); ++i) {
      if (!ee[i] || tt[i] > h) continue;
      double at_risk = 0.0;
      for (double x : tt) at_risk += x >= tt[i];
      na += 1.0 / at_risk;
    }
    const double H = breslow_cumhaz(zero, tt, ee, 0, h);
    CHECK(H == Approx(na).epsilon(1e-12));
    CHECK(H >= prev);
    prev = H;
  }
}

TEST_CASE("cox_survival") {
  CHECK(cox_survival(3.0, 0.0) == 1.0);
  CHECK(cox_survival(0.0, std::log(2.0)) == Approx(0.5));
  CHECK(cox_survival(1.0, 0.4) < cox_survival(0.5, 0.4));
}
