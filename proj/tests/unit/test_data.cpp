#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/simulator.hpp"
#include "fixtures.hpp"

using namespace dynsl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dynsl_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

Dataset random_dataset(std::uint64_t seed, std::size_t n, double event_p = 0.6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(0.1, 10.0), u(0.0, 1.0);
  std::vector<fixtures::Subject> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({t(rng), u(rng) < event_p});
  return fixtures::make(s);
}

}  // namespace

TEST_CASE("load_dataset reads a two-subject toy pair of files") {
  const auto dir = scratch("toy");
  write(dir / "base.csv", "id,event_time,event,age\na,5,1,60\nb,8,0,\n");
  write(dir / "long.csv", "id,biomarker,time,value\nb,y,2,1.5\na,y,1,0.5\na,y,0,0.25\n");
  const Dataset d = load_dataset(dir / "base.csv", dir / "long.csv");
  CHECK(d.size() == 2);
  CHECK(d.biomarker_count() == 1);
  CHECK(d.covariate_names() == std::vector<std::string>{"age"});
  CHECK(std::isnan(d.subject(1).baseline[0]));
  const auto h = d.history(0, 0);
  REQUIRE(h.size() == 2);
  CHECK(h[0].time == 0.0);
  CHECK(h[1].time == 1.0);
  CHECK(d.history(0, 0, 0.5).size() == 1);
  CHECK(d.history(0, 0, 1.0).size() == 2);  // closed at the landmark
}

TEST_CASE("load_dataset errors name the problem") {
  const auto dir = scratch("errors");
  write(dir / "base.csv", "id,event_time,event\na,5,1\nb,8,0\n");
  write(dir / "late.csv", "id,biomarker,time,value\na,y,1,0\na,y,7,1\n");
  try {
    load_dataset(dir / "base.csv", dir / "late.csv");
    FAIL("expected a referential error");
  } catch (const ReferentialError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  write(dir / "nocol.csv", "id,biomarker,time\na,y,1\n");
  try {
    load_dataset(dir / "base.csv", dir / "nocol.csv");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("value") != std::string::npos);
  }
  write(dir / "text.csv", "id,biomarker,time,value\na,y,1,abc\n");
  try {
    load_dataset(dir / "base.csv", dir / "text.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  write(dir / "ghost.csv", "id,biomarker,time,value\nzz,y,1,0\n");
  CHECK_THROWS_AS(load_dataset(dir / "base.csv", dir / "ghost.csv"), ReferentialError);
}

TEST_CASE("simulated export round-trips exactly") {
  SimConfig c = SimConfig::defaults();
  SimulatedCohort cohort = gen_longitudinal(c, 11);
  cohort.truth.event_time = gen_events_landmark(cohort, c, 12);
  const CensoringOutcome cens = apply_censoring(cohort, CensoringScenario::random, c, 13);
  REQUIRE(cens.data.size() == 625);
  const auto dir = scratch("roundtrip");
  write_dataset(cens.data, dir / "b.csv", dir / "l.csv");
  const Dataset back = load_dataset(dir / "b.csv", dir / "l.csv");
  CHECK(back == cens.data);
}

TEST_CASE("risk_set") {
  const Dataset d = fixtures::times({3, 6, 9}, {true, true, false});
  CHECK(risk_set(d, 5).indices == std::vector<std::size_t>{1, 2});
  CHECK(risk_set(d, 0).size() == 3);
  CHECK(risk_set(d, 9).empty());

  const Dataset big = random_dataset(3, 625);
  for (double t : {0.0, 2.5, 4.0, 7.0}) {
    std::size_t count = 0;
    for (const auto& s : big.subjects()) count += s.observed_time > t;
    CHECK(risk_set(big, t).size() == count);
  }
  const auto r1 = risk_set(big, 2.0).indices, r2 = risk_set(big, 5.0).indices;
  CHECK(std::includes(r1.begin(), r1.end(), r2.begin(), r2.end()));
}

TEST_CASE("stratified_folds balances in-window events") {
  // 10 subjects, 4 in-window events in {1, 5}
  const Dataset d = fixtures::times({2, 3, 4, 4.5, 6, 7, 8, 9, 0.5, 3.5}, {1, 1, 1, 1, 0, 1, 0, 1, 1, 0});
  const PredictionWindow w{1, 5};
  const FoldAssignment f = stratified_folds(d, w, 2, 7);
  int per[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i)
    if (event_in_window(d.subject(i), w)) ++per[f.fold_of[i]];
  CHECK(per[0] == 2);
  CHECK(per[1] == 2);

  CHECK_THROWS_AS(stratified_folds(fixtures::times({2, 3, 4, 4.5, 4.6, 4.7, 9}, {1, 1, 1, 1, 1, 1, 0}), w, 7, 1),
                  ConfigError);
}

TEST_CASE("stratified_folds is deterministic, partitions and balances") {
  const PredictionWindow w{2, 6};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Dataset d = random_dataset(seed + 100, 100);
    const FoldAssignment a = stratified_folds(d, w, 5, seed);
    const FoldAssignment b = stratified_folds(d, w, 5, seed);
    REQUIRE(a.fold_of == b.fold_of);
    std::vector<int> events(5, 0);
    std::size_t total = 0;
    for (std::size_t v = 0; v < 5; ++v) {
      const auto held = a.held_out_rows(v), train = a.training_rows(v);
      CHECK(held.size() + train.size() == d.size());
      total += held.size();
    }
    CHECK(total == d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (event_in_window(d.subject(i), w)) ++events[a.fold_of[i]];
    const auto [lo, hi] = std::minmax_element(events.begin(), events.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("PredictionWindow validation") {
  CHECK_THROWS_AS(PredictionWindow::make(3, 3), DomainError);
  CHECK_THROWS_AS(PredictionWindow::make(-1, 3), DomainError);
  CHECK_THROWS_AS(PredictionWindow::make(1, std::numeric_limits<double>::infinity()), DomainError);
  CHECK(PredictionWindow::make(6, 9).midpoint() == 7.5);
}
