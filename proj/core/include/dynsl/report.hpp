#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dynsl/study.hpp"
#include "dynsl/superlearner.hpp"

namespace dynsl {

/// Weight table: rows are learners, columns are losses. `dsl` marks the
/// discrete choice per loss.
struct WeightTable {
  PredictionWindow window;
  std::vector<std::string> learners;
  std::vector<MetricKind> losses;
  std::vector<std::vector<double>> omega;  // [learner][loss]
  std::vector<std::vector<bool>> dsl;      // [learner][loss]
  std::vector<bool> converged;             // per loss
  std::vector<std::string> dropped;
};

WeightTable weight_table(const SuperLearnerFit& fit);
void write_text(const WeightTable& table, std::ostream& out);
void write_csv(const WeightTable& table, std::ostream& out);

/// Held-out metrics of every learner, the eSL and dSL for each loss, and the
/// covariate-free Kaplan-Meier reference.
struct MetricTable {
  PredictionWindow window;
  std::vector<std::string> models;
  std::vector<MetricKind> losses;
  std::vector<std::vector<double>> value;  // [model][loss]
  std::size_t at_risk = 0;
};

MetricTable evaluate_fit(const SuperLearnerFit& fit, const Dataset& test, BrierPairing pairing = BrierPairing::conventional,
                         AucOrientation orientation = AucOrientation::conventional);
void write_text(const MetricTable& table, std::ostream& out);
void write_csv(const MetricTable& table, std::ostream& out);

/// Per (scenario, loss, model): mean test and train value; per (scenario,
/// loss): mean eSL weights and the tv-AUC fallback fraction.
struct StudySummaryRow {
  CensoringScenario scenario = CensoringScenario::none;
  MetricKind loss = MetricKind::brier;
  std::string model;
  std::size_t count = 0;
  double mean_train = 0.0;
  double mean_test = 0.0;
  std::vector<double> mean_weights;
  double converged_fraction = 1.0;
};

std::vector<StudySummaryRow> summarize_study(const StudyResult& result);
void write_text(const std::vector<StudySummaryRow>& summary, const std::vector<std::string>& learner_ids,
                std::ostream& out);

/// Reads a study file written by write_study_rows.
StudyResult read_study_rows(std::istream& in);

}  // namespace dynsl
