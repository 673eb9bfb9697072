#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynsl/simulator.hpp"
#include "dynsl/superlearner.hpp"

namespace dynsl {

/// Library used by the simulation study: one-stage and two-stage landmark Cox
/// plus the known-parameter joint oracle.
std::vector<LearnerSpec> study_library(const SimConfig& config);

struct StudyRow {
  std::size_t replicate = 0;
  EventProcess generator = EventProcess::landmark;
  CensoringScenario scenario = CensoringScenario::none;
  MetricKind loss = MetricKind::brier;
  std::string model;     // learner id, "eSL", "dSL" or "OM"
  std::string selected;  // learner behind dSL / OM, empty otherwise
  double train_value = 0.0;  // cross-validated
  double test_value = 0.0;
  std::vector<double> weights;  // over the study library ids
  bool converged = true;
  double censor_rate = 0.0;  // realized in-window censoring fraction of the full cohort
};

struct StudyNote {
  std::size_t replicate = 0;
  CensoringScenario scenario = CensoringScenario::none;
  std::string message;
};

struct StudyLog {
  std::vector<StudyNote> failures;  // replicate/scenario skipped
  std::vector<StudyNote> warnings;  // learners dropped during cross-validation
};

struct StudyResult {
  std::vector<std::string> learner_ids;
  std::vector<StudyRow> rows;
  StudyLog log;
};

/// Generator of replicate r: the joint process for a `joint_fraction` share
/// of replicates, spread evenly.
EventProcess replicate_generator(const SimConfig& config, std::size_t replicate);

/// Uncensored cohort of replicate r and its train/test split (ascending rows).
struct ReplicateData {
  EventProcess process = EventProcess::landmark;
  SimulatedCohort cohort;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

ReplicateData simulate_replicate(const SimConfig& config, std::size_t replicate);
CensoringOutcome censor_replicate(const SimConfig& config, std::size_t replicate, const ReplicateData& data,
                                  CensoringScenario scenario);

/// Runs one replicate for every configured scenario. Scenarios share the
/// uncensored cohort and the train/test split. Without a log, errors propagate.
std::vector<StudyRow> run_replicate(const SimConfig& config, std::size_t replicate, StudyLog* log = nullptr);

/// All replicates, in parallel over `config.threads`; rows ordered by replicate.
StudyResult run_study(const SimConfig& config);

void write_study_rows(const StudyResult& result, std::ostream& out);
void write_study(const StudyResult& result, const SimConfig& config, const std::filesystem::path& directory);

}  // namespace dynsl
