#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "dynsl/data.hpp"
#include "dynsl/metrics.hpp"

namespace dynsl {

enum class CensoringScenario { none, random, informative };
enum class EventProcess { landmark, joint };

/// Independent stream seed derived from a master seed and a stream index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

std::string to_string(CensoringScenario s);
std::string to_string(EventProcess p);
CensoringScenario scenario_from_string(const std::string& name);

struct CovariateLaw {
  enum class Family { normal, bernoulli };
  std::string name;
  Family family = Family::normal;
  double a = 0.0;  // normal: mean; bernoulli: success probability
  double b = 1.0;  // normal: standard deviation
};

/// Linear trajectory eta(s) = beta0 + beta1 s + b0 + b1 s with b ~ N(0, D).
struct LongitudinalTruth {
  Eigen::Vector2d beta{0.0, 0.0};
  Eigen::Matrix2d D = Eigen::Matrix2d::Identity();
  double sigma2 = 1.0;
};

/// h(s) = rate * shape * s^(shape-1) * exp(gamma' w + alpha * x(s)), where x is
/// the last observed value (landmark process) or the latent trajectory (joint).
struct HazardTruth {
  double rate = 0.1;
  double shape = 1.0;
  std::vector<double> gamma;
  double alpha = 0.0;

  double baseline(double s) const noexcept;
  /// Integral of the baseline hazard from 0 to s.
  double baseline_cumulative(double s) const noexcept;
};

struct MeasurementLaw {
  double span = 10.0;        // follow-up visits are uniform on (0, span)
  std::size_t visits = 8;    // follow-up visits per subject
  bool baseline_visit = true;  // an extra visit at time 0
};

struct InformativeCensoringLaw {
  double value_coefficient = 1.0;             // on the current observed biomarker value
  std::vector<double> covariate_coefficients; // on the baseline covariates
};

struct SimConfig {
  std::size_t n = 625;
  std::size_t test_n = 125;
  std::size_t replications = 100;
  std::size_t folds = 5;
  std::uint64_t seed = 20240601;

  LongitudinalTruth longitudinal;
  std::vector<CovariateLaw> covariates;
  HazardTruth landmark_hazard;
  HazardTruth joint_hazard;
  MeasurementLaw measurement;
  InformativeCensoringLaw informative;

  std::vector<CensoringScenario> scenarios{CensoringScenario::none, CensoringScenario::random,
                                           CensoringScenario::informative};
  double target_censor_rate = 0.3;  // in-window censoring fraction among R(t), scenarios 2 and 3
  PredictionWindow window{4.0, 7.0};
  double admin_horizon = 100.0;
  double joint_fraction = 0.5;  // share of replicates generated by the joint process

  std::vector<MetricKind> losses{MetricKind::brier, MetricKind::integrated_brier, MetricKind::tv_auc};
  std::size_t auc_starts = 10;
  BrierPairing pairing = BrierPairing::conventional;
  AucOrientation orientation = AucOrientation::conventional;
  std::size_t threads = 1;

  /// Documented defaults: one biomarker with a linear trend, two baseline
  /// covariates, identical hazard laws for both event processes.
  static SimConfig defaults();
  /// 20 replicates; everything else as defaults().
  static SimConfig desk_profile();

  void validate() const;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

struct SimTruth {
  EventProcess process = EventProcess::landmark;
  std::vector<Eigen::Vector2d> random_effects;
  std::vector<double> event_time;   // T*; +inf when the hazard never accumulates enough mass
  std::vector<double> censor_time;  // C; +inf when uncensored
};

/// Covariates, visit schedule and noisy biomarker values before any event or
/// censoring truncates them.
struct SimulatedCohort {
  std::vector<std::vector<double>> covariates;
  std::vector<std::vector<double>> visit_times;
  std::vector<std::vector<double>> values;
  SimTruth truth;
};

SimulatedCohort gen_longitudinal(const SimConfig& config, std::uint64_t seed);

/// Interval-wise generation: constant covariate effect between consecutive
/// visits driven by the last observed value; a fresh draw at every visit.
std::vector<double> gen_events_landmark(const SimulatedCohort& cohort, const SimConfig& config, std::uint64_t seed);

/// Inverse transform sampling of the joint-model hazard: solve H_i(T) = -log U
/// with adaptive Simpson quadrature and bisection.
std::vector<double> gen_events_joint(const SimulatedCohort& cohort, const SimConfig& config, std::uint64_t seed);

/// Cumulative joint-model hazard of one subject on [from, to].
double joint_cumulative_hazard(const SimConfig& config, const std::vector<double>& covariates,
                               const Eigen::Vector2d& random_effects, double from, double to);

struct CensoringOutcome {
  Dataset data;
  std::vector<double> censor_time;
  double realized_rate = 0.0;  // in-window censored / at risk at t
  double calibrated_parameter = 0.0;  // c_max (random) or logistic intercept (informative)
};

/// Applies the scenario to a cohort whose truth.event_time is filled in.
CensoringOutcome apply_censoring(const SimulatedCohort& cohort, CensoringScenario scenario, const SimConfig& config,
                                 std::uint64_t seed);

/// Builds the observed dataset for given event and censoring times.
Dataset observed_dataset(const SimulatedCohort& cohort, const std::vector<double>& censor_time,
                         const SimConfig& config);

/// In-window censoring fraction of a dataset: censored in (t, u] over |R(t)|.
double in_window_censoring_rate(const Dataset& data, const PredictionWindow& window);

/// Known-parameter joint-model prediction: posterior mean random effects from
/// the history up to t, then exp(-integral of the hazard over (t, u]).
double oracle_joint_predict(const LongitudinalTruth& longitudinal, const HazardTruth& hazard,
                            const std::vector<double>& covariates, std::span<const double> times,
                            std::span<const double> values, const PredictionWindow& window);

}  // namespace dynsl
