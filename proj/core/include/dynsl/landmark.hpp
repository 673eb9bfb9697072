#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "dynsl/data.hpp"
#include "dynsl/mixed_model.hpp"
#include "dynsl/survival.hpp"

namespace dynsl {

enum class LandmarkStage { one_stage, two_stage };

/// Everything learned from training data that is needed to build landmark
/// features for any subject: imputation medians and, for two-stage
/// landmarking, one mixed model per biomarker.
struct FeatureSchema {
  LandmarkStage stage = LandmarkStage::one_stage;
  double landmark = 0.0;
  std::vector<std::string> names;
  std::vector<double> covariate_medians;  // fills missing baseline values
  std::vector<double> biomarker_medians;  // one-stage: fills subjects without history
  std::vector<LmmFit> lmm_fits;           // two-stage only
};

struct LandmarkFeatures {
  Eigen::MatrixXd design;             // one row per subject in `subjects`
  std::vector<std::string> feature_names;
  std::vector<std::size_t> subjects;  // dataset rows, normally the risk set at `landmark`
  double landmark = 0.0;
  LandmarkStage stage = LandmarkStage::one_stage;
};

/// Last value carried forward: per biomarker the last value at or before t
/// followed by a missing-history indicator. Medians come from the risk set.
FeatureSchema learn_lvcf_schema(const Dataset& train, double t);

/// Mixed models fitted per biomarker on all training measurements with
/// time <= t; features are the predicted latent values at t.
FeatureSchema learn_two_stage_schema(const Dataset& train, double t, const TrajectorySpec& trajectory,
                                     const LmmOptions& lmm = {});

LandmarkFeatures build_features(const FeatureSchema& schema, const Dataset& data, std::span<const std::size_t> rows);

/// Schema learned on `data` and applied to its risk set at t.
LandmarkFeatures lvcf_features(const Dataset& data, double t);
LandmarkFeatures two_stage_features(const Dataset& data, double t, const TrajectorySpec& trajectory);

struct CoxOptions {
  int max_iterations = 50;
  int max_halvings = 20;
  double score_tolerance = 1e-6;
};

struct CoxFit {
  Eigen::VectorXd coefficients;   // zero for dropped constant columns
  Eigen::MatrixXd information;    // observed information on the original scale (kept columns)
  std::vector<std::size_t> kept;  // non-constant columns
  double log_partial_likelihood = 0.0;
  double null_log_partial_likelihood = 0.0;
  double max_abs_score = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loglik_path;  // log partial likelihood after every accepted step
  double landmark = 0.0;
};

/// Breslow-tie partial log-likelihood, with its gradient and information when
/// requested.
double cox_partial_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, std::span<const double> times,
                          const std::vector<bool>& events, Eigen::VectorXd* gradient = nullptr,
                          Eigen::MatrixXd* information = nullptr);

/// Newton-Raphson with step halving on the Cox partial likelihood.
CoxFit fit_cox(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
               const CoxOptions& options = {}, const std::vector<std::string>& names = {});

CoxFit fit_cox(const LandmarkFeatures& features, const Dataset& data, const CoxOptions& options = {});

/// Trained landmark Cox model ready for prediction.
struct LandmarkCoxModel {
  FeatureSchema schema;
  CoxFit fit;
  StepFunction baseline_cumhaz;  // Breslow on the training risk set
  double last_event_time = 0.0;
};

LandmarkCoxModel train_landmark_cox(const Dataset& train, double t, LandmarkStage stage,
                                    const TrajectorySpec& trajectory = {});

/// exp(-H0(u) exp(lp_j)) for every requested row of `data`.
std::vector<double> predict_landmark(const LandmarkCoxModel& model, const Dataset& data,
                                     std::span<const std::size_t> rows, double u);

}  // namespace dynsl
