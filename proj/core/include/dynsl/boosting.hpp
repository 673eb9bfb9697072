#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "dynsl/landmark.hpp"
#include "dynsl/survival.hpp"

namespace dynsl {

/// Skeleton of a sub-base learner: the feature(s) a tree may split on and its
/// size limits.
struct TreeSpec {
  std::vector<std::size_t> features;  // one index, or an unordered pair
  int max_depth = 2;
  std::size_t min_split = 10;  // nodes smaller than this become leaves
  std::size_t min_bucket = 3;  // smallest admissible child
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
  std::size_t leaf_count() const;
};

/// Least-squares regression tree grown greedily on the features of `spec`.
RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const TreeSpec& spec);

/// Martingale-residual form of the negative gradient of the Cox negative
/// partial log-likelihood with respect to the predictor psi (Breslow ties).
Eigen::VectorXd cox_negative_gradient(std::span<const double> psi, std::span<const double> times,
                                      const std::vector<bool>& events);

/// -sum over events of [psi_i - log sum_{T_k >= T_i} exp(psi_k)].
double cox_negative_partial_loglik(std::span<const double> psi, std::span<const double> times,
                                   const std::vector<bool>& events);

struct BoostOptions {
  double nu = 0.025;
  int b_stop = 500;
  int max_depth_single = 2;
  int max_depth_pair = 3;
  std::size_t min_split = 10;
  std::size_t min_bucket = 3;
  bool interactions = true;  // add one candidate per unordered feature pair
  std::size_t inner_folds = 5;
};

/// Candidate sub-learners: one per feature, plus one per feature pair.
std::vector<TreeSpec> candidate_specs(std::size_t feature_count, const BoostOptions& options);

struct BoostStep {
  TreeSpec spec;
  RegressionTree tree;
};

struct BoostFit {
  std::vector<BoostStep> selected;  // one per iteration
  double nu = 0.025;
  double offset = 0.0;              // psi_0
  std::vector<double> risk_path;    // training negative log partial likelihood, b = 0..B

  std::size_t iterations() const noexcept { return selected.size(); }
  /// psi after the first `b` iterations (all when b exceeds the path length).
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, std::size_t b = static_cast<std::size_t>(-1)) const;
};

BoostFit boost(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
               const BoostOptions& options);

struct EarlyStopping {
  std::size_t b_opt = 0;
  std::vector<double> cv_risk;  // fold-averaged held-out negative log partial likelihood, b = 0..b_stop
};

/// Nested V-fold choice of the stopping iteration (ties go to the smallest b).
EarlyStopping select_b_opt(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
                           const BoostOptions& options, std::uint64_t seed);

/// Survival predictions from a boosted fit with a Breslow baseline computed
/// on the training predictor values.
std::vector<double> predict_boosted(const BoostFit& fit, const Eigen::MatrixXd& X_train, std::span<const double> times,
                                    const std::vector<bool>& events, const Eigen::MatrixXd& X_new,
                                    const PredictionWindow& window);

struct BoostedCoxModel {
  FeatureSchema schema;
  BoostFit fit;
  EarlyStopping stopping;
  StepFunction baseline_cumhaz;
};

BoostedCoxModel train_boosted_cox(const Dataset& train, double t, LandmarkStage stage, const TrajectorySpec& trajectory,
                                  const BoostOptions& options, std::uint64_t seed);

std::vector<double> predict_boosted(const BoostedCoxModel& model, const Dataset& data, std::span<const std::size_t> rows,
                                    double u);

}  // namespace dynsl
