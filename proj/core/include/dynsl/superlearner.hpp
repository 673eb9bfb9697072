#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dynsl/learners.hpp"
#include "dynsl/metrics.hpp"

namespace dynsl {

/// Cross-validated survival predictions: one row per risk-set subject (in
/// ascending dataset order), one column per learner.
struct PredictionMatrix {
  std::vector<std::size_t> rows;
  std::vector<std::string> subject_ids;
  std::vector<std::string> learner_ids;
  Eigen::MatrixXd values;
  double horizon = 0.0;
  std::vector<std::size_t> fold_of;

  std::size_t learner_count() const noexcept { return learner_ids.size(); }
  std::vector<double> column(std::size_t k) const;
  /// Z * omega.
  std::vector<double> mix(std::span<const double> omega) const;
  /// Same matrix restricted to the given columns.
  PredictionMatrix select(const std::vector<std::size_t>& columns) const;
};

struct CvPredictions {
  PredictionMatrix end;  // horizon u
  PredictionMatrix mid;  // horizon (t + u) / 2
  std::vector<std::string> dropped;   // learners that failed on some fold
  std::vector<std::string> warnings;  // one message per dropped learner
};

/// Trains every learner on each training split and predicts the held-out
/// risk-set subjects at u and at the window midpoint. A learner that fails on
/// any fold is removed from the library.
CvPredictions cv_predictions(const std::vector<LearnerSpec>& library, const Dataset& data,
                             const PredictionWindow& window, const FoldAssignment& folds, std::uint64_t seed,
                             std::size_t threads = 1);

/// IPCW weights and loss evaluation for predictions over R(t).
class LossEvaluator {
 public:
  LossEvaluator(const Dataset& data, const PredictionWindow& window, BrierPairing pairing = BrierPairing::conventional,
                AucOrientation orientation = AucOrientation::conventional);

  /// `mid` is only used for IBS.
  double operator()(MetricKind kind, std::span<const double> end, std::span<const double> mid = {}) const;

  const IpcwWeights& end_weights() const noexcept { return end_; }
  const IpcwWeights& mid_weights() const noexcept { return mid_; }
  const Dataset& data() const noexcept { return *data_; }
  BrierPairing pairing() const noexcept { return pairing_; }
  AucOrientation orientation() const noexcept { return orientation_; }

 private:
  const Dataset* data_;
  IpcwWeights end_, mid_;
  BrierPairing pairing_;
  AucOrientation orientation_;
};

/// Loss of every single column.
std::vector<double> column_losses(const LossEvaluator& loss, MetricKind kind, const PredictionMatrix& end,
                                  const PredictionMatrix& mid);

struct EnsembleWeights {
  std::vector<double> omega;
  MetricKind loss = MetricKind::brier;
  double achieved_loss = 0.0;
  bool converged = false;
  std::size_t n_starts_used = 0;
  int iterations = 0;
};

/// Projected gradient descent over the simplex for BS or IBS (one omega for
/// both IBS horizons), started from uniform weights.
EnsembleWeights optimize_weights_convex(const PredictionMatrix& end, const PredictionMatrix& mid,
                                        const LossEvaluator& loss, MetricKind kind);

/// Multi-start Nelder-Mead on softmax logits maximizing tv-AUC. Falls back to
/// the best single learner when no start reaches it.
EnsembleWeights optimize_weights_auc(const PredictionMatrix& end, const LossEvaluator& loss, std::size_t n_starts,
                                     std::uint64_t seed);

/// Index of the best column (first on ties).
std::size_t discrete_select(const PredictionMatrix& end, const PredictionMatrix& mid, const LossEvaluator& loss,
                            MetricKind kind);

struct SuperLearnerConfig {
  std::vector<LearnerSpec> library;
  std::size_t folds = 5;
  std::vector<MetricKind> losses{MetricKind::brier, MetricKind::integrated_brier, MetricKind::tv_auc};
  std::size_t auc_starts = 10;
  std::uint64_t seed = 1;
  BrierPairing pairing = BrierPairing::conventional;
  AucOrientation orientation = AucOrientation::conventional;
  std::size_t threads = 1;
};

struct LossResult {
  MetricKind kind = MetricKind::brier;
  EnsembleWeights weights;          // over `SuperLearnerFit::learner_ids`
  std::size_t discrete = 0;         // dSL column
  std::vector<double> cv_losses;    // per learner
  double cv_ensemble_loss = 0.0;
};

struct SuperLearnerFit {
  PredictionWindow window;
  std::vector<std::string> learner_ids;  // surviving library, in order
  std::vector<std::string> dropped;
  std::vector<std::string> warnings;
  FoldAssignment folds;
  std::vector<LossResult> losses;
  std::vector<std::unique_ptr<FittedLearner>> fitted;  // full-data refits, aligned with learner_ids
  std::unique_ptr<FittedLearner> km_reference;

  const LossResult& result(MetricKind kind) const;
  /// Per-learner predictions for the given rows at horizon u: rows x learners.
  Eigen::MatrixXd learner_predictions(const Dataset& data, std::span<const std::size_t> rows, double u) const;
  /// Ensemble prediction sum_k omega_k pi_k for the loss's weights.
  std::vector<double> predict(const Dataset& data, std::span<const std::size_t> rows, double u, MetricKind kind) const;

  nlohmann::json to_json() const;
  static SuperLearnerFit from_json(const nlohmann::json& j);
};

/// Algorithm: folds, CV predictions, weights and dSL per loss, full refits.
SuperLearnerFit fit_super_learner(const Dataset& train, const PredictionWindow& window, const SuperLearnerConfig& config);

/// Refits each learner on `train` and returns sum_k omega_k pi_k(u | t) for
/// every subject of `newdata` at risk at t. Dropped learners must carry zero weight.
std::vector<double> fit_full_and_predict(const std::vector<LearnerSpec>& library, const EnsembleWeights& weights,
                                         const Dataset& train, const Dataset& newdata, const PredictionWindow& window,
                                         std::uint64_t seed);

}  // namespace dynsl
