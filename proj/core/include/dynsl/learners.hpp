#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "dynsl/boosting.hpp"
#include "dynsl/landmark.hpp"
#include "dynsl/simulator.hpp"

namespace dynsl {

enum class LearnerKind { one_stage_cox, two_stage_cox, one_stage_boost, two_stage_boost, oracle_joint, custom, kaplan_meier };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

/// Declarative base learner. Hyperparameters by kind:
///   *_boost:      nu, b_stop, inner_folds, interactions, max_depth_single, max_depth_pair
///   oracle_joint: longitudinal {beta, D, sigma2}, hazard {rate, shape, gamma, alpha}
///   custom:       value (constant survival prediction)
struct LearnerSpec {
  std::string id;
  LearnerKind kind = LearnerKind::one_stage_cox;
  TrajectorySpec trajectory;
  nlohmann::json hyperparameters = nlohmann::json::object();

  void validate() const;
};

void to_json(nlohmann::json& j, const LearnerSpec& s);
void from_json(const nlohmann::json& j, LearnerSpec& s);

/// Oracle spec carrying the generating parameters of a simulation.
LearnerSpec oracle_spec(const std::string& id, const SimConfig& config);

/// A trained learner. Predictions are survival probabilities to `u` for the
/// requested rows, conditional on being event-free at the landmark.
class FittedLearner {
 public:
  virtual ~FittedLearner() = default;

  virtual std::vector<double> predict(const Dataset& data, std::span<const std::size_t> rows, double u) const = 0;
  virtual nlohmann::json to_json() const = 0;

  const std::string& id() const noexcept { return id_; }
  LearnerKind kind() const noexcept { return kind_; }
  double landmark() const noexcept { return landmark_; }

 protected:
  FittedLearner(std::string id, LearnerKind kind, double landmark) : id_(std::move(id)), kind_(kind), landmark_(landmark) {}
  nlohmann::json header() const;

 private:
  std::string id_;
  LearnerKind kind_;
  double landmark_;
};

/// Trains `spec` on `train` at landmark t. `seed` drives any internal
/// randomness (inner folds of boosting).
std::unique_ptr<FittedLearner> train_learner(const LearnerSpec& spec, const Dataset& train, double t,
                                             std::uint64_t seed);

/// Reference model without covariates: Kaplan-Meier on the training risk set.
std::unique_ptr<FittedLearner> train_km_reference(const Dataset& train, double t, const std::string& id = "KM");

std::unique_ptr<FittedLearner> learner_from_json(const nlohmann::json& j);

// Serialization of fitted components, exposed for tests.
nlohmann::json step_function_to_json(const StepFunction& f);
StepFunction step_function_from_json(const nlohmann::json& j);
nlohmann::json lmm_fit_to_json(const LmmFit& f);
LmmFit lmm_fit_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const FeatureSchema& s);
FeatureSchema schema_from_json(const nlohmann::json& j);

}  // namespace dynsl
