#pragma once

#include <span>
#include <vector>

#include "dynsl/data.hpp"

namespace dynsl {

/// Right-continuous step function: `initial` before the first jump, then the
/// value attached to the last jump time <= s.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(double initial, std::vector<double> jump_times, std::vector<double> values);

  double operator()(double s) const noexcept;
  /// Limit from the left: value of the last jump strictly before s.
  double left_limit(double s) const noexcept;

  double initial() const noexcept { return initial_; }
  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  double initial_ = 1.0;
  std::vector<double> jump_times_;
  std::vector<double> values_;
};

/// Product-limit estimator. Tied events at one time are aggregated; censorings
/// tied with events stay in the risk set for those events.
StepFunction kaplan_meier(std::span<const double> times, const std::vector<bool>& events);

/// Reverse Kaplan-Meier of the censoring distribution, fitted on R(t) only so
/// that G(t | t) = 1.
StepFunction censoring_survival(const Dataset& data, double t);

struct IpcwWeights {
  PredictionWindow window;
  std::vector<std::size_t> subjects;  // the risk set R(t), ascending
  std::vector<double> weight;         // aligned with `subjects`
};

/// Inverse probability of censoring weights for every subject at risk at t.
/// In-window event-havers get 1/G(T_i- | t), subjects past u get 1/G(u | t),
/// censored-in-window subjects get 0.
IpcwWeights ipcw(const Dataset& data, const PredictionWindow& window);

/// Breslow cumulative baseline hazard at `u` for a Cox fit on the risk set at
/// `landmark`. Denominators sum over subjects still at risk at each event time.
double breslow_cumhaz(std::span<const double> linear_predictors, std::span<const double> times,
                      const std::vector<bool>& events, double landmark, double u);

/// Full Breslow step function (jumps at distinct event times > landmark).
StepFunction breslow_step(std::span<const double> linear_predictors, std::span<const double> times,
                          const std::vector<bool>& events, double landmark);

/// exp(-H0(u) * exp(lp)).
double cox_survival(double linear_predictor, double cumulative_hazard) noexcept;

}  // namespace dynsl
