#include "dynsl/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynsl/error.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "survival_estimators";

std::vector<std::size_t> order_by_time(std::span<const double> times) {
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return order;
}

}  // namespace

StepFunction::StepFunction(double initial, std::vector<double> jump_times, std::vector<double> values)
    : initial_(initial), jump_times_(std::move(jump_times)), values_(std::move(values)) {
  if (jump_times_.size() != values_.size()) throw DomainError(kModule, "step function size mismatch");
  for (std::size_t k = 1; k < jump_times_.size(); ++k) {
    if (!(jump_times_[k - 1] < jump_times_[k])) {
      throw DomainError(kModule, "step function jump times must be strictly increasing");
    }
  }
}

double StepFunction::operator()(double s) const noexcept {
  auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), s);
  if (it == jump_times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
}

double StepFunction::left_limit(double s) const noexcept {
  auto it = std::lower_bound(jump_times_.begin(), jump_times_.end(), s);
  if (it == jump_times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
}

StepFunction kaplan_meier(std::span<const double> times, const std::vector<bool>& events) {
  if (times.empty()) throw DomainError(kModule, "Kaplan-Meier needs at least one observation");
  if (times.size() != events.size()) throw DomainError(kModule, "Kaplan-Meier: times and events differ in length");
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError(kModule, "Kaplan-Meier: times must be finite and >= 0");
  }

  const auto order = order_by_time(times);
  std::vector<double> jumps;
  std::vector<double> values;
  double surv = 1.0;
  std::size_t at_risk = times.size();
  std::size_t k = 0;
  while (k < order.size()) {
    const double s = times[order[k]];
    std::size_t d = 0;
    std::size_t tied = 0;
    while (k < order.size() && times[order[k]] == s) {
      if (events[order[k]]) ++d;
      ++tied;
      ++k;
    }
    if (d > 0) {
      surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      jumps.push_back(s);
      values.push_back(surv);
    }
    at_risk -= tied;
  }
  return StepFunction(1.0, std::move(jumps), std::move(values));
}

StepFunction censoring_survival(const Dataset& data, double t) {
  const RiskSet rs = risk_set(data, t);
  if (rs.empty()) {
    throw DomainError(kModule, "censoring distribution: risk set at " + format_number(t) + " is empty");
  }
  std::vector<double> times;
  std::vector<bool> censored;
  times.reserve(rs.size());
  censored.reserve(rs.size());
  for (std::size_t i : rs.indices) {
    times.push_back(data.subject(i).observed_time);
    censored.push_back(!data.subject(i).event);
  }
  return kaplan_meier(times, censored);
}

IpcwWeights ipcw(const Dataset& data, const PredictionWindow& window) {
  const StepFunction g = censoring_survival(data, window.t);
  IpcwWeights w;
  w.window = window;
  w.subjects = risk_set(data, window.t).indices;
  w.weight.reserve(w.subjects.size());
  const double g_u = g(window.u);
  for (std::size_t i : w.subjects) {
    const auto& s = data.subject(i);
    double weight = 0.0;
    if (s.observed_time > window.u) {
      if (!(g_u > 0.0)) {
        throw EstimabilityError(kModule, "G(u|t) is 0 at u=" + format_number(window.u) + "; subject '" + s.id +
                                             "' needs a weight");
      }
      weight = 1.0 / g_u;
    } else if (s.event) {
      const double g_i = g.left_limit(s.observed_time);
      if (!(g_i > 0.0)) {
        throw EstimabilityError(kModule, "G(T-|t) is 0 for subject '" + s.id + "' at time " +
                                             format_number(s.observed_time));
      }
      weight = 1.0 / g_i;
    }
    w.weight.push_back(weight);
  }
  return w;
}

StepFunction breslow_step(std::span<const double> linear_predictors, std::span<const double> times,
                          const std::vector<bool>& events, double landmark) {
  const std::size_t n = times.size();
  if (linear_predictors.size() != n || events.size() != n) {
    throw DomainError(kModule, "Breslow: inputs are not aligned");
  }
  const auto order = order_by_time(times);
  const double shift = n == 0 ? 0.0 : *std::max_element(linear_predictors.begin(), linear_predictors.end());

  // suffix sums of exp(lp) over time-sorted subjects: at-risk denominators
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + std::exp(linear_predictors[order[k]] - shift);

  std::vector<double> jumps;
  std::vector<double> values;
  double cumhaz = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double s = times[order[k]];
    const double denom = suffix[k];
    std::size_t d = 0;
    while (k < n && times[order[k]] == s) {
      if (events[order[k]]) ++d;
      ++k;
    }
    if (d > 0 && s > landmark) {
      cumhaz += static_cast<double>(d) / (denom * std::exp(shift));
      jumps.push_back(s);
      values.push_back(cumhaz);
    }
  }
  return StepFunction(0.0, std::move(jumps), std::move(values));
}

double breslow_cumhaz(std::span<const double> linear_predictors, std::span<const double> times,
                      const std::vector<bool>& events, double landmark, double u) {
  if (u < landmark) throw DomainError(kModule, "Breslow: horizon precedes the landmark");
  return breslow_step(linear_predictors, times, events, landmark)(u);
}

double cox_survival(double linear_predictor, double cumulative_hazard) noexcept {
  return std::exp(-cumulative_hazard * std::exp(linear_predictor));
}

}  // namespace dynsl
