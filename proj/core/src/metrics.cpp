#include "dynsl/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "dynsl/error.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "metrics";

void check_aligned(std::span<const double> preds, const IpcwWeights& w) {
  if (preds.size() != w.subjects.size() || w.weight.size() != w.subjects.size()) {
    throw DomainError(kModule, "predictions (" + std::to_string(preds.size()) +
                                   ") are not aligned with the risk set (" + std::to_string(w.subjects.size()) + ")");
  }
}

}  // namespace

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::brier:
      return "BS";
    case MetricKind::integrated_brier:
      return "IBS";
    case MetricKind::tv_auc:
      return "tvAUC";
  }
  return "?";
}

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "BS" || name == "bs" || name == "brier") return MetricKind::brier;
  if (name == "IBS" || name == "ibs" || name == "integrated_brier") return MetricKind::integrated_brier;
  if (name == "tvAUC" || name == "tv_auc" || name == "auc" || name == "tv-AUC") return MetricKind::tv_auc;
  throw DomainError(kModule, "unknown loss '" + name + "' (expected BS, IBS or tvAUC)");
}

MetricValue brier(std::span<const double> preds, const Dataset& data, const IpcwWeights& w, BrierPairing pairing) {
  check_aligned(preds, w);
  MetricValue out;
  out.kind = MetricKind::brier;
  out.window = w.window;
  if (w.subjects.empty()) throw EstimabilityError(kModule, "Brier score over an empty risk set");
  double sum = 0.0;
  for (std::size_t k = 0; k < w.subjects.size(); ++k) {
    if (w.weight[k] == 0.0) continue;
    const bool died = data.subject(w.subjects[k]).observed_time <= w.window.u;
    const double outcome = pairing == BrierPairing::verbatim ? (died ? 1.0 : 0.0) : (died ? 0.0 : 1.0);
    const double r = outcome - preds[k];
    sum += w.weight[k] * r * r;
    ++out.n_effective;
  }
  out.value = sum / static_cast<double>(w.subjects.size());
  return out;
}

double simpson_ibs(double bs_mid, double bs_end) noexcept { return (2.0 / 3.0) * bs_mid + (1.0 / 6.0) * bs_end; }

MetricValue integrated_brier(std::span<const double> preds_mid, std::span<const double> preds_end,
                             const Dataset& data, const IpcwWeights& w_mid, const IpcwWeights& w_end,
                             BrierPairing pairing) {
  if (w_mid.window.t != w_end.window.t || w_mid.window.u != w_end.window.midpoint()) {
    throw DomainError(kModule, "IBS: midpoint weights must use the window {t, (t+u)/2}");
  }
  const MetricValue mid = brier(preds_mid, data, w_mid, pairing);
  const MetricValue end = brier(preds_end, data, w_end, pairing);
  MetricValue out;
  out.kind = MetricKind::integrated_brier;
  out.window = w_end.window;
  out.value = simpson_ibs(mid.value, end.value);
  out.n_effective = end.n_effective;
  return out;
}

MetricValue tv_auc(std::span<const double> preds, const Dataset& data, const IpcwWeights& w,
                   AucOrientation orientation) {
  check_aligned(preds, w);
  MetricValue out;
  out.kind = MetricKind::tv_auc;
  out.window = w.window;

  std::vector<std::pair<double, double>> controls;  // (pred, weight)
  std::vector<std::pair<double, double>> cases;
  for (std::size_t k = 0; k < w.subjects.size(); ++k) {
    if (w.weight[k] == 0.0) continue;
    ++out.n_effective;
    if (event_in_window(data.subject(w.subjects[k]), w.window)) {
      cases.emplace_back(preds[k], w.weight[k]);
    } else {
      controls.emplace_back(preds[k], w.weight[k]);
    }
  }
  std::sort(controls.begin(), controls.end());
  std::vector<double> prefix(controls.size() + 1, 0.0);
  for (std::size_t k = 0; k < controls.size(); ++k) prefix[k + 1] = prefix[k] + controls[k].second;
  const double control_total = prefix.back();

  double numerator = 0.0;
  double denominator = 0.0;
  for (const auto& [pred, weight] : cases) {
    double concordant = 0.0;
    if (orientation == AucOrientation::verbatim) {
      // controls with pred strictly below the case
      auto it = std::lower_bound(controls.begin(), controls.end(), pred,
                                 [](const std::pair<double, double>& c, double p) { return c.first < p; });
      concordant = prefix[static_cast<std::size_t>(it - controls.begin())];
    } else {
      auto it = std::upper_bound(controls.begin(), controls.end(), pred,
                                 [](double p, const std::pair<double, double>& c) { return p < c.first; });
      concordant = control_total - prefix[static_cast<std::size_t>(it - controls.begin())];
    }
    numerator += weight * concordant;
    denominator += weight * control_total;
  }
  if (!(denominator > 0.0)) {
    throw EstimabilityError(kModule, "tv-AUC has no weighted case/comparator pairs in the window");
  }
  out.value = numerator / denominator;
  return out;
}

}  // namespace dynsl
