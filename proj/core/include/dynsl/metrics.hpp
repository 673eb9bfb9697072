#pragma once

#include <span>
#include <string>

#include "dynsl/data.hpp"
#include "dynsl/survival.hpp"

namespace dynsl {

enum class MetricKind { brier, integrated_brier, tv_auc };

std::string to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& name);

/// Lower is better for the Brier scores, higher for tv-AUC.
inline bool lower_is_better(MetricKind kind) noexcept { return kind != MetricKind::tv_auc; }

/// Which outcome the survival prediction is compared with in the Brier score.
///  - verbatim:     {1(T_i <= u) - pi_i}^2, the event indicator against the survival prediction.
///  - conventional: {1(T_i > u) - pi_i}^2, the survival indicator against the survival prediction.
enum class BrierPairing { verbatim, conventional };

/// Which ordering of an (event-haver i, comparator j) pair tv-AUC counts.
///  - verbatim:     pi_i > pi_j (event-haver predicted to survive longer).
///  - conventional: pi_i < pi_j (event-haver predicted to survive shorter).
/// Ties never count. Under continuous predictions conventional = 1 - verbatim.
enum class AucOrientation { verbatim, conventional };

struct MetricValue {
  double value = 0.0;
  MetricKind kind = MetricKind::brier;
  PredictionWindow window;
  std::size_t n_effective = 0;  // subjects with nonzero weight
};

/// IPCW Brier score at the horizon of `w.window`. `preds` is aligned with
/// `w.subjects` (the risk set). Divides by the full risk-set size.
MetricValue brier(std::span<const double> preds, const Dataset& data, const IpcwWeights& w,
                  BrierPairing pairing = BrierPairing::verbatim);

/// Two-point Simpson approximation (2/3) BS(mid) + (1/6) BS(u). `w_mid` must be
/// computed for the window {t, (t+u)/2} and `w_end` for {t, u}.
MetricValue integrated_brier(std::span<const double> preds_mid, std::span<const double> preds_end,
                             const Dataset& data, const IpcwWeights& w_mid, const IpcwWeights& w_end,
                             BrierPairing pairing = BrierPairing::verbatim);

/// Simpson combination of two already computed Brier scores.
double simpson_ibs(double bs_mid, double bs_end) noexcept;

/// IPCW time-varying AUC. Throws EstimabilityError when no weighted
/// case/comparator pair exists.
MetricValue tv_auc(std::span<const double> preds, const Dataset& data, const IpcwWeights& w,
                   AucOrientation orientation = AucOrientation::verbatim);

}  // namespace dynsl
