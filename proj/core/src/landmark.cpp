#include "dynsl/landmark.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynsl/error.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "landmark_learners";

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> covariate_medians(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<double> out;
  for (std::size_t c = 0; c < data.covariate_count(); ++c) {
    std::vector<double> vals;
    for (std::size_t i : rows) {
      const double x = data.subject(i).baseline[c];
      if (!std::isnan(x)) vals.push_back(x);
    }
    out.push_back(median(std::move(vals)));
  }
  return out;
}

}  // namespace

FeatureSchema learn_lvcf_schema(const Dataset& train, double t) {
  const RiskSet rs = risk_set(train, t);
  if (rs.empty()) throw DomainError(kModule, "risk set at landmark " + format_number(t) + " is empty");
  FeatureSchema schema;
  schema.stage = LandmarkStage::one_stage;
  schema.landmark = t;
  schema.names = train.covariate_names();
  schema.covariate_medians = covariate_medians(train, rs.indices);
  for (std::size_t m = 0; m < train.biomarker_count(); ++m) {
    std::vector<double> last;
    for (std::size_t i : rs.indices) {
      const auto hist = train.history(i, m, t);
      if (!hist.empty()) last.push_back(hist.back().value);
    }
    schema.biomarker_medians.push_back(median(std::move(last)));
    schema.names.push_back(train.biomarker_names()[m]);
    schema.names.push_back(train.biomarker_names()[m] + "_missing");
  }
  return schema;
}

FeatureSchema learn_two_stage_schema(const Dataset& train, double t, const TrajectorySpec& trajectory,
                                     const LmmOptions& lmm) {
  const RiskSet rs = risk_set(train, t);
  if (rs.empty()) throw DomainError(kModule, "risk set at landmark " + format_number(t) + " is empty");
  FeatureSchema schema;
  schema.stage = LandmarkStage::two_stage;
  schema.landmark = t;
  schema.names = train.covariate_names();
  schema.covariate_medians = covariate_medians(train, rs.indices);
  for (std::size_t m = 0; m < train.biomarker_count(); ++m) {
    try {
      schema.lmm_fits.push_back(fit_lmm(train, m, trajectory, t, {}, lmm));
    } catch (const Error& e) {
      throw FitError(kModule, "mixed model for biomarker '" + train.biomarker_names()[m] + "': " + e.what());
    }
    schema.names.push_back(train.biomarker_names()[m] + "_eta");
  }
  return schema;
}

LandmarkFeatures build_features(const FeatureSchema& schema, const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t n_cov = schema.covariate_medians.size();
  if (data.covariate_count() != n_cov) {
    throw DomainError(kModule, "data has " + std::to_string(data.covariate_count()) +
                                   " covariates but the model was trained with " + std::to_string(n_cov));
  }
  const std::size_t n_bio =
      schema.stage == LandmarkStage::one_stage ? schema.biomarker_medians.size() : schema.lmm_fits.size();
  if (data.biomarker_count() != n_bio) throw DomainError(kModule, "biomarker count differs from training");

  LandmarkFeatures f;
  f.feature_names = schema.names;
  f.subjects.assign(rows.begin(), rows.end());
  f.landmark = schema.landmark;
  f.stage = schema.stage;
  f.design.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema.names.size()));
  const double t = schema.landmark;

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const auto& s = data.subject(rows[r]);
    Eigen::Index col = 0;
    for (std::size_t c = 0; c < n_cov; ++c) {
      const double x = s.baseline[c];
      f.design(row, col++) = std::isnan(x) ? schema.covariate_medians[c] : x;
    }
    for (std::size_t m = 0; m < n_bio; ++m) {
      const auto hist = data.history(rows[r], m, t);
      if (schema.stage == LandmarkStage::one_stage) {
        f.design(row, col++) = hist.empty() ? schema.biomarker_medians[m] : hist.back().value;
        f.design(row, col++) = hist.empty() ? 1.0 : 0.0;
      } else {
        std::vector<double> times;
        std::vector<double> values;
        for (const auto& meas : hist) {
          times.push_back(meas.time);
          values.push_back(meas.value);
        }
        const LmmFit& lmm = schema.lmm_fits[m];
        f.design(row, col++) = predict_eta(lmm, blup(lmm, times, values), t);
      }
    }
  }
  return f;
}

LandmarkFeatures lvcf_features(const Dataset& data, double t) {
  const FeatureSchema schema = learn_lvcf_schema(data, t);
  return build_features(schema, data, risk_set(data, t).indices);
}

LandmarkFeatures two_stage_features(const Dataset& data, double t, const TrajectorySpec& trajectory) {
  const FeatureSchema schema = learn_two_stage_schema(data, t, trajectory);
  return build_features(schema, data, risk_set(data, t).indices);
}

// ---------------------------------------------------------------------------
// Cox partial likelihood

double cox_partial_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, std::span<const double> times,
                          const std::vector<bool>& events, Eigen::VectorXd* gradient, Eigen::MatrixXd* information) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = X.cols();
  const Eigen::VectorXd lp = X * beta;
  const double shift = n == 0 ? 0.0 : lp.maxCoeff();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  if (gradient) *gradient = Eigen::VectorXd::Zero(p);
  if (information) *information = Eigen::MatrixXd::Zero(p, p);
  double ll = 0.0;

  std::size_t k = 0;
  while (k < n) {
    const double s = times[order[k]];
    std::size_t end = k;
    // add every subject tied at s to the risk set first
    while (end < n && times[order[end]] == s) {
      const std::size_t i = order[end];
      const double w = std::exp(lp(static_cast<Eigen::Index>(i)) - shift);
      s0 += w;
      if (gradient || information) s1 += w * X.row(static_cast<Eigen::Index>(i)).transpose();
      if (information) s2 += w * X.row(static_cast<Eigen::Index>(i)).transpose() * X.row(static_cast<Eigen::Index>(i));
      ++end;
    }
    for (std::size_t j = k; j < end; ++j) {
      const std::size_t i = order[j];
      if (!events[i]) continue;
      ll += lp(static_cast<Eigen::Index>(i)) - shift - std::log(s0);
      if (gradient || information) {
        const Eigen::VectorXd mean = s1 / s0;
        if (gradient) *gradient += X.row(static_cast<Eigen::Index>(i)).transpose() - mean;
        if (information) *information += s2 / s0 - mean * mean.transpose();
      }
    }
    k = end;
  }
  return ll;
}

// per standard deviation of a covariate: a hazard ratio of e^20
constexpr double kDivergedBeta = 20.0;

CoxFit fit_cox(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
               const CoxOptions& options, const std::vector<std::string>& names) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (static_cast<std::size_t>(n) != times.size() || times.size() != events.size()) {
    throw DomainError(kModule, "Cox: design, times and events are not aligned");
  }
  if (std::none_of(events.begin(), events.end(), [](bool e) { return e; })) {
    throw FitError(kModule, "Cox: no events in the risk set");
  }
  auto name_of = [&](std::size_t j) { return j < names.size() ? names[j] : "column " + std::to_string(j); };

  CoxFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (X.col(j).maxCoeff() > X.col(j).minCoeff()) fit.kept.push_back(static_cast<std::size_t>(j));
  }
  const auto pk = static_cast<Eigen::Index>(fit.kept.size());

  // standardized working design over the non-constant columns
  Eigen::MatrixXd Z(n, pk);
  Eigen::VectorXd center(pk), scale(pk);
  for (Eigen::Index j = 0; j < pk; ++j) {
    const auto col = X.col(static_cast<Eigen::Index>(fit.kept[static_cast<std::size_t>(j)]));
    center(j) = col.mean();
    scale(j) = std::sqrt((col.array() - center(j)).square().sum() / static_cast<double>(n));
    Z.col(j) = (col.array() - center(j)) / scale(j);
  }
  if (pk > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < pk) {
      std::string dropped;
      const auto perm = qr.colsPermutation().indices();
      for (Eigen::Index r = qr.rank(); r < pk; ++r) {
        if (!dropped.empty()) dropped += ", ";
        dropped += name_of(fit.kept[static_cast<std::size_t>(perm(r))]);
      }
      throw FitError(kModule, "Cox: design is rank deficient; linearly dependent column(s): " + dropped);
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pk);
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
  double ll = cox_partial_loglik(Z, beta, times, events, &grad, &info);
  fit.null_log_partial_likelihood = ll;
  fit.loglik_path.push_back(ll);

  int it = 0;
  bool converged = pk == 0 || grad.cwiseAbs().maxCoeff() < 1e-10;
  for (; it < options.max_iterations && !converged; ++it) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      throw FitError(kModule, "Cox: information matrix is not positive definite (monotone likelihood?)");
    }
    Eigen::VectorXd step = ldlt.solve(grad);
    double ll_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta_new;
    Eigen::VectorXd grad_new;
    Eigen::MatrixXd info_new;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      beta_new = beta + step;
      ll_new = cox_partial_loglik(Z, beta_new, times, events, &grad_new, &info_new);
      // Near the optimum the gain drops below the rounding noise of the
      // log-likelihood; a step that shrinks the score is then still accepted.
      const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(ll);
      if (std::isfinite(ll_new) &&
          (ll_new >= ll || (ll_new >= ll - noise && grad_new.cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff()))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    beta = beta_new;
    ll = ll_new;
    grad = grad_new;
    info = info_new;
    fit.loglik_path.push_back(ll);
    if (grad.cwiseAbs().maxCoeff() < options.score_tolerance * 1e-3) {
      ++it;
      break;
    }
    if (beta.cwiseAbs().maxCoeff() > kDivergedBeta) break;
  }
  // the score vanishes on the way to infinity too, so a converged fit can still be separated
  if (pk > 0 && beta.cwiseAbs().maxCoeff() > kDivergedBeta) {
    throw FitError(kModule, "Cox: coefficients diverge (monotone likelihood / separation); largest |beta| = " +
                                format_number(beta.cwiseAbs().maxCoeff()) + " on the standardized scale");
  }
  const Eigen::VectorXd inv_scale = scale.cwiseInverse();
  if (pk > 0) converged = grad.cwiseProduct(inv_scale).cwiseAbs().maxCoeff() < options.score_tolerance;

  // back to the original scale: beta_j = beta_std_j / scale_j
  for (Eigen::Index j = 0; j < pk; ++j) {
    fit.coefficients(static_cast<Eigen::Index>(fit.kept[static_cast<std::size_t>(j)])) = beta(j) / scale(j);
  }
  fit.information = inv_scale.asDiagonal() * info * inv_scale.asDiagonal();
  fit.max_abs_score = pk == 0 ? 0.0 : (grad.cwiseProduct(inv_scale)).cwiseAbs().maxCoeff();
  fit.log_partial_likelihood = ll;
  fit.converged = converged;
  fit.iterations = it;
  if (!converged) {
    throw FitError(kModule, "Cox: Newton-Raphson stopped after " + std::to_string(it) +
                                " iterations without convergence (max |score| " + format_number(fit.max_abs_score) + ")");
  }
  return fit;
}

CoxFit fit_cox(const LandmarkFeatures& features, const Dataset& data, const CoxOptions& options) {
  std::vector<double> times;
  std::vector<bool> events;
  for (std::size_t i : features.subjects) {
    times.push_back(data.subject(i).observed_time);
    events.push_back(data.subject(i).event);
  }
  CoxFit fit = fit_cox(features.design, times, events, options, features.feature_names);
  fit.landmark = features.landmark;
  return fit;
}

LandmarkCoxModel train_landmark_cox(const Dataset& train, double t, LandmarkStage stage,
                                    const TrajectorySpec& trajectory) {
  LandmarkCoxModel model;
  model.schema = stage == LandmarkStage::one_stage ? learn_lvcf_schema(train, t)
                                                   : learn_two_stage_schema(train, t, trajectory);
  const RiskSet rs = risk_set(train, t);
  const LandmarkFeatures features = build_features(model.schema, train, rs.indices);
  model.fit = fit_cox(features, train);

  std::vector<double> times;
  std::vector<bool> events;
  for (std::size_t i : rs.indices) {
    times.push_back(train.subject(i).observed_time);
    events.push_back(train.subject(i).event);
    if (train.subject(i).event) model.last_event_time = std::max(model.last_event_time, times.back());
  }
  const Eigen::VectorXd lp = features.design * model.fit.coefficients;
  model.baseline_cumhaz = breslow_step(std::span<const double>(lp.data(), static_cast<std::size_t>(lp.size())), times,
                                       events, t);
  return model;
}

std::vector<double> predict_landmark(const LandmarkCoxModel& model, const Dataset& data,
                                     std::span<const std::size_t> rows, double u) {
  if (u < model.schema.landmark) throw DomainError(kModule, "horizon precedes the landmark");
  const LandmarkFeatures features = build_features(model.schema, data, rows);
  const Eigen::VectorXd lp = features.design * model.fit.coefficients;
  const double h0 = model.baseline_cumhaz(u);
  std::vector<double> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = cox_survival(lp(static_cast<Eigen::Index>(r)), h0);
  return out;
}

}  // namespace dynsl
