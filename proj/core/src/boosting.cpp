#include "dynsl/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynsl/error.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "boosted_cox";

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeSpec& spec)
      : X_(X), y_(y), spec_(spec), in_left_(static_cast<std::size_t>(X.rows()), 0) {}

  RegressionTree grow() {
    std::vector<std::vector<std::size_t>> sorted;
    for (std::size_t f : spec_.features) {
      std::vector<std::size_t> idx(static_cast<std::size_t>(X_.rows()));
      std::iota(idx.begin(), idx.end(), 0);
      const auto col = static_cast<Eigen::Index>(f);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return X_(static_cast<Eigen::Index>(a), col) < X_(static_cast<Eigen::Index>(b), col);
      });
      sorted.push_back(std::move(idx));
    }
    RegressionTree tree;
    grow_node(tree, sorted, 0);
    return tree;
  }

 private:
  int grow_node(RegressionTree& tree, const std::vector<std::vector<std::size_t>>& sorted, int depth) {
    const std::vector<std::size_t>& members = sorted.front();
    double sum = 0.0;
    for (std::size_t i : members) sum += y_(static_cast<Eigen::Index>(i));
    const double n = static_cast<double>(members.size());
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, members.empty() ? 0.0 : sum / n});

    if (depth >= spec_.max_depth || members.size() < spec_.min_split) return id;
    const SplitChoice split = best_split(sorted, sum);
    if (split.feature < 0) return id;

    const auto col = static_cast<Eigen::Index>(split.feature);
    for (std::size_t i : members) in_left_[i] = X_(static_cast<Eigen::Index>(i), col) <= split.threshold;
    std::vector<std::vector<std::size_t>> left(sorted.size()), right(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      for (std::size_t i : sorted[f]) (in_left_[i] ? left[f] : right[f]).push_back(i);
    }
    tree.nodes[static_cast<std::size_t>(id)].feature = split.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int l = grow_node(tree, left, depth + 1);
    const int r = grow_node(tree, right, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  SplitChoice best_split(const std::vector<std::vector<std::size_t>>& sorted, double total) const {
    SplitChoice best;
    const std::size_t n = sorted.front().size();
    double total_sq = 0.0;
    for (std::size_t i : sorted.front()) total_sq += y_(static_cast<Eigen::Index>(i)) * y_(static_cast<Eigen::Index>(i));
    const double sse_parent = total_sq - total * total / static_cast<double>(n);
    const double min_gain = 1e-12 * std::max(sse_parent, 1e-300);

    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto col = static_cast<Eigen::Index>(spec_.features[f]);
      const auto& idx = sorted[f];
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += y_(static_cast<Eigen::Index>(idx[k]));
        const double x_here = X_(static_cast<Eigen::Index>(idx[k]), col);
        const double x_next = X_(static_cast<Eigen::Index>(idx[k + 1]), col);
        if (!(x_here < x_next)) continue;
        const std::size_t nl = k + 1;
        const std::size_t nr = n - nl;
        if (nl < spec_.min_bucket || nr < spec_.min_bucket) continue;
        const double right_sum = total - left_sum;
        // SSE reduction of splitting = sum_l^2/n_l + sum_r^2/n_r - total^2/n
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - total * total / static_cast<double>(n);
        if (gain > best.gain && gain > min_gain) {
          best.gain = gain;
          best.feature = static_cast<int>(spec_.features[f]);
          best.threshold = 0.5 * (x_here + x_next);
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  const TreeSpec& spec_;
  std::vector<char> in_left_;
};

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::vector<std::size_t> ascending_time_order(std::span<const double> times) {
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return order;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    k = static_cast<std::size_t>(x(nodes[k].feature) <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
  }
  return nodes[k].value;
}

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_row(X.row(i));
  return out;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const TreeSpec& spec) {
  if (X.rows() != targets.size()) throw DomainError(kModule, "tree: design and targets are not aligned");
  if (X.rows() == 0) throw DomainError(kModule, "tree: no observations");
  if (!targets.allFinite()) throw DomainError(kModule, "tree: targets must be finite");
  if (spec.features.empty() || spec.features.size() > 2) throw DomainError(kModule, "tree: needs one or two features");
  for (std::size_t f : spec.features) {
    if (f >= static_cast<std::size_t>(X.cols())) throw DomainError(kModule, "tree: feature index out of range");
  }
  return TreeGrower(X, targets, spec).grow();
}

Eigen::VectorXd cox_negative_gradient(std::span<const double> psi, std::span<const double> times,
                                      const std::vector<bool>& events) {
  const std::size_t n = times.size();
  if (psi.size() != n || events.size() != n) throw DomainError(kModule, "gradient: inputs are not aligned");
  const auto order = ascending_time_order(times);
  const double shift = n == 0 ? 0.0 : *std::max_element(psi.begin(), psi.end());

  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + std::exp(psi[order[k]] - shift);

  // cumulative Breslow increments sum_{l: delta_l, T_l <= T_i} 1 / S0(T_l), on the shifted scale
  Eigen::VectorXd u(static_cast<Eigen::Index>(n));
  double cumulative = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double s = times[order[k]];
    std::size_t end = k;
    std::size_t d = 0;
    while (end < n && times[order[end]] == s) {
      if (events[order[end]]) ++d;
      ++end;
    }
    cumulative += static_cast<double>(d) / suffix[k];
    for (std::size_t j = k; j < end; ++j) {
      const std::size_t i = order[j];
      u(static_cast<Eigen::Index>(i)) = (events[i] ? 1.0 : 0.0) - std::exp(psi[i] - shift) * cumulative;
    }
    k = end;
  }
  return u;
}

double cox_negative_partial_loglik(std::span<const double> psi, std::span<const double> times,
                                   const std::vector<bool>& events) {
  const std::size_t n = times.size();
  const auto order = ascending_time_order(times);
  const double shift = n == 0 ? 0.0 : *std::max_element(psi.begin(), psi.end());
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + std::exp(psi[order[k]] - shift);
  double risk = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double s = times[order[k]];
    const double log_denom = std::log(suffix[k]);
    std::size_t end = k;
    while (end < n && times[order[end]] == s) {
      const std::size_t i = order[end];
      if (events[i]) risk -= psi[i] - shift - log_denom;
      ++end;
    }
    k = end;
  }
  return risk;
}

std::vector<TreeSpec> candidate_specs(std::size_t feature_count, const BoostOptions& options) {
  std::vector<TreeSpec> specs;
  for (std::size_t f = 0; f < feature_count; ++f) {
    specs.push_back(TreeSpec{{f}, options.max_depth_single, options.min_split, options.min_bucket});
  }
  if (options.interactions) {
    for (std::size_t a = 0; a < feature_count; ++a) {
      for (std::size_t b = a + 1; b < feature_count; ++b) {
        specs.push_back(TreeSpec{{a, b}, options.max_depth_pair, options.min_split, options.min_bucket});
      }
    }
  }
  return specs;
}

Eigen::VectorXd BoostFit::predict(const Eigen::MatrixXd& X, std::size_t b) const {
  Eigen::VectorXd psi = Eigen::VectorXd::Constant(X.rows(), offset);
  const std::size_t steps = std::min(b, selected.size());
  for (std::size_t k = 0; k < steps; ++k) psi += nu * selected[k].tree.predict(X);
  return psi;
}

BoostFit boost(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
               const BoostOptions& options) {
  if (static_cast<std::size_t>(X.rows()) != times.size() || times.size() != events.size()) {
    throw DomainError(kModule, "boost: inputs are not aligned");
  }
  if (std::none_of(events.begin(), events.end(), [](bool e) { return e; })) {
    throw FitError(kModule, "boost: no events");
  }
  if (!(options.nu > 0.0 && options.nu <= 1.0)) throw DomainError(kModule, "boost: nu must lie in (0, 1]");
  if (options.b_stop < 0) throw DomainError(kModule, "boost: b_stop must be nonnegative");

  const auto specs = candidate_specs(static_cast<std::size_t>(X.cols()), options);
  BoostFit fit;
  fit.nu = options.nu;
  fit.offset = 0.0;
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(X.rows());
  fit.risk_path.push_back(cox_negative_partial_loglik(as_span(psi), times, events));

  for (int b = 0; b < options.b_stop; ++b) {
    const Eigen::VectorXd u = cox_negative_gradient(as_span(psi), times, events);
    double best_sse = std::numeric_limits<double>::infinity();
    BoostStep best;
    Eigen::VectorXd best_fitted;
    for (const auto& spec : specs) {
      RegressionTree tree = fit_tree(X, u, spec);
      const Eigen::VectorXd fitted = tree.predict(X);
      const double sse = (u - fitted).squaredNorm();
      if (sse < best_sse) {
        best_sse = sse;
        best = BoostStep{spec, std::move(tree)};
        best_fitted = fitted;
      }
    }
    psi += options.nu * best_fitted;
    fit.selected.push_back(std::move(best));
    fit.risk_path.push_back(cox_negative_partial_loglik(as_span(psi), times, events));
  }
  return fit;
}

EarlyStopping select_b_opt(const Eigen::MatrixXd& X, std::span<const double> times, const std::vector<bool>& events,
                           const BoostOptions& options, std::uint64_t seed) {
  const std::size_t folds = options.inner_folds;
  const auto n_events = static_cast<std::size_t>(std::count(events.begin(), events.end(), true));
  if (folds < 2) throw DomainError(kModule, "early stopping needs at least 2 inner folds");
  if (n_events < folds) {
    throw FitError(kModule, "early stopping: " + std::to_string(n_events) + " events for " + std::to_string(folds) +
                                " inner folds");
  }
  const auto fold_of = stratified_partition(events, folds, seed);
  const auto b_stop = static_cast<std::size_t>(options.b_stop);
  EarlyStopping result;
  result.cv_risk.assign(b_stop + 1, 0.0);

  for (std::size_t p = 0; p < folds; ++p) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == p ? test : train).push_back(i);
    const Eigen::MatrixXd X_train = rows_of(X, train);
    const Eigen::MatrixXd X_test = rows_of(X, test);
    std::vector<double> t_train, t_test;
    std::vector<bool> e_train, e_test;
    for (std::size_t i : train) {
      t_train.push_back(times[i]);
      e_train.push_back(events[i]);
    }
    for (std::size_t i : test) {
      t_test.push_back(times[i]);
      e_test.push_back(events[i]);
    }
    const BoostFit path = boost(X_train, t_train, e_train, options);
    Eigen::VectorXd psi = Eigen::VectorXd::Constant(X_test.rows(), path.offset);
    result.cv_risk[0] += cox_negative_partial_loglik(as_span(psi), t_test, e_test) / static_cast<double>(folds);
    for (std::size_t b = 0; b < b_stop; ++b) {
      psi += path.nu * path.selected[b].tree.predict(X_test);
      result.cv_risk[b + 1] += cox_negative_partial_loglik(as_span(psi), t_test, e_test) / static_cast<double>(folds);
    }
  }
  result.b_opt = static_cast<std::size_t>(std::min_element(result.cv_risk.begin(), result.cv_risk.end()) -
                                          result.cv_risk.begin());
  return result;
}

std::vector<double> predict_boosted(const BoostFit& fit, const Eigen::MatrixXd& X_train, std::span<const double> times,
                                    const std::vector<bool>& events, const Eigen::MatrixXd& X_new,
                                    const PredictionWindow& window) {
  if (X_new.cols() != X_train.cols()) {
    throw DomainError(kModule, "prediction features have " + std::to_string(X_new.cols()) + " columns, training had " +
                                   std::to_string(X_train.cols()));
  }
  const Eigen::VectorXd psi_train = fit.predict(X_train);
  const StepFunction h0 = breslow_step(as_span(psi_train), times, events, window.t);
  const double h = h0(window.u);
  const Eigen::VectorXd psi_new = fit.predict(X_new);
  std::vector<double> out(static_cast<std::size_t>(X_new.rows()));
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = cox_survival(psi_new(static_cast<Eigen::Index>(r)), h);
  return out;
}

BoostedCoxModel train_boosted_cox(const Dataset& train, double t, LandmarkStage stage, const TrajectorySpec& trajectory,
                                  const BoostOptions& options, std::uint64_t seed) {
  BoostedCoxModel model;
  model.schema = stage == LandmarkStage::one_stage ? learn_lvcf_schema(train, t)
                                                   : learn_two_stage_schema(train, t, trajectory);
  const RiskSet rs = risk_set(train, t);
  const LandmarkFeatures features = build_features(model.schema, train, rs.indices);
  std::vector<double> times;
  std::vector<bool> events;
  for (std::size_t i : rs.indices) {
    times.push_back(train.subject(i).observed_time);
    events.push_back(train.subject(i).event);
  }
  model.stopping = select_b_opt(features.design, times, events, options, seed);
  BoostOptions final_options = options;
  final_options.b_stop = static_cast<int>(model.stopping.b_opt);
  model.fit = boost(features.design, times, events, final_options);
  const Eigen::VectorXd psi = model.fit.predict(features.design);
  model.baseline_cumhaz = breslow_step(as_span(psi), times, events, t);
  return model;
}

std::vector<double> predict_boosted(const BoostedCoxModel& model, const Dataset& data, std::span<const std::size_t> rows,
                                    double u) {
  if (u < model.schema.landmark) throw DomainError(kModule, "horizon precedes the landmark");
  const LandmarkFeatures features = build_features(model.schema, data, rows);
  const Eigen::VectorXd psi = model.fit.predict(features.design);
  const double h = model.baseline_cumhaz(u);
  std::vector<double> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = cox_survival(psi(static_cast<Eigen::Index>(r)), h);
  return out;
}

}  // namespace dynsl
