#include "dynsl/superlearner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dynsl/error.hpp"
#include "dynsl/optim.hpp"
#include "dynsl/parallel.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "superlearner";
using json = nlohmann::json;

std::vector<double> one_hot(std::size_t k, std::size_t K) {
  std::vector<double> w(K, 0.0);
  w[k] = 1.0;
  return w;
}

std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> w(z.size());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += (w[k] = std::exp(z[k] - m));
  for (auto& x : w) x /= s;
  return w;
}

bool better(MetricKind kind, double a, double b) { return lower_is_better(kind) ? a < b : a > b; }

// Quadratic form of an IPCW Brier score in omega: w'Aw - 2 b'w + c.
struct Quadratic {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;

  double value(const Eigen::VectorXd& w) const { return w.dot(A * w) - 2.0 * b.dot(w) + c; }
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const { return 2.0 * (A * w - b); }
};

void add_brier(Quadratic& q, const PredictionMatrix& Z, const LossEvaluator& loss, const IpcwWeights& w, double scale) {
  const double n = static_cast<double>(w.subjects.size());
  for (std::size_t r = 0; r < w.subjects.size(); ++r) {
    if (w.weight[r] == 0.0) continue;
    const bool died = loss.data().subject(w.subjects[r]).observed_time <= w.window.u;
    const double o = loss.pairing() == BrierPairing::verbatim ? (died ? 1.0 : 0.0) : (died ? 0.0 : 1.0);
    const double s = scale * w.weight[r] / n;
    const auto z = Z.values.row(static_cast<Eigen::Index>(r)).transpose();
    q.A.noalias() += s * z * z.transpose();
    q.b.noalias() += s * o * z;
    q.c += s * o * o;
  }
}

void check_matrix(const PredictionMatrix& Z, const IpcwWeights& w, const char* what) {
  if (Z.rows != w.subjects) throw DomainError(kModule, std::string(what) + " matrix rows are not the risk set");
}

}  // namespace

std::vector<double> PredictionMatrix::column(std::size_t k) const {
  std::vector<double> out(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index r = 0; r < values.rows(); ++r) out[static_cast<std::size_t>(r)] = values(r, static_cast<Eigen::Index>(k));
  return out;
}

std::vector<double> PredictionMatrix::mix(std::span<const double> omega) const {
  if (omega.size() != learner_ids.size()) throw DomainError(kModule, "weight vector does not match the library");
  std::vector<double> out(static_cast<std::size_t>(values.rows()), 0.0);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k) s += omega[k] * values(r, static_cast<Eigen::Index>(k));
    out[static_cast<std::size_t>(r)] = s;
  }
  return out;
}

PredictionMatrix PredictionMatrix::select(const std::vector<std::size_t>& columns) const {
  PredictionMatrix out = *this;
  out.learner_ids.clear();
  out.values.resize(values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.learner_ids.push_back(learner_ids.at(columns[c]));
    out.values.col(static_cast<Eigen::Index>(c)) = values.col(static_cast<Eigen::Index>(columns[c]));
  }
  return out;
}

CvPredictions cv_predictions(const std::vector<LearnerSpec>& library, const Dataset& data,
                             const PredictionWindow& window, const FoldAssignment& folds, std::uint64_t seed,
                             std::size_t threads) {
  if (library.empty()) throw ConfigError(kModule, "empty learner library");
  if (folds.fold_of.size() != data.size()) throw ConfigError(kModule, "fold assignment does not cover the data");
  const RiskSet rs = risk_set(data, window.t);
  if (rs.empty()) throw DomainError(kModule, "no subjects at risk at the landmark");
  const std::size_t K = library.size(), V = folds.folds;
  const auto n = static_cast<Eigen::Index>(rs.size());

  std::vector<Dataset> train(V);
  std::vector<std::vector<std::size_t>> held(V);  // positions within the risk set
  for (std::size_t v = 0; v < V; ++v) {
    const auto rows = folds.training_rows(v);
    train[v] = data.subset(rows);
  }
  for (std::size_t r = 0; r < rs.size(); ++r) held[folds.fold_of[rs.indices[r]]].push_back(r);

  Eigen::MatrixXd end(n, static_cast<Eigen::Index>(K)), mid(n, static_cast<Eigen::Index>(K));
  std::vector<std::string> error(K * V);
  parallel_for(K * V, threads, [&](std::size_t task) {
    const std::size_t k = task % K, v = task / K;
    if (held[v].empty()) return;
    try {
      const auto fitted = train_learner(library[k], train[v], window.t, derive_seed(seed, task));
      std::vector<std::size_t> rows;
      for (std::size_t r : held[v]) rows.push_back(rs.indices[r]);
      const auto pe = fitted->predict(data, rows, window.u);
      const auto pm = fitted->predict(data, rows, window.midpoint());
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (!(pe[j] >= 0.0 && pe[j] <= 1.0 && pm[j] >= 0.0 && pm[j] <= 1.0))
          throw NumericalError(kModule, "prediction outside [0, 1]");
        end(static_cast<Eigen::Index>(held[v][j]), static_cast<Eigen::Index>(k)) = pe[j];
        mid(static_cast<Eigen::Index>(held[v][j]), static_cast<Eigen::Index>(k)) = pm[j];
      }
    } catch (const Error& e) {
      error[task] = e.module() + ": " + e.what();
    } catch (const std::exception& e) {
      error[task] = e.what();
    }
  });

  CvPredictions out;
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < K; ++k) {
    std::string why;
    for (std::size_t v = 0; v < V && why.empty(); ++v)
      if (!error[v * K + k].empty()) why = "fold " + std::to_string(v + 1) + ": " + error[v * K + k];
    if (why.empty()) {
      kept.push_back(k);
    } else {
      out.dropped.push_back(library[k].id);
      out.warnings.push_back("learner '" + library[k].id + "' dropped (" + why + ")");
    }
  }
  for (auto* m : {&out.end, &out.mid}) {
    m->rows = rs.indices;
    for (std::size_t i : rs.indices) {
      m->subject_ids.push_back(data.subject(i).id);
      m->fold_of.push_back(folds.fold_of[i]);
    }
    m->values.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c) {
      m->learner_ids.push_back(library[kept[c]].id);
      m->values.col(static_cast<Eigen::Index>(c)) = (m == &out.end ? end : mid).col(static_cast<Eigen::Index>(kept[c]));
    }
  }
  out.end.horizon = window.u;
  out.mid.horizon = window.midpoint();
  return out;
}

LossEvaluator::LossEvaluator(const Dataset& data, const PredictionWindow& window, BrierPairing pairing,
                             AucOrientation orientation)
    : data_(&data),
      end_(ipcw(data, window)),
      mid_(ipcw(data, PredictionWindow{window.t, window.midpoint()})),
      pairing_(pairing),
      orientation_(orientation) {}

double LossEvaluator::operator()(MetricKind kind, std::span<const double> end, std::span<const double> mid) const {
  switch (kind) {
    case MetricKind::brier: return brier(end, *data_, end_, pairing_).value;
    case MetricKind::integrated_brier: return integrated_brier(mid, end, *data_, mid_, end_, pairing_).value;
    case MetricKind::tv_auc: return tv_auc(end, *data_, end_, orientation_).value;
  }
  return 0.0;
}

std::vector<double> column_losses(const LossEvaluator& loss, MetricKind kind, const PredictionMatrix& end,
                                  const PredictionMatrix& mid) {
  std::vector<double> out;
  for (std::size_t k = 0; k < end.learner_count(); ++k) {
    const auto e = end.column(k);
    const auto m = kind == MetricKind::integrated_brier ? mid.column(k) : std::vector<double>{};
    out.push_back(loss(kind, e, m));
  }
  return out;
}

EnsembleWeights optimize_weights_convex(const PredictionMatrix& end, const PredictionMatrix& mid,
                                        const LossEvaluator& loss, MetricKind kind) {
  if (kind == MetricKind::tv_auc) throw DomainError(kModule, "tv-AUC is not a convex loss");
  const std::size_t K = end.learner_count();
  if (K == 0) throw DomainError(kModule, "no learners to weight");
  check_matrix(end, loss.end_weights(), "horizon");
  if (kind == MetricKind::integrated_brier) check_matrix(mid, loss.mid_weights(), "midpoint");
  const auto Ki = static_cast<Eigen::Index>(K);

  Quadratic q{Eigen::MatrixXd::Zero(Ki, Ki), Eigen::VectorXd::Zero(Ki), 0.0};
  if (kind == MetricKind::brier) {
    add_brier(q, end, loss, loss.end_weights(), 1.0);
  } else {
    add_brier(q, mid, loss, loss.mid_weights(), 2.0 / 3.0);
    add_brier(q, end, loss, loss.end_weights(), 1.0 / 6.0);
  }

  EnsembleWeights out;
  out.loss = kind;
  out.n_starts_used = 1;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(Ki, 1.0 / static_cast<double>(K));
  const double L = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q.A).eigenvalues().maxCoeff();
  auto project = [](const Eigen::VectorXd& v) {
    const auto p = project_to_simplex(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    return Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())).eval();
  };
  if (K == 1 || !(L > 0.0)) {
    out.converged = true;
  } else {
    // Accelerated projected gradient with function-value restart.
    Eigen::VectorXd y = w;
    double f = q.value(w), tk = 1.0;
    for (int it = 1; it <= 100000; ++it) {
      out.iterations = it;
      Eigen::VectorXd next = project(y - q.gradient(y) / L);
      double f_next = q.value(next);
      if (f_next > f) {
        next = project(w - q.gradient(w) / L);
        f_next = q.value(next);
        tk = 1.0;
        y = next;
      } else {
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        y = next + ((tk - 1.0) / tn) * (next - w);
        tk = tn;
      }
      const double change = std::fabs(f - f_next);
      w = next;
      f = f_next;
      const double mapping = L * (w - project(w - q.gradient(w) / L)).norm();
      if (change < 1e-12 || mapping < 1e-10) {
        out.converged = true;
        break;
      }
    }
  }
  out.omega.assign(w.data(), w.data() + K);
  auto evaluate = [&](const std::vector<double>& omega) {
    return loss(kind, end.mix(omega), kind == MetricKind::integrated_brier ? mid.mix(omega) : std::vector<double>{});
  };
  out.achieved_loss = evaluate(out.omega);
  for (std::size_t k = 0; k < K; ++k) {
    const auto v = one_hot(k, K);
    const double lv = evaluate(v);
    if (lv < out.achieved_loss) {
      out.omega = v;
      out.achieved_loss = lv;
    }
  }
  return out;
}

EnsembleWeights optimize_weights_auc(const PredictionMatrix& end, const LossEvaluator& loss, std::size_t n_starts,
                                     std::uint64_t seed) {
  const std::size_t K = end.learner_count();
  if (K == 0) throw DomainError(kModule, "no learners to weight");
  check_matrix(end, loss.end_weights(), "horizon");
  EnsembleWeights out;
  out.loss = MetricKind::tv_auc;
  auto auc = [&](const std::vector<double>& omega) { return loss(MetricKind::tv_auc, end.mix(omega)); };

  std::vector<double> vertex(K);
  std::size_t best_vertex = 0;
  for (std::size_t k = 0; k < K; ++k) {
    vertex[k] = auc(one_hot(k, K));
    if (vertex[k] > vertex[best_vertex]) best_vertex = k;
  }
  if (K == 1) {
    out.omega = {1.0};
    out.achieved_loss = vertex[0];
    out.converged = true;
    out.n_starts_used = 1;
    return out;
  }

  std::vector<std::vector<double>> starts;
  starts.emplace_back(K, 0.0);
  for (std::size_t k = 0; k < K && starts.size() < n_starts; ++k) {
    std::vector<double> z(K, 0.0);
    z[k] = 20.0;
    starts.push_back(z);
  }
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  while (starts.size() < n_starts) {
    std::vector<double> z(K);
    for (auto& x : z) x = std::log(std::max(gamma(rng), 1e-300));
    starts.push_back(z);
  }

  NelderMeadOptions opts;
  opts.max_iterations = 400;
  opts.f_tolerance = 1e-10;
  opts.x_tolerance = 1e-6;
  opts.initial_step = 1.0;
  double best = -1.0;
  std::vector<double> best_omega;
  for (const auto& z0 : starts) {
    const auto r = nelder_mead([&](std::span<const double> z) { return -auc(softmax(z)); }, z0, opts);
    out.iterations += r.iterations;
    const auto omega = softmax(r.x);
    const double value = auc(omega);
    if (value > best) {
      best = value;
      best_omega = omega;
    }
  }
  out.n_starts_used = starts.size();
  if (best >= vertex[best_vertex] - 1e-10) {
    out.omega = best_omega;
    out.achieved_loss = best;
    out.converged = true;
  } else {
    out.omega = one_hot(best_vertex, K);
    out.achieved_loss = vertex[best_vertex];
    out.converged = false;
  }
  return out;
}

std::size_t discrete_select(const PredictionMatrix& end, const PredictionMatrix& mid, const LossEvaluator& loss,
                            MetricKind kind) {
  const auto values = column_losses(loss, kind, end, mid);
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (better(kind, values[k], values[best])) best = k;
  return best;
}

const LossResult& SuperLearnerFit::result(MetricKind kind) const {
  for (const auto& r : losses)
    if (r.kind == kind) return r;
  throw DomainError(kModule, "loss " + to_string(kind) + " was not optimized");
}

Eigen::MatrixXd SuperLearnerFit::learner_predictions(const Dataset& data, std::span<const std::size_t> rows,
                                                     double u) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(fitted.size()));
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    const auto p = fitted[k]->predict(data, rows, u);
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = p[r];
  }
  return out;
}

std::vector<double> SuperLearnerFit::predict(const Dataset& data, std::span<const std::size_t> rows, double u,
                                             MetricKind kind) const {
  const auto& omega = result(kind).weights.omega;
  const Eigen::MatrixXd P = learner_predictions(data, rows, u);
  std::vector<double> out(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t k = 0; k < omega.size(); ++k)
      out[r] += omega[k] * P(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
  return out;
}

json SuperLearnerFit::to_json() const {
  json losses_j = json::array();
  for (const auto& r : losses) {
    losses_j.push_back({{"loss", to_string(r.kind)},
                        {"omega", r.weights.omega},
                        {"achieved_loss", r.weights.achieved_loss},
                        {"converged", r.weights.converged},
                        {"n_starts_used", r.weights.n_starts_used},
                        {"iterations", r.weights.iterations},
                        {"discrete", learner_ids.at(r.discrete)},
                        {"cv_losses", r.cv_losses},
                        {"cv_ensemble_loss", r.cv_ensemble_loss}});
  }
  json learners = json::array();
  for (const auto& f : fitted) learners.push_back(f->to_json());
  return {{"window", {window.t, window.u}},
          {"learner_ids", learner_ids},
          {"dropped", dropped},
          {"warnings", warnings},
          {"folds", {{"count", folds.folds}, {"seed", folds.seed}, {"fold_of", folds.fold_of}}},
          {"losses", losses_j},
          {"learners", learners},
          {"km_reference", km_reference ? km_reference->to_json() : json()}};
}

SuperLearnerFit SuperLearnerFit::from_json(const json& j) {
  SuperLearnerFit f;
  try {
    f.window = PredictionWindow::make(j.at("window")[0].get<double>(), j.at("window")[1].get<double>());
    f.learner_ids = j.at("learner_ids").get<std::vector<std::string>>();
    f.dropped = j.at("dropped").get<std::vector<std::string>>();
    f.warnings = j.at("warnings").get<std::vector<std::string>>();
    f.folds.folds = j.at("folds").at("count").get<std::size_t>();
    f.folds.seed = j.at("folds").at("seed").get<std::uint64_t>();
    f.folds.fold_of = j.at("folds").at("fold_of").get<std::vector<std::size_t>>();
    for (const auto& r : j.at("losses")) {
      LossResult lr;
      lr.kind = metric_kind_from_string(r.at("loss").get<std::string>());
      lr.weights.loss = lr.kind;
      lr.weights.omega = r.at("omega").get<std::vector<double>>();
      lr.weights.achieved_loss = r.at("achieved_loss").get<double>();
      lr.weights.converged = r.at("converged").get<bool>();
      lr.weights.n_starts_used = r.at("n_starts_used").get<std::size_t>();
      lr.weights.iterations = r.at("iterations").get<int>();
      const auto d = r.at("discrete").get<std::string>();
      const auto it = std::find(f.learner_ids.begin(), f.learner_ids.end(), d);
      if (it == f.learner_ids.end()) throw ConfigError(kModule, "ensemble: discrete learner '" + d + "' is not in the library");
      lr.discrete = static_cast<std::size_t>(it - f.learner_ids.begin());
      lr.cv_losses = r.at("cv_losses").get<std::vector<double>>();
      lr.cv_ensemble_loss = r.at("cv_ensemble_loss").get<double>();
      if (lr.weights.omega.size() != f.learner_ids.size())
        throw ConfigError(kModule, "ensemble: weight vector does not match the library");
      f.losses.push_back(std::move(lr));
    }
    for (const auto& l : j.at("learners")) f.fitted.push_back(learner_from_json(l));
    if (f.fitted.size() != f.learner_ids.size()) throw ConfigError(kModule, "ensemble: fitted learners do not match ids");
    if (!j.at("km_reference").is_null()) f.km_reference = learner_from_json(j.at("km_reference"));
  } catch (const json::exception& e) {
    throw ConfigError(kModule, std::string("ensemble file is malformed: ") + e.what());
  }
  return f;
}

SuperLearnerFit fit_super_learner(const Dataset& train, const PredictionWindow& window,
                                  const SuperLearnerConfig& config) {
  if (config.library.empty()) throw ConfigError(kModule, "empty learner library");
  std::set<std::string> ids;
  for (const auto& s : config.library) {
    s.validate();
    if (!ids.insert(s.id).second) throw ConfigError(kModule, "duplicate learner id '" + s.id + "'");
  }
  if (config.folds < 2) throw ConfigError(kModule, "V must be at least 2");
  if (config.losses.empty()) throw ConfigError(kModule, "no losses requested");

  SuperLearnerFit fit;
  fit.window = window;
  fit.folds = stratified_folds(train, window, config.folds, config.seed);
  const CvPredictions cv =
      cv_predictions(config.library, train, window, fit.folds, derive_seed(config.seed, 1), config.threads);
  fit.dropped = cv.dropped;
  fit.warnings = cv.warnings;
  fit.learner_ids = cv.end.learner_ids;
  if (fit.learner_ids.empty()) throw FitError(kModule, "every learner failed during cross-validation");

  const LossEvaluator loss(train, window, config.pairing, config.orientation);
  for (MetricKind kind : config.losses) {
    LossResult r;
    r.kind = kind;
    r.weights = kind == MetricKind::tv_auc
                    ? optimize_weights_auc(cv.end, loss, config.auc_starts, derive_seed(config.seed, 2))
                    : optimize_weights_convex(cv.end, cv.mid, loss, kind);
    r.cv_losses = column_losses(loss, kind, cv.end, cv.mid);
    r.discrete = discrete_select(cv.end, cv.mid, loss, kind);
    r.cv_ensemble_loss = r.weights.achieved_loss;
    fit.losses.push_back(std::move(r));
  }

  std::vector<const LearnerSpec*> kept;
  for (const auto& s : config.library)
    if (std::find(fit.learner_ids.begin(), fit.learner_ids.end(), s.id) != fit.learner_ids.end()) kept.push_back(&s);
  fit.fitted.resize(kept.size());
  parallel_for(kept.size(), config.threads, [&](std::size_t k) {
    fit.fitted[k] = train_learner(*kept[k], train, window.t, derive_seed(config.seed, 1000 + k));
  });
  fit.km_reference = train_km_reference(train, window.t);
  return fit;
}

std::vector<double> fit_full_and_predict(const std::vector<LearnerSpec>& library, const EnsembleWeights& weights,
                                         const Dataset& train, const Dataset& newdata, const PredictionWindow& window,
                                         std::uint64_t seed) {
  if (weights.omega.size() != library.size()) throw DomainError(kModule, "weights do not match the library");
  const RiskSet rs = risk_set(newdata, window.t);
  if (rs.empty()) throw DomainError(kModule, "no new subjects at risk at the landmark");
  std::vector<double> out(rs.size(), 0.0);
  for (std::size_t k = 0; k < library.size(); ++k) {
    const auto fitted = train_learner(library[k], train, window.t, derive_seed(seed, 1000 + k));
    const auto p = fitted->predict(newdata, rs.indices, window.u);
    for (std::size_t r = 0; r < p.size(); ++r) out[r] += weights.omega[k] * p[r];
  }
  return out;
}

}  // namespace dynsl
