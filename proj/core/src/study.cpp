#include "dynsl/study.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/parallel.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "simulator";

std::vector<double> one_hot(std::size_t k, std::size_t K) {
  std::vector<double> w(K, 0.0);
  w[k] = 1.0;
  return w;
}

}  // namespace

std::vector<LearnerSpec> study_library(const SimConfig& config) {
  LearnerSpec one{"lm_one_stage", LearnerKind::one_stage_cox, {}, nlohmann::json::object()};
  LearnerSpec two{"lm_two_stage", LearnerKind::two_stage_cox, {}, nlohmann::json::object()};
  return {one, two, oracle_spec("joint_oracle", config)};
}

EventProcess replicate_generator(const SimConfig& config, std::size_t replicate) {
  const double f = config.joint_fraction;
  const auto r = static_cast<double>(replicate);
  return std::floor((r + 1.0) * f) > std::floor(r * f) ? EventProcess::joint : EventProcess::landmark;
}

ReplicateData simulate_replicate(const SimConfig& config, std::size_t replicate) {
  config.validate();
  const std::uint64_t seed = derive_seed(config.seed, replicate);
  ReplicateData d;
  d.process = replicate_generator(config, replicate);
  d.cohort = gen_longitudinal(config, derive_seed(seed, 0));
  d.cohort.truth.process = d.process;
  d.cohort.truth.event_time = d.process == EventProcess::landmark ? gen_events_landmark(d.cohort, config, derive_seed(seed, 1))
                                                                  : gen_events_joint(d.cohort, config, derive_seed(seed, 1));

  std::vector<std::size_t> order(config.n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::shuffle(order.begin(), order.end(), rng);
  d.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.test_n));
  d.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(config.test_n), order.end());
  std::sort(d.test_rows.begin(), d.test_rows.end());
  std::sort(d.train_rows.begin(), d.train_rows.end());
  return d;
}

CensoringOutcome censor_replicate(const SimConfig& config, std::size_t replicate, const ReplicateData& d,
                                  CensoringScenario scenario) {
  const std::uint64_t seed = derive_seed(config.seed, replicate);
  return apply_censoring(d.cohort, scenario, config, derive_seed(seed, 10 + static_cast<std::uint64_t>(scenario)));
}

std::vector<StudyRow> run_replicate(const SimConfig& config, std::size_t replicate, StudyLog* log) {
  const ReplicateData data = simulate_replicate(config, replicate);
  const std::uint64_t seed = derive_seed(config.seed, replicate);
  const EventProcess process = data.process;
  const auto& train_rows = data.train_rows;
  const auto& test_rows = data.test_rows;

  const auto library = study_library(config);
  std::vector<std::string> ids;
  for (const auto& s : library) ids.push_back(s.id);
  const std::size_t K = ids.size();

  std::vector<StudyRow> rows;
  for (CensoringScenario scenario : config.scenarios) {
    const auto sidx = static_cast<std::uint64_t>(scenario);
    try {
      const CensoringOutcome censored = censor_replicate(config, replicate, data, scenario);
      const Dataset train = censored.data.subset(train_rows);
      const Dataset test = censored.data.subset(test_rows);

      SuperLearnerConfig sl;
      sl.library = library;
      sl.folds = config.folds;
      sl.losses = config.losses;
      sl.auc_starts = config.auc_starts;
      sl.seed = derive_seed(seed, 20 + sidx);
      sl.pairing = config.pairing;
      sl.orientation = config.orientation;
      sl.threads = 1;
      const SuperLearnerFit fit = fit_super_learner(train, config.window, sl);
      if (log)
        for (const auto& w : fit.warnings) log->warnings.push_back({replicate, scenario, w});

      // Map the surviving library onto the full id list.
      std::vector<std::size_t> full_index;
      for (const auto& id : fit.learner_ids)
        full_index.push_back(static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin()));
      auto expand = [&](const std::vector<double>& w) {
        std::vector<double> out(K, 0.0);
        for (std::size_t k = 0; k < w.size(); ++k) out[full_index[k]] = w[k];
        return out;
      };

      const RiskSet rs = risk_set(test, config.window.t);
      const LossEvaluator loss(test, config.window, config.pairing, config.orientation);
      const Eigen::MatrixXd P_end = fit.learner_predictions(test, rs.indices, config.window.u);
      const Eigen::MatrixXd P_mid = fit.learner_predictions(test, rs.indices, config.window.midpoint());
      auto column = [](const Eigen::MatrixXd& P, std::size_t k) {
        const Eigen::VectorXd c = P.col(static_cast<Eigen::Index>(k));
        return std::vector<double>(c.data(), c.data() + c.size());
      };
      auto mix = [](const Eigen::MatrixXd& P, const std::vector<double>& w) {
        const Eigen::VectorXd c = P * Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        return std::vector<double>(c.data(), c.data() + c.size());
      };

      for (const LossResult& lr : fit.losses) {
        const MetricKind kind = lr.kind;
        const bool ibs = kind == MetricKind::integrated_brier;
        auto make = [&](std::string model, double train_value, double test_value, std::vector<double> w) {
          StudyRow row;
          row.replicate = replicate;
          row.generator = process;
          row.scenario = scenario;
          row.loss = kind;
          row.model = std::move(model);
          row.train_value = train_value;
          row.test_value = test_value;
          row.weights = std::move(w);
          row.censor_rate = censored.realized_rate;
          return row;
        };
        const std::size_t Kf = fit.learner_ids.size();
        std::vector<double> test_losses(Kf);
        for (std::size_t k = 0; k < Kf; ++k) {
          test_losses[k] = loss(kind, column(P_end, k), ibs ? column(P_mid, k) : std::vector<double>{});
          rows.push_back(make(fit.learner_ids[k], lr.cv_losses[k], test_losses[k], expand(one_hot(k, Kf))));
        }
        const auto& w = lr.weights.omega;
        StudyRow esl = make("eSL", lr.weights.achieved_loss,
                            loss(kind, mix(P_end, w), ibs ? mix(P_mid, w) : std::vector<double>{}), expand(w));
        esl.converged = lr.weights.converged;
        rows.push_back(esl);
        StudyRow dsl = make("dSL", lr.cv_losses[lr.discrete], test_losses[lr.discrete], expand(one_hot(lr.discrete, Kf)));
        dsl.selected = fit.learner_ids[lr.discrete];
        rows.push_back(dsl);
        std::size_t om = 0;
        for (std::size_t k = 1; k < Kf; ++k)
          if (lower_is_better(kind) ? test_losses[k] < test_losses[om] : test_losses[k] > test_losses[om]) om = k;
        StudyRow omr = make("OM", lr.cv_losses[om], test_losses[om], expand(one_hot(om, Kf)));
        omr.selected = fit.learner_ids[om];
        rows.push_back(omr);
      }
    } catch (const Error& e) {
      if (!log) throw;
      log->failures.push_back({replicate, scenario, e.module() + ": " + e.what()});
    }
  }
  return rows;
}

StudyResult run_study(const SimConfig& config) {
  config.validate();
  StudyResult result;
  for (const auto& s : study_library(config)) result.learner_ids.push_back(s.id);
  std::vector<std::vector<StudyRow>> per(config.replications);
  std::vector<StudyLog> logs(config.replications);
  parallel_for(config.replications, config.threads, [&](std::size_t r) { per[r] = run_replicate(config, r, &logs[r]); });
  for (std::size_t r = 0; r < config.replications; ++r) {
    result.rows.insert(result.rows.end(), per[r].begin(), per[r].end());
    auto& L = result.log;
    L.failures.insert(L.failures.end(), logs[r].failures.begin(), logs[r].failures.end());
    L.warnings.insert(L.warnings.end(), logs[r].warnings.begin(), logs[r].warnings.end());
  }
  return result;
}

void write_study_rows(const StudyResult& result, std::ostream& out) {
  out << "replicate,generator,scenario,loss,model,selected,train_value,test_value";
  for (const auto& id : result.learner_ids) out << ",w_" << id;
  out << ",converged,censor_rate\n";
  for (const auto& r : result.rows) {
    out << r.replicate + 1 << ',' << to_string(r.generator) << ',' << to_string(r.scenario) << ','
        << to_string(r.loss) << ',' << r.model << ',' << r.selected << ',' << format_number(r.train_value) << ','
        << format_number(r.test_value);
    for (double w : r.weights) out << ',' << format_number(w);
    out << ',' << (r.converged ? 1 : 0) << ',' << format_number(r.censor_rate) << '\n';
  }
}

void write_study(const StudyResult& result, const SimConfig& config, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  {
    std::ofstream out(directory / "study.csv");
    if (!out) throw ConfigError(kModule, "cannot write " + (directory / "study.csv").string());
    write_study_rows(result, out);
  }
  {
    std::ofstream out(directory / "config.json");
    nlohmann::json j = config;
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out(directory / "log.csv");
    out << "replicate,scenario,severity,message\n";
    auto emit = [&](const StudyNote& n, const char* severity) {
      std::string msg = n.message;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << n.replicate + 1 << ',' << to_string(n.scenario) << ',' << severity << ",\"" << msg << "\"\n";
    };
    for (const auto& f : result.log.failures) emit(f, "failure");
    for (const auto& w : result.log.warnings) emit(w, "warning");
  }
}

}  // namespace dynsl
