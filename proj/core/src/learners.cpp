#include "dynsl/learners.hpp"

#include <algorithm>
#include <cmath>

#include "dynsl/error.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "superlearner";
using json = nlohmann::json;

// JSON has no NaN or infinity; encode them as strings.
json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(kModule, "serialized learner: expected a number");
}

json nums(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> get_nums(const json& j) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(get_num(e));
  return out;
}

json vec_json(const Eigen::VectorXd& v) { return nums(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = get_nums(j);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Eigen::VectorXd row = m.row(r).transpose();
    rows.push_back(vec_json(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from(const json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = r == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) = vec_from(j[static_cast<std::size_t>(i)]).transpose();
  return m;
}

json tree_json(const RegressionTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, num(n.threshold), n.left, n.right, num(n.value)});
  return nodes;
}

RegressionTree tree_from(const json& j) {
  RegressionTree t;
  for (const auto& e : j)
    t.nodes.push_back({e[0].get<int>(), get_num(e[1]), e[2].get<int>(), e[3].get<int>(), get_num(e[4])});
  return t;
}

json boost_fit_json(const BoostFit& f) {
  json steps = json::array();
  for (const auto& s : f.selected) steps.push_back({{"features", s.spec.features}, {"tree", tree_json(s.tree)}});
  return {{"nu", num(f.nu)}, {"offset", num(f.offset)}, {"steps", steps}};
}

BoostFit boost_fit_from(const json& j) {
  BoostFit f;
  f.nu = get_num(j.at("nu"));
  f.offset = get_num(j.at("offset"));
  for (const auto& s : j.at("steps")) {
    BoostStep step;
    step.spec.features = s.at("features").get<std::vector<std::size_t>>();
    step.tree = tree_from(s.at("tree"));
    f.selected.push_back(std::move(step));
  }
  return f;
}

BoostOptions boost_options(const json& h) {
  BoostOptions o;
  if (h.contains("nu")) o.nu = h.at("nu").get<double>();
  if (h.contains("b_stop")) o.b_stop = h.at("b_stop").get<int>();
  if (h.contains("inner_folds")) o.inner_folds = h.at("inner_folds").get<std::size_t>();
  if (h.contains("interactions")) o.interactions = h.at("interactions").get<bool>();
  if (h.contains("max_depth_single")) o.max_depth_single = h.at("max_depth_single").get<int>();
  if (h.contains("max_depth_pair")) o.max_depth_pair = h.at("max_depth_pair").get<int>();
  if (h.contains("min_split")) o.min_split = h.at("min_split").get<std::size_t>();
  if (h.contains("min_bucket")) o.min_bucket = h.at("min_bucket").get<std::size_t>();
  return o;
}

json trajectory_json(const TrajectorySpec& t) {
  return t.kind == TrajectoryKind::linear ? json{{"kind", "linear"}} : json{{"kind", "spline"}, {"df", t.df}};
}

TrajectorySpec trajectory_from(const json& j) {
  TrajectorySpec t;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "linear") return t;
    if (s == "spline") {
      t.kind = TrajectoryKind::spline;
      return t;
    }
    throw ConfigError(kModule, "learner field 'trajectory': expected linear or spline");
  }
  const auto kind = j.value("kind", std::string("linear"));
  if (kind == "spline") {
    t.kind = TrajectoryKind::spline;
    t.df = j.value("df", std::size_t{3});
  } else if (kind != "linear") {
    throw ConfigError(kModule, "learner field 'trajectory.kind': expected linear or spline");
  }
  return t;
}

json truth_json(const LongitudinalTruth& L, const HazardTruth& h) {
  return {{"longitudinal",
           {{"beta", {L.beta(0), L.beta(1)}}, {"D", {{L.D(0, 0), L.D(0, 1)}, {L.D(1, 0), L.D(1, 1)}}}, {"sigma2", L.sigma2}}},
          {"hazard", {{"rate", h.rate}, {"shape", h.shape}, {"gamma", h.gamma}, {"alpha", h.alpha}}}};
}

void truth_from(const json& j, LongitudinalTruth& L, HazardTruth& h) {
  try {
    const auto& l = j.at("longitudinal");
    const auto b = l.at("beta").get<std::vector<double>>();
    const auto d = l.at("D").get<std::vector<std::vector<double>>>();
    if (b.size() != 2 || d.size() != 2 || d[0].size() != 2 || d[1].size() != 2)
      throw ConfigError(kModule, "oracle_joint: beta must have 2 entries and D must be 2x2");
    L.beta = Eigen::Vector2d(b[0], b[1]);
    L.D << d[0][0], d[0][1], d[1][0], d[1][1];
    L.sigma2 = l.at("sigma2").get<double>();
    const auto& hz = j.at("hazard");
    h.rate = hz.at("rate").get<double>();
    h.shape = hz.value("shape", 1.0);
    h.gamma = hz.at("gamma").get<std::vector<double>>();
    h.alpha = hz.at("alpha").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(kModule, std::string("oracle_joint hyperparameters: ") + e.what());
  }
}


// ---- concrete learners -------------------------------------------------------

class CoxLearner final : public FittedLearner {
 public:
  CoxLearner(std::string id, LearnerKind kind, LandmarkCoxModel model)
      : FittedLearner(std::move(id), kind, model.schema.landmark), model_(std::move(model)) {}

  std::vector<double> predict(const Dataset& data, std::span<const std::size_t> rows, double u) const override {
    return predict_landmark(model_, data, rows, u);
  }

  json to_json() const override {
    json j = header();
    j["schema"] = schema_to_json(model_.schema);
    j["coefficients"] = vec_json(model_.fit.coefficients);
    j["kept"] = model_.fit.kept;
    j["log_partial_likelihood"] = num(model_.fit.log_partial_likelihood);
    j["converged"] = model_.fit.converged;
    j["baseline_cumhaz"] = step_function_to_json(model_.baseline_cumhaz);
    j["last_event_time"] = num(model_.last_event_time);
    return j;
  }

  static std::unique_ptr<FittedLearner> from_json(const json& j) {
    LandmarkCoxModel m;
    m.schema = schema_from_json(j.at("schema"));
    m.fit.coefficients = vec_from(j.at("coefficients"));
    m.fit.kept = j.at("kept").get<std::vector<std::size_t>>();
    m.fit.log_partial_likelihood = get_num(j.at("log_partial_likelihood"));
    m.fit.converged = j.at("converged").get<bool>();
    m.fit.landmark = m.schema.landmark;
    m.baseline_cumhaz = step_function_from_json(j.at("baseline_cumhaz"));
    m.last_event_time = get_num(j.at("last_event_time"));
    return std::make_unique<CoxLearner>(j.at("id").get<std::string>(), learner_kind_from_string(j.at("kind")),
                                        std::move(m));
  }

 private:
  LandmarkCoxModel model_;
};

class BoostLearner final : public FittedLearner {
 public:
  BoostLearner(std::string id, LearnerKind kind, BoostedCoxModel model)
      : FittedLearner(std::move(id), kind, model.schema.landmark), model_(std::move(model)) {}

  std::vector<double> predict(const Dataset& data, std::span<const std::size_t> rows, double u) const override {
    return predict_boosted(model_, data, rows, u);
  }

  json to_json() const override {
    json j = header();
    j["schema"] = schema_to_json(model_.schema);
    j["fit"] = boost_fit_json(model_.fit);
    j["b_opt"] = model_.stopping.b_opt;
    j["baseline_cumhaz"] = step_function_to_json(model_.baseline_cumhaz);
    return j;
  }

  static std::unique_ptr<FittedLearner> from_json(const json& j) {
    BoostedCoxModel m;
    m.schema = schema_from_json(j.at("schema"));
    m.fit = boost_fit_from(j.at("fit"));
    m.stopping.b_opt = j.at("b_opt").get<std::size_t>();
    m.baseline_cumhaz = step_function_from_json(j.at("baseline_cumhaz"));
    return std::make_unique<BoostLearner>(j.at("id").get<std::string>(), learner_kind_from_string(j.at("kind")),
                                          std::move(m));
  }

 private:
  BoostedCoxModel model_;
};

class OracleLearner final : public FittedLearner {
 public:
  OracleLearner(std::string id, double t, LongitudinalTruth L, HazardTruth h)
      : FittedLearner(std::move(id), LearnerKind::oracle_joint, t), longitudinal_(std::move(L)), hazard_(std::move(h)) {}

  std::vector<double> predict(const Dataset& data, std::span<const std::size_t> rows, double u) const override {
    if (data.biomarker_count() < 1) throw DomainError(kModule, "oracle_joint needs one biomarker");
    if (data.covariate_count() != hazard_.gamma.size())
      throw DomainError(kModule, "oracle_joint: covariate count does not match the generating hazard");
    std::vector<double> out;
    out.reserve(rows.size());
    const PredictionWindow w{landmark(), u};
    std::vector<double> times, values;
    for (std::size_t i : rows) {
      times.clear();
      values.clear();
      for (const auto& m : data.history(i, 0, landmark())) {
        times.push_back(m.time);
        values.push_back(m.value);
      }
      out.push_back(oracle_joint_predict(longitudinal_, hazard_, data.subject(i).baseline, times, values, w));
    }
    return out;
  }

  json to_json() const override {
    json j = header();
    j["hyperparameters"] = truth_json(longitudinal_, hazard_);
    return j;
  }

  static std::unique_ptr<FittedLearner> from_json(const json& j) {
    LongitudinalTruth L;
    HazardTruth h;
    truth_from(j.at("hyperparameters"), L, h);
    return std::make_unique<OracleLearner>(j.at("id").get<std::string>(), get_num(j.at("landmark")), L, h);
  }

 private:
  LongitudinalTruth longitudinal_;
  HazardTruth hazard_;
};

class ConstantLearner final : public FittedLearner {
 public:
  ConstantLearner(std::string id, double t, double value)
      : FittedLearner(std::move(id), LearnerKind::custom, t), value_(value) {}

  std::vector<double> predict(const Dataset&, std::span<const std::size_t> rows, double) const override {
    return std::vector<double>(rows.size(), value_);
  }

  json to_json() const override {
    json j = header();
    j["value"] = num(value_);
    return j;
  }

 private:
  double value_;
};

class KmLearner final : public FittedLearner {
 public:
  KmLearner(std::string id, double t, StepFunction km)
      : FittedLearner(std::move(id), LearnerKind::kaplan_meier, t), km_(std::move(km)) {}

  std::vector<double> predict(const Dataset&, std::span<const std::size_t> rows, double u) const override {
    if (u < landmark()) throw DomainError(kModule, "horizon precedes the landmark");
    return std::vector<double>(rows.size(), km_(u));
  }

  json to_json() const override {
    json j = header();
    j["survival"] = step_function_to_json(km_);
    return j;
  }

  static std::unique_ptr<FittedLearner> from_json(const json& j) {
    return std::make_unique<KmLearner>(j.at("id").get<std::string>(), get_num(j.at("landmark")),
                                       step_function_from_json(j.at("survival")));
  }

 private:
  StepFunction km_;
};

bool is_boost(LearnerKind k) { return k == LearnerKind::one_stage_boost || k == LearnerKind::two_stage_boost; }

}  // namespace

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::one_stage_cox: return "one_stage_cox";
    case LearnerKind::two_stage_cox: return "two_stage_cox";
    case LearnerKind::one_stage_boost: return "one_stage_boost";
    case LearnerKind::two_stage_boost: return "two_stage_boost";
    case LearnerKind::oracle_joint: return "oracle_joint";
    case LearnerKind::custom: return "custom";
    case LearnerKind::kaplan_meier: return "kaplan_meier";
  }
  return "custom";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  for (auto k : {LearnerKind::one_stage_cox, LearnerKind::two_stage_cox, LearnerKind::one_stage_boost,
                 LearnerKind::two_stage_boost, LearnerKind::oracle_joint, LearnerKind::custom, LearnerKind::kaplan_meier})
    if (to_string(k) == name) return k;
  throw ConfigError(kModule, "unknown learner kind '" + name + "'");
}

void LearnerSpec::validate() const {
  if (id.empty()) throw ConfigError(kModule, "learner id must not be empty");
  if (!hyperparameters.is_object())
    throw ConfigError(kModule, "learner '" + id + "': hyperparameters must be an object");
  static const std::vector<std::string> boost_keys = {"nu", "b_stop", "inner_folds", "interactions",
                                                      "max_depth_single", "max_depth_pair", "min_split", "min_bucket"};
  std::vector<std::string> allowed;
  if (is_boost(kind)) allowed = boost_keys;
  if (kind == LearnerKind::oracle_joint) allowed = {"longitudinal", "hazard"};
  if (kind == LearnerKind::custom) allowed = {"value"};
  for (auto it = hyperparameters.begin(); it != hyperparameters.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(kModule, "learner '" + id + "': hyperparameter '" + it.key() + "' does not apply to kind " +
                                     to_string(kind));
  if (trajectory.kind == TrajectoryKind::spline && trajectory.df < 1)
    throw ConfigError(kModule, "learner '" + id + "': spline df must be at least 1");
  try {
    if (is_boost(kind)) {
      const auto o = boost_options(hyperparameters);
      if (!(o.nu > 0.0 && o.nu <= 1.0)) throw ConfigError(kModule, "learner '" + id + "': nu must lie in (0, 1]");
      if (o.b_stop < 1) throw ConfigError(kModule, "learner '" + id + "': b_stop must be at least 1");
      if (o.inner_folds < 2) throw ConfigError(kModule, "learner '" + id + "': inner_folds must be at least 2");
    }
    if (kind == LearnerKind::oracle_joint) {
      LongitudinalTruth L;
      HazardTruth h;
      truth_from(hyperparameters, L, h);
    }
    if (kind == LearnerKind::custom) {
      const double v = hyperparameters.value("value", 0.5);
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(kModule, "learner '" + id + "': value must lie in [0, 1]");
    }
  } catch (const json::exception& e) {
    throw ConfigError(kModule, "learner '" + id + "': " + e.what());
  }
}

void to_json(json& j, const LearnerSpec& s) {
  j = json{{"id", s.id}, {"kind", to_string(s.kind)}, {"hyperparameters", s.hyperparameters}};
  if (s.kind == LearnerKind::two_stage_cox || s.kind == LearnerKind::two_stage_boost)
    j["trajectory"] = trajectory_json(s.trajectory);
}

void from_json(const json& j, LearnerSpec& s) {
  if (!j.is_object()) throw ConfigError(kModule, "learner spec must be an object");
  if (!j.contains("id") || !j.at("id").is_string()) throw ConfigError(kModule, "learner field 'id': missing or not a string");
  s.id = j.at("id").get<std::string>();
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError(kModule, "learner '" + s.id + "' field 'kind': missing or not a string");
  s.kind = learner_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("trajectory")) s.trajectory = trajectory_from(j.at("trajectory"));
  s.hyperparameters = j.value("hyperparameters", json::object());
  s.validate();
}

LearnerSpec oracle_spec(const std::string& id, const SimConfig& config) {
  LearnerSpec s;
  s.id = id;
  s.kind = LearnerKind::oracle_joint;
  s.hyperparameters = truth_json(config.longitudinal, config.joint_hazard);
  return s;
}

json FittedLearner::header() const {
  return {{"id", id_}, {"kind", to_string(kind_)}, {"landmark", num(landmark_)}};
}

std::unique_ptr<FittedLearner> train_learner(const LearnerSpec& spec, const Dataset& train, double t,
                                             std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case LearnerKind::one_stage_cox:
    case LearnerKind::two_stage_cox: {
      const auto stage = spec.kind == LearnerKind::one_stage_cox ? LandmarkStage::one_stage : LandmarkStage::two_stage;
      return std::make_unique<CoxLearner>(spec.id, spec.kind, train_landmark_cox(train, t, stage, spec.trajectory));
    }
    case LearnerKind::one_stage_boost:
    case LearnerKind::two_stage_boost: {
      const auto stage = spec.kind == LearnerKind::one_stage_boost ? LandmarkStage::one_stage : LandmarkStage::two_stage;
      return std::make_unique<BoostLearner>(
          spec.id, spec.kind,
          train_boosted_cox(train, t, stage, spec.trajectory, boost_options(spec.hyperparameters), seed));
    }
    case LearnerKind::oracle_joint: {
      LongitudinalTruth L;
      HazardTruth h;
      truth_from(spec.hyperparameters, L, h);
      return std::make_unique<OracleLearner>(spec.id, t, L, h);
    }
    case LearnerKind::custom:
      return std::make_unique<ConstantLearner>(spec.id, t, spec.hyperparameters.value("value", 0.5));
    case LearnerKind::kaplan_meier:
      return train_km_reference(train, t, spec.id);
  }
  throw ConfigError(kModule, "unsupported learner kind");
}

std::unique_ptr<FittedLearner> train_km_reference(const Dataset& train, double t, const std::string& id) {
  const RiskSet rs = risk_set(train, t);
  if (rs.empty()) throw DomainError(kModule, "no training subjects at risk at the landmark");
  std::vector<double> times;
  std::vector<bool> events;
  for (std::size_t i : rs.indices) {
    times.push_back(train.subject(i).observed_time);
    events.push_back(train.subject(i).event);
  }
  return std::make_unique<KmLearner>(id, t, kaplan_meier(times, events));
}

std::unique_ptr<FittedLearner> learner_from_json(const json& j) {
  try {
    const auto kind = learner_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
      case LearnerKind::one_stage_cox:
      case LearnerKind::two_stage_cox: return CoxLearner::from_json(j);
      case LearnerKind::one_stage_boost:
      case LearnerKind::two_stage_boost: return BoostLearner::from_json(j);
      case LearnerKind::oracle_joint: return OracleLearner::from_json(j);
      case LearnerKind::custom:
        return std::make_unique<ConstantLearner>(j.at("id").get<std::string>(), get_num(j.at("landmark")),
                                                 get_num(j.at("value")));
      case LearnerKind::kaplan_meier: return KmLearner::from_json(j);
    }
  } catch (const json::exception& e) {
    throw ConfigError(kModule, std::string("serialized learner is malformed: ") + e.what());
  }
  throw ConfigError(kModule, "serialized learner is malformed");
}

json step_function_to_json(const StepFunction& f) {
  return {{"initial", num(f.initial())}, {"times", nums(f.jump_times())}, {"values", nums(f.values())}};
}

StepFunction step_function_from_json(const json& j) {
  return StepFunction(get_num(j.at("initial")), get_nums(j.at("times")), get_nums(j.at("values")));
}

json lmm_fit_to_json(const LmmFit& f) {
  json basis = {{"kind", f.time_basis.kind == TrajectoryKind::linear ? "linear" : "spline"}};
  if (f.time_basis.kind == TrajectoryKind::spline) {
    basis["interior"] = nums(f.time_basis.spline.interior_knots());
    basis["boundary"] = {num(f.time_basis.spline.boundary().first), num(f.time_basis.spline.boundary().second)};
  }
  return {{"fixed_effects", vec_json(f.fixed_effects)},
          {"re_covariance", mat_json(f.re_covariance)},
          {"residual_variance", num(f.residual_variance)},
          {"random_effects", f.random_effects == RandomEffects::intercept ? "intercept" : "intercept_slope"},
          {"basis", basis},
          {"log_likelihood", num(f.log_likelihood)},
          {"converged", f.converged},
          {"iterations", f.iterations}};
}

LmmFit lmm_fit_from_json(const json& j) {
  LmmFit f;
  f.fixed_effects = vec_from(j.at("fixed_effects"));
  f.re_covariance = mat_from(j.at("re_covariance"));
  f.residual_variance = get_num(j.at("residual_variance"));
  f.random_effects = j.at("random_effects").get<std::string>() == "intercept" ? RandomEffects::intercept
                                                                              : RandomEffects::intercept_slope;
  const auto& b = j.at("basis");
  if (b.at("kind").get<std::string>() == "spline") {
    f.time_basis.kind = TrajectoryKind::spline;
    f.time_basis.spline =
        SplineBasis(get_nums(b.at("interior")), {get_num(b.at("boundary")[0]), get_num(b.at("boundary")[1])});
  }
  f.log_likelihood = get_num(j.at("log_likelihood"));
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<int>();
  return f;
}

json schema_to_json(const FeatureSchema& s) {
  json fits = json::array();
  for (const auto& f : s.lmm_fits) fits.push_back(lmm_fit_to_json(f));
  return {{"stage", s.stage == LandmarkStage::one_stage ? "one_stage" : "two_stage"},
          {"landmark", num(s.landmark)},
          {"names", s.names},
          {"covariate_medians", nums(s.covariate_medians)},
          {"biomarker_medians", nums(s.biomarker_medians)},
          {"lmm_fits", fits}};
}

FeatureSchema schema_from_json(const json& j) {
  FeatureSchema s;
  s.stage = j.at("stage").get<std::string>() == "one_stage" ? LandmarkStage::one_stage : LandmarkStage::two_stage;
  s.landmark = get_num(j.at("landmark"));
  s.names = j.at("names").get<std::vector<std::string>>();
  s.covariate_medians = get_nums(j.at("covariate_medians"));
  s.biomarker_medians = get_nums(j.at("biomarker_medians"));
  for (const auto& f : j.at("lmm_fits")) s.lmm_fits.push_back(lmm_fit_from_json(f));
  return s;
}

}  // namespace dynsl
