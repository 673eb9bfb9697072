#include "dynsl/simulator.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <random>

#include "dynsl/error.hpp"
#include "dynsl/mixed_model.hpp"
#include "dynsl/optim.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "simulator";
constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double linear_covariate_term(const std::vector<double>& coef, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < coef.size() && k < w.size(); ++k) s += coef[k] * w[k];
  return s;
}

double time_bisect(const std::function<double(double)>& f, double lo, double hi) {
  auto tol = [](double a, double b) { return std::fabs(b - a) < 1e-8; };
  const auto r = boost::math::tools::bisect(f, lo, hi, tol);
  return 0.5 * (r.first + r.second);
}

// ---- json helpers ---------------------------------------------------------

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError(kModule, "config field '" + field + "': " + why);
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_field(prefix + key, "has the wrong type");
  }
}

nlohmann::json hazard_json(const HazardTruth& h) {
  return {{"rate", h.rate}, {"shape", h.shape}, {"gamma", h.gamma}, {"alpha", h.alpha}};
}

void read_hazard(const nlohmann::json& j, HazardTruth& h, const std::string& prefix) {
  if (!j.is_object()) bad_field(prefix, "expected an object");
  read(j, "rate", h.rate, prefix + ".");
  read(j, "shape", h.shape, prefix + ".");
  read(j, "gamma", h.gamma, prefix + ".");
  read(j, "alpha", h.alpha, prefix + ".");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string to_string(CensoringScenario s) {
  switch (s) {
    case CensoringScenario::none: return "none";
    case CensoringScenario::random: return "random";
    case CensoringScenario::informative: return "informative";
  }
  return "none";
}

std::string to_string(EventProcess p) { return p == EventProcess::landmark ? "landmark" : "joint"; }

CensoringScenario scenario_from_string(const std::string& name) {
  if (name == "none" || name == "1") return CensoringScenario::none;
  if (name == "random" || name == "2") return CensoringScenario::random;
  if (name == "informative" || name == "3") return CensoringScenario::informative;
  throw ConfigError(kModule, "unknown censoring scenario '" + name + "' (use none, random or informative)");
}

double HazardTruth::baseline(double s) const noexcept {
  if (shape == 1.0) return rate;
  if (s <= 0.0) return shape < 1.0 ? kInf : 0.0;
  return rate * shape * std::pow(s, shape - 1.0);
}

double HazardTruth::baseline_cumulative(double s) const noexcept {
  if (s <= 0.0) return 0.0;
  return shape == 1.0 ? rate * s : rate * std::pow(s, shape);
}

SimConfig SimConfig::defaults() {
  SimConfig c;
  c.longitudinal.beta = Eigen::Vector2d(0.0, 0.15);
  c.longitudinal.D << 1.0, 0.0, 0.0, 0.01;
  c.longitudinal.sigma2 = 0.25;
  c.covariates = {{"w1", CovariateLaw::Family::bernoulli, 0.5, 0.0}, {"w2", CovariateLaw::Family::normal, 0.0, 1.0}};
  c.landmark_hazard.rate = 0.05;
  c.landmark_hazard.shape = 1.0;
  c.landmark_hazard.gamma = {0.3, 0.3};
  c.landmark_hazard.alpha = 0.8;
  c.joint_hazard = c.landmark_hazard;
  c.measurement = {12.0, 8, true};
  c.informative.value_coefficient = -2.0;
  c.informative.covariate_coefficients = {-2.0, -2.0};
  c.window = PredictionWindow{4.0, 7.0};
  return c;
}

SimConfig SimConfig::desk_profile() {
  SimConfig c = defaults();
  c.replications = 20;
  return c;
}

void SimConfig::validate() const {
  if (test_n < 1 || n <= test_n) throw ConfigError(kModule, "config field 'n': need n > test_n >= 1");
  if (replications < 1) throw ConfigError(kModule, "config field 'replications': must be at least 1");
  if (folds < 2) throw ConfigError(kModule, "config field 'folds': must be at least 2");
  if (!(target_censor_rate > 0.0 && target_censor_rate < 1.0))
    throw ConfigError(kModule, "config field 'target_censor_rate': must lie in (0, 1)");
  if (!(joint_fraction >= 0.0 && joint_fraction <= 1.0))
    throw ConfigError(kModule, "config field 'joint_fraction': must lie in [0, 1]");
  if (!(window.t >= 0.0 && window.t < window.u && std::isfinite(window.u)))
    throw ConfigError(kModule, "config field 'window': need 0 <= t < u");
  if (!(admin_horizon > window.u)) throw ConfigError(kModule, "config field 'admin_horizon': must exceed the horizon u");
  if (!(measurement.span > 0.0)) throw ConfigError(kModule, "config field 'measurement.span': must be positive");
  if (!(longitudinal.sigma2 >= 0.0)) throw ConfigError(kModule, "config field 'longitudinal.sigma2': must be >= 0");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(longitudinal.D);
  if ((longitudinal.D - longitudinal.D.transpose()).cwiseAbs().maxCoeff() > 1e-12 || eig.eigenvalues().minCoeff() < -1e-12)
    throw ConfigError(kModule, "config field 'longitudinal.D': must be symmetric positive semi-definite");
  for (const auto* h : {&landmark_hazard, &joint_hazard}) {
    const std::string name = h == &landmark_hazard ? "landmark_hazard" : "joint_hazard";
    if (!(h->rate > 0.0)) throw ConfigError(kModule, "config field '" + name + ".rate': must be positive");
    if (!(h->shape >= 1.0)) throw ConfigError(kModule, "config field '" + name + ".shape': must be >= 1");
    if (h->gamma.size() != covariates.size())
      throw ConfigError(kModule, "config field '" + name + ".gamma': need one coefficient per covariate");
  }
  if (!informative.covariate_coefficients.empty() && informative.covariate_coefficients.size() != covariates.size())
    throw ConfigError(kModule, "config field 'informative.covariate_coefficients': need one per covariate");
  for (const auto& cov : covariates) {
    if (cov.family == CovariateLaw::Family::bernoulli && !(cov.a >= 0.0 && cov.a <= 1.0))
      throw ConfigError(kModule, "config field 'covariates." + cov.name + "': probability must lie in [0, 1]");
    if (cov.family == CovariateLaw::Family::normal && !(cov.b >= 0.0))
      throw ConfigError(kModule, "config field 'covariates." + cov.name + "': sd must be >= 0");
  }
  if (losses.empty()) throw ConfigError(kModule, "config field 'losses': at least one loss required");
  if (auc_starts < 1) throw ConfigError(kModule, "config field 'auc_starts': must be at least 1");
  if (scenarios.empty()) throw ConfigError(kModule, "config field 'scenarios': at least one scenario required");
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& cov : c.covariates) {
    if (cov.family == CovariateLaw::Family::bernoulli)
      covs.push_back({{"name", cov.name}, {"family", "bernoulli"}, {"p", cov.a}});
    else
      covs.push_back({{"name", cov.name}, {"family", "normal"}, {"mean", cov.a}, {"sd", cov.b}});
  }
  std::vector<std::string> scen, losses;
  for (auto s : c.scenarios) scen.push_back(to_string(s));
  for (auto l : c.losses) losses.push_back(to_string(l));
  const auto& L = c.longitudinal;
  j = nlohmann::json{
      {"n", c.n},
      {"test_n", c.test_n},
      {"replications", c.replications},
      {"folds", c.folds},
      {"seed", c.seed},
      {"longitudinal",
       {{"beta", {L.beta(0), L.beta(1)}},
        {"D", {{L.D(0, 0), L.D(0, 1)}, {L.D(1, 0), L.D(1, 1)}}},
        {"sigma2", L.sigma2}}},
      {"covariates", covs},
      {"landmark_hazard", hazard_json(c.landmark_hazard)},
      {"joint_hazard", hazard_json(c.joint_hazard)},
      {"measurement",
       {{"span", c.measurement.span}, {"visits", c.measurement.visits}, {"baseline_visit", c.measurement.baseline_visit}}},
      {"informative",
       {{"value_coefficient", c.informative.value_coefficient},
        {"covariate_coefficients", c.informative.covariate_coefficients}}},
      {"scenarios", scen},
      {"target_censor_rate", c.target_censor_rate},
      {"window", {c.window.t, c.window.u}},
      {"admin_horizon", c.admin_horizon},
      {"joint_fraction", c.joint_fraction},
      {"losses", losses},
      {"auc_starts", c.auc_starts},
      {"pairing", c.pairing == BrierPairing::verbatim ? "verbatim" : "conventional"},
      {"orientation", c.orientation == AucOrientation::verbatim ? "verbatim" : "conventional"},
      {"threads", c.threads},
  };
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  if (!j.is_object()) bad_field("<root>", "expected an object");
  static const std::vector<std::string> known = {
      "n", "test_n", "replications", "folds", "seed", "longitudinal", "covariates", "landmark_hazard",
      "joint_hazard", "measurement", "informative", "scenarios", "target_censor_rate", "window",
      "admin_horizon", "joint_fraction", "losses", "auc_starts", "pairing", "orientation", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) bad_field(it.key(), "unknown field");

  read(j, "n", c.n);
  read(j, "test_n", c.test_n);
  read(j, "replications", c.replications);
  read(j, "folds", c.folds);
  read(j, "seed", c.seed);
  if (j.contains("longitudinal")) {
    const auto& L = j.at("longitudinal");
    if (!L.is_object()) bad_field("longitudinal", "expected an object");
    if (L.contains("beta")) {
      std::vector<double> b;
      read(L, "beta", b, "longitudinal.");
      if (b.size() != 2) bad_field("longitudinal.beta", "expected [intercept, slope]");
      c.longitudinal.beta = Eigen::Vector2d(b[0], b[1]);
    }
    if (L.contains("D")) {
      std::vector<std::vector<double>> d;
      read(L, "D", d, "longitudinal.");
      if (d.size() != 2 || d[0].size() != 2 || d[1].size() != 2) bad_field("longitudinal.D", "expected a 2x2 matrix");
      c.longitudinal.D << d[0][0], d[0][1], d[1][0], d[1][1];
    }
    read(L, "sigma2", c.longitudinal.sigma2, "longitudinal.");
  }
  if (j.contains("covariates")) {
    const auto& arr = j.at("covariates");
    if (!arr.is_array()) bad_field("covariates", "expected an array");
    c.covariates.clear();
    for (const auto& e : arr) {
      CovariateLaw law;
      read(e, "name", law.name, "covariates.");
      std::string fam = "normal";
      read(e, "family", fam, "covariates.");
      if (fam == "bernoulli") {
        law.family = CovariateLaw::Family::bernoulli;
        law.a = 0.5;
        read(e, "p", law.a, "covariates.");
      } else if (fam == "normal") {
        read(e, "mean", law.a, "covariates.");
        read(e, "sd", law.b, "covariates.");
      } else {
        bad_field("covariates.family", "expected normal or bernoulli");
      }
      c.covariates.push_back(law);
    }
  }
  if (j.contains("landmark_hazard")) read_hazard(j.at("landmark_hazard"), c.landmark_hazard, "landmark_hazard");
  if (j.contains("joint_hazard")) read_hazard(j.at("joint_hazard"), c.joint_hazard, "joint_hazard");
  if (j.contains("measurement")) {
    const auto& m = j.at("measurement");
    read(m, "span", c.measurement.span, "measurement.");
    read(m, "visits", c.measurement.visits, "measurement.");
    read(m, "baseline_visit", c.measurement.baseline_visit, "measurement.");
  }
  if (j.contains("informative")) {
    const auto& m = j.at("informative");
    read(m, "value_coefficient", c.informative.value_coefficient, "informative.");
    read(m, "covariate_coefficients", c.informative.covariate_coefficients, "informative.");
  }
  if (j.contains("scenarios")) {
    std::vector<std::string> s;
    read(j, "scenarios", s);
    c.scenarios.clear();
    for (const auto& x : s) c.scenarios.push_back(scenario_from_string(x));
  }
  read(j, "target_censor_rate", c.target_censor_rate);
  if (j.contains("window")) {
    std::vector<double> w;
    read(j, "window", w);
    if (w.size() != 2) bad_field("window", "expected [t, u]");
    c.window = PredictionWindow{w[0], w[1]};
  }
  read(j, "admin_horizon", c.admin_horizon);
  read(j, "joint_fraction", c.joint_fraction);
  if (j.contains("losses")) {
    std::vector<std::string> s;
    read(j, "losses", s);
    c.losses.clear();
    try {
      for (const auto& x : s) c.losses.push_back(metric_kind_from_string(x));
    } catch (const Error& e) {
      bad_field("losses", e.what());
    }
  }
  read(j, "auc_starts", c.auc_starts);
  if (j.contains("pairing")) {
    std::string s;
    read(j, "pairing", s);
    if (s != "verbatim" && s != "conventional") bad_field("pairing", "expected verbatim or conventional");
    c.pairing = s == "verbatim" ? BrierPairing::verbatim : BrierPairing::conventional;
  }
  if (j.contains("orientation")) {
    std::string s;
    read(j, "orientation", s);
    if (s != "verbatim" && s != "conventional") bad_field("orientation", "expected verbatim or conventional");
    c.orientation = s == "verbatim" ? AucOrientation::verbatim : AucOrientation::conventional;
  }
  read(j, "threads", c.threads);
}

SimulatedCohort gen_longitudinal(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(config.longitudinal.D);
  const Eigen::Matrix2d root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  const double sigma = std::sqrt(config.longitudinal.sigma2);
  const auto& beta = config.longitudinal.beta;

  SimulatedCohort c;
  const std::size_t n = config.n;
  c.covariates.resize(n);
  c.visit_times.resize(n);
  c.values.resize(n);
  c.truth.random_effects.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& law : config.covariates) {
      if (law.family == CovariateLaw::Family::bernoulli)
        c.covariates[i].push_back(unif(rng) < law.a ? 1.0 : 0.0);
      else
        c.covariates[i].push_back(law.a + law.b * stdnorm(rng));
    }
    const Eigen::Vector2d z(stdnorm(rng), stdnorm(rng));
    const Eigen::Vector2d b = root * z;
    c.truth.random_effects[i] = b;

    auto& times = c.visit_times[i];
    if (config.measurement.baseline_visit) times.push_back(0.0);
    for (std::size_t k = 0; k < config.measurement.visits; ++k) times.push_back(config.measurement.span * unif(rng));
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (double s : times) {
      const double eta = beta(0) + b(0) + (beta(1) + b(1)) * s;
      c.values[i].push_back(eta + sigma * stdnorm(rng));
    }
  }
  c.truth.event_time.assign(n, kInf);
  c.truth.censor_time.assign(n, kInf);
  return c;
}

std::vector<double> gen_events_landmark(const SimulatedCohort& cohort, const SimConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  const HazardTruth& h = config.landmark_hazard;
  const double cap = config.admin_horizon;
  std::vector<double> out(cohort.covariates.size(), kInf);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& times = cohort.visit_times[i];
    const auto& values = cohort.values[i];
    const double base = linear_covariate_term(h.gamma, cohort.covariates[i]);
    // Before the first visit only the covariates act.
    double start = 0.0;
    for (std::size_t l = 0; l <= times.size(); ++l) {
      const double lp = l == 0 ? base : base + h.alpha * values[l - 1];
      if (l > 0) start = times[l - 1];
      const double end = l < times.size() ? times[l] : cap;
      if (end <= start) continue;
      const double e = expo(rng);
      const double H0 = h.baseline_cumulative(start) + e / std::exp(lp);
      const double T = h.shape == 1.0 ? H0 / h.rate : std::pow(H0 / h.rate, 1.0 / h.shape);
      if (T < end) {
        out[i] = T;
        break;
      }
    }
  }
  return out;
}

double joint_cumulative_hazard(const SimConfig& config, const std::vector<double>& covariates,
                               const Eigen::Vector2d& random_effects, double from, double to) {
  if (to <= from) return 0.0;
  const HazardTruth& h = config.joint_hazard;
  const double a = config.longitudinal.beta(0) + random_effects(0);
  const double c = config.longitudinal.beta(1) + random_effects(1);
  const double lin = linear_covariate_term(h.gamma, covariates);
  return adaptive_simpson([&](double s) { return h.baseline(s) * std::exp(lin + h.alpha * (a + c * s)); }, from, to,
                          1e-8);
}

std::vector<double> gen_events_joint(const SimulatedCohort& cohort, const SimConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double cap = config.admin_horizon;
  std::vector<double> out(cohort.covariates.size(), kInf);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double target = -std::log(u);
    const auto& w = cohort.covariates[i];
    const auto& b = cohort.truth.random_effects[i];
    try {
      if (joint_cumulative_hazard(config, w, b, 0.0, cap) < target) continue;
      out[i] = time_bisect([&](double s) { return joint_cumulative_hazard(config, w, b, 0.0, s) - target; }, 0.0, cap);
    } catch (const NumericalError& e) {
      throw NumericalError(kModule, "subject " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

Dataset observed_dataset(const SimulatedCohort& cohort, const std::vector<double>& censor_time, const SimConfig& config) {
  const std::size_t n = cohort.covariates.size();
  std::vector<std::string> cov_names;
  for (const auto& law : config.covariates) cov_names.push_back(law.name);
  std::vector<SubjectRecord> subjects(n);
  std::vector<Measurement> meas;
  for (std::size_t i = 0; i < n; ++i) {
    const double tstar = cohort.truth.event_time[i];
    const double c = std::min(censor_time[i], config.admin_horizon);
    auto& s = subjects[i];
    s.id = "s" + std::to_string(i + 1);
    s.baseline = cohort.covariates[i];
    s.event = tstar <= c;
    s.observed_time = s.event ? tstar : c;
    const auto& times = cohort.visit_times[i];
    for (std::size_t l = 0; l < times.size(); ++l)
      if (times[l] <= s.observed_time) meas.push_back({i, 0, times[l], cohort.values[i][l]});
  }
  return Dataset(std::move(cov_names), {"y"}, std::move(subjects), std::move(meas));
}

double in_window_censoring_rate(const Dataset& data, const PredictionWindow& window) {
  std::size_t at_risk = 0, censored = 0;
  for (const auto& s : data.subjects()) {
    if (s.observed_time <= window.t) continue;
    ++at_risk;
    if (!s.event && s.observed_time <= window.u) ++censored;
  }
  return at_risk == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(at_risk);
}

namespace {

// In-window censoring fraction without building a Dataset.
double window_rate(const std::vector<double>& tstar, const std::vector<double>& cens, const SimConfig& config) {
  std::size_t at_risk = 0, censored = 0;
  const auto& w = config.window;
  for (std::size_t i = 0; i < tstar.size(); ++i) {
    const double c = std::min(cens[i], config.admin_horizon);
    const bool event = tstar[i] <= c;
    const double T = event ? tstar[i] : c;
    if (T <= w.t) continue;
    ++at_risk;
    if (!event && T <= w.u) ++censored;
  }
  return at_risk == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(at_risk);
}

// The in-window rate is not monotone in the censoring parameter: at the
// extreme most subjects are censored before the landmark. Scan from the
// low-censoring end `from` toward `to` and bisect on the first crossing.
double calibrate(const std::function<double(double)>& rate, double from, double to, double target, bool log_grid,
                 const std::string& what) {
  constexpr int kGrid = 200;
  auto at = [&](int k) {
    const double f = static_cast<double>(k) / kGrid;
    return log_grid ? from * std::pow(to / from, f) : from + (to - from) * f;
  };
  double prev = at(0), best_rate = rate(prev);
  if (best_rate >= target) return prev;
  for (int k = 1; k <= kGrid; ++k) {
    const double x = at(k);
    const double r = rate(x);
    best_rate = std::max(best_rate, r);
    if (r >= target) {
      double lo = prev, hi = x;  // rate(lo) < target <= rate(hi)
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) < target ? lo : hi) = mid;
      }
      return std::fabs(rate(lo) - target) <= std::fabs(rate(hi) - target) ? lo : hi;
    }
    prev = x;
  }
  throw ConfigError(kModule, what + ": target in-window censoring rate " + format_number(target) +
                                 " is not reachable (largest attainable " + format_number(best_rate) +
                                 "); lower target_censor_rate or strengthen the censoring coefficients");
}

}  // namespace

CensoringOutcome apply_censoring(const SimulatedCohort& cohort, CensoringScenario scenario, const SimConfig& config,
                                 std::uint64_t seed) {
  const std::size_t n = cohort.covariates.size();
  const auto& tstar = cohort.truth.event_time;
  CensoringOutcome out;
  out.censor_time.assign(n, kInf);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  if (scenario == CensoringScenario::random) {
    std::vector<double> draw(n);
    for (auto& d : draw) d = unif(rng);
    auto censor = [&](double cmax) {
      std::vector<double> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = cmax * draw[i];
      return c;
    };
    const double cmax = calibrate([&](double c) { return window_rate(tstar, censor(c), config); },
                                  1e4 * config.window.u, config.window.u, config.target_censor_rate, true,
                                  "random censoring");
    out.censor_time = censor(cmax);
    out.calibrated_parameter = cmax;
  } else if (scenario == CensoringScenario::informative) {
    const std::size_t first = config.measurement.baseline_visit ? 1 : 0;
    std::vector<std::vector<double>> draw(n);
    std::vector<double> fixed(n);
    for (std::size_t i = 0; i < n; ++i) {
      draw[i].resize(cohort.visit_times[i].size());
      for (auto& d : draw[i]) d = unif(rng);
      fixed[i] = config.informative.covariate_coefficients.empty()
                     ? 0.0
                     : linear_covariate_term(config.informative.covariate_coefficients, cohort.covariates[i]);
    }
    auto censor = [&](double a) {
      std::vector<double> c(n, kInf);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& times = cohort.visit_times[i];
        for (std::size_t l = first; l < times.size(); ++l) {
          if (times[l] >= tstar[i]) break;
          const double p = logistic(a + config.informative.value_coefficient * cohort.values[i][l] + fixed[i]);
          if (draw[i][l] < p) {
            c[i] = times[l];
            break;
          }
        }
      }
      return c;
    };
    const double a = calibrate([&](double x) { return window_rate(tstar, censor(x), config); }, -40.0, 40.0,
                               config.target_censor_rate, false, "informative censoring");
    out.censor_time = censor(a);
    out.calibrated_parameter = a;
  }
  out.data = observed_dataset(cohort, out.censor_time, config);
  out.realized_rate = in_window_censoring_rate(out.data, config.window);
  return out;
}

double oracle_joint_predict(const LongitudinalTruth& longitudinal, const HazardTruth& hazard,
                            const std::vector<double>& covariates, std::span<const double> times,
                            std::span<const double> values, const PredictionWindow& window) {
  if (window.u <= window.t) return 1.0;
  LmmFit truth;
  truth.fixed_effects = longitudinal.beta;
  truth.re_covariance = longitudinal.D;
  truth.residual_variance = longitudinal.sigma2;
  truth.time_basis.kind = TrajectoryKind::linear;
  truth.random_effects = RandomEffects::intercept_slope;
  const Eigen::VectorXd b = blup(truth, times, values);
  const double a = longitudinal.beta(0) + b(0);
  const double c = longitudinal.beta(1) + b(1);
  const double lin = linear_covariate_term(hazard.gamma, covariates);
  double H = 0.0;
  try {
    H = adaptive_simpson([&](double s) { return hazard.baseline(s) * std::exp(lin + hazard.alpha * (a + c * s)); },
                         window.t, window.u, 1e-8);
  } catch (const NumericalError& e) {
    throw NumericalError(kModule, std::string("oracle prediction: ") + e.what());
  }
  return std::exp(-H);
}

}  // namespace dynsl
