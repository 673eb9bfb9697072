#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dynsl/error.hpp"
#include "dynsl/parallel.hpp"
#include "dynsl/report.hpp"
#include "dynsl/simulator.hpp"
#include "dynsl/study.hpp"
#include "dynsl/superlearner.hpp"
#include "dynsl/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dynsl;

namespace {

constexpr const char* kModule = "cli";

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError(kModule, "config field '" + field + "': " + why);
}

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& prefix = "") {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) bad_field(prefix + it.key(), "unknown field");
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& prefix = "") {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad_field(prefix + key, "has the wrong type");
  }
}

struct DataPaths {
  fs::path baseline;
  fs::path longitudinal;
  CsvSchema schema;
};

struct WindowSpec {
  PredictionWindow window;
  std::size_t folds = 5;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = available cores
  fs::path out = "dynsl-out";
  std::optional<DataPaths> data;
  std::optional<DataPaths> test_data;
  std::vector<WindowSpec> windows;
  std::vector<MetricKind> losses{MetricKind::brier, MetricKind::integrated_brier, MetricKind::tv_auc};
  std::size_t auc_starts = 10;
  BrierPairing pairing = BrierPairing::conventional;
  AucOrientation orientation = AucOrientation::conventional;
  std::vector<LearnerSpec> library;
  fs::path ensemble;
  fs::path study;
  SimConfig simulation = SimConfig::defaults();
  std::size_t export_replicate = 1;
  CensoringScenario export_scenario = CensoringScenario::random;
};

CsvSchema read_schema(const json& j, const std::string& prefix) {
  CsvSchema s;
  if (!j.is_object()) bad_field(prefix, "expected an object");
  reject_unknown(j, {"id", "event_time", "event", "covariates", "long_id", "biomarker", "time", "value", "biomarkers",
                     "delimiter"},
                 prefix + ".");
  s.id = get(j, "id", s.id, prefix + ".");
  s.event_time = get(j, "event_time", s.event_time, prefix + ".");
  s.event = get(j, "event", s.event, prefix + ".");
  s.covariates = get(j, "covariates", s.covariates, prefix + ".");
  s.long_id = get(j, "long_id", s.long_id, prefix + ".");
  s.biomarker = get(j, "biomarker", s.biomarker, prefix + ".");
  s.time = get(j, "time", s.time, prefix + ".");
  s.value = get(j, "value", s.value, prefix + ".");
  s.biomarkers = get(j, "biomarkers", s.biomarkers, prefix + ".");
  const auto d = get(j, "delimiter", std::string(","), prefix + ".");
  if (d.size() != 1) bad_field(prefix + ".delimiter", "expected a single character");
  s.delimiter = d[0];
  return s;
}

DataPaths read_data(const json& j, const std::string& prefix, const fs::path& base) {
  if (!j.is_object()) bad_field(prefix, "expected an object");
  reject_unknown(j, {"baseline", "longitudinal", "schema"}, prefix + ".");
  if (!j.contains("baseline") || !j.contains("longitudinal"))
    bad_field(prefix, "needs both 'baseline' and 'longitudinal' paths");
  DataPaths d;
  d.baseline = base / get(j, "baseline", std::string(), prefix + ".");
  d.longitudinal = base / get(j, "longitudinal", std::string(), prefix + ".");
  if (j.contains("schema")) d.schema = read_schema(j.at("schema"), prefix + ".schema");
  return d;
}

std::string mode_string(const json& j, const char* key, const char* fallback) {
  const auto s = get(j, key, std::string(fallback));
  if (s != "verbatim" && s != "conventional") bad_field(key, "expected verbatim or conventional");
  return s;
}

RunConfig parse_config(const json& j, const fs::path& base) {
  if (!j.is_object()) bad_field("<root>", "expected an object");
  reject_unknown(j, {"seed", "threads", "out", "data", "test_data", "windows", "losses", "auc_starts", "pairing",
                     "orientation", "library", "ensemble", "study", "simulation", "export"});
  RunConfig c;
  c.seed = get(j, "seed", c.seed);
  c.threads = get(j, "threads", c.threads);
  if (j.contains("out")) c.out = base / get(j, "out", std::string());
  if (j.contains("data")) c.data = read_data(j.at("data"), "data", base);
  if (j.contains("test_data")) c.test_data = read_data(j.at("test_data"), "test_data", base);
  if (j.contains("windows")) {
    if (!j.at("windows").is_array()) bad_field("windows", "expected an array");
    std::size_t i = 0;
    for (const auto& w : j.at("windows")) {
      const std::string p = "windows[" + std::to_string(i++) + "]";
      if (!w.is_object()) bad_field(p, "expected an object with t, u and folds");
      reject_unknown(w, {"t", "u", "folds"}, p + ".");
      if (!w.contains("t") || !w.contains("u")) bad_field(p, "needs both t and u");
      WindowSpec s;
      try {
        s.window = PredictionWindow::make(get(w, "t", 0.0, p + "."), get(w, "u", 0.0, p + "."));
      } catch (const DomainError& e) {
        bad_field(p, e.what());
      }
      s.folds = get(w, "folds", s.folds, p + ".");
      if (s.folds < 2) bad_field(p + ".folds", "must be at least 2");
      c.windows.push_back(s);
    }
  }
  if (j.contains("losses")) {
    c.losses.clear();
    for (const auto& name : get(j, "losses", std::vector<std::string>{})) {
      try {
        c.losses.push_back(metric_kind_from_string(name));
      } catch (const Error& e) {
        bad_field("losses", e.what());
      }
    }
    if (c.losses.empty()) bad_field("losses", "at least one loss required");
  }
  c.auc_starts = get(j, "auc_starts", c.auc_starts);
  if (c.auc_starts < 1) bad_field("auc_starts", "must be at least 1");
  c.pairing = mode_string(j, "pairing", "conventional") == "verbatim" ? BrierPairing::verbatim : BrierPairing::conventional;
  c.orientation =
      mode_string(j, "orientation", "conventional") == "verbatim" ? AucOrientation::verbatim : AucOrientation::conventional;
  if (j.contains("library")) {
    if (!j.at("library").is_array()) bad_field("library", "expected an array of learners");
    for (const auto& l : j.at("library")) {
      LearnerSpec s = l.get<LearnerSpec>();
      s.validate();
      c.library.push_back(std::move(s));
    }
  }
  if (j.contains("ensemble")) c.ensemble = base / get(j, "ensemble", std::string());
  if (j.contains("study")) c.study = base / get(j, "study", std::string());
  if (j.contains("simulation")) from_json(j.at("simulation"), c.simulation);
  if (j.contains("export")) {
    const auto& e = j.at("export");
    if (!e.is_object()) bad_field("export", "expected an object");
    reject_unknown(e, {"replicate", "scenario"}, "export.");
    c.export_replicate = get(e, "replicate", c.export_replicate, "export.");
    if (c.export_replicate < 1) bad_field("export.replicate", "replicates are numbered from 1");
    c.export_scenario = scenario_from_string(get(e, "scenario", std::string("random"), "export."));
  }
  return c;
}

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(kModule, std::string("cannot open ") + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(kModule, path.string() + " is not valid JSON: " + e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError(kModule, "cannot write " + path.string());
  return out;
}

Dataset load(const DataPaths& d) { return load_dataset(d.baseline, d.longitudinal, d.schema); }

std::vector<SuperLearnerFit> load_ensemble(const fs::path& path) {
  const json j = read_json_file(path, "ensemble");
  if (!j.contains("fits") || !j.at("fits").is_array())
    throw ParseError(kModule, path.string() + " is not an ensemble file (missing 'fits')");
  std::vector<SuperLearnerFit> fits;
  for (const auto& f : j.at("fits")) fits.push_back(SuperLearnerFit::from_json(f));
  return fits;
}

std::string window_tag(const PredictionWindow& w) { return format_number(w.t) + "-" + format_number(w.u); }

void write_cv_diagnostic(const SuperLearnerFit& fit, std::ostream& out) {
  out << "Cross-validated loss, window {" << format_number(fit.window.t) << ", " << format_number(fit.window.u)
      << "}\n";
  for (const auto& r : fit.losses) {
    out << "  " << to_string(r.kind) << ": eSL " << format_fixed(r.cv_ensemble_loss, 4) << ", dSL "
        << format_fixed(r.cv_losses[r.discrete], 4) << " (" << fit.learner_ids[r.discrete] << ")";
    if (!r.weights.converged) out << ", optimizer did not converge: weights fell back to the dSL";
    out << '\n';
  }
}

// ---- subcommands -------------------------------------------------------------

int cmd_simulate(RunConfig& c, bool export_only) {
  SimConfig& sim = c.simulation;
  sim.threads = c.threads;
  sim.validate();
  if (export_only) {
    const std::size_t r = c.export_replicate - 1;
    const ReplicateData d = simulate_replicate(sim, r);
    const CensoringOutcome cens = censor_replicate(sim, r, d, c.export_scenario);
    fs::create_directories(c.out);
    write_dataset(cens.data.subset(d.train_rows), c.out / "train_baseline.csv", c.out / "train_longitudinal.csv");
    write_dataset(cens.data.subset(d.test_rows), c.out / "test_baseline.csv", c.out / "test_longitudinal.csv");
    std::cout << "replicate " << c.export_replicate << " (" << to_string(d.process) << " generator, "
              << to_string(c.export_scenario) << " censoring, in-window rate " << format_fixed(cens.realized_rate, 3)
              << "): " << d.train_rows.size() << " training and " << d.test_rows.size() << " test subjects written to "
              << c.out.string() << '\n';
    return 0;
  }
  const StudyResult result = run_study(sim);
  write_study(result, sim, c.out);
  const auto summary = summarize_study(result);
  auto out = open_out(c.out / "summary.txt");
  write_text(summary, result.learner_ids, out);
  write_text(summary, result.learner_ids, std::cout);
  if (!result.log.failures.empty())
    std::cerr << result.log.failures.size() << " replicate/scenario runs failed and were skipped; see "
              << (c.out / "log.csv").string() << '\n';
  return 0;
}

int cmd_fit(const RunConfig& c) {
  if (!c.data) throw ConfigError(kModule, "config field 'data': required for fit");
  if (c.windows.empty()) throw ConfigError(kModule, "config field 'windows': at least one window required");
  if (c.library.empty()) throw ConfigError(kModule, "config field 'library': at least one learner required");
  const Dataset data = load(*c.data);

  json bundle{{"fits", json::array()}};
  std::ostringstream report;
  std::ofstream csv = open_out(c.out / "weights.csv");
  for (std::size_t i = 0; i < c.windows.size(); ++i) {
    SuperLearnerConfig sl;
    sl.library = c.library;
    sl.folds = c.windows[i].folds;
    sl.losses = c.losses;
    sl.auc_starts = c.auc_starts;
    sl.seed = derive_seed(c.seed, i);
    sl.pairing = c.pairing;
    sl.orientation = c.orientation;
    sl.threads = c.threads;
    const SuperLearnerFit fit = fit_super_learner(data, c.windows[i].window, sl);
    bundle["fits"].push_back(fit.to_json());

    const WeightTable table = weight_table(fit);
    if (i > 0) report << '\n';
    write_text(table, report);
    write_cv_diagnostic(fit, report);
    for (const auto& w : fit.warnings) report << "warning: " << w << '\n';
    std::ostringstream rows;
    write_csv(table, rows);
    std::string s = rows.str();
    if (i > 0) s.erase(0, s.find('\n') + 1);
    csv << s;
  }
  open_out(c.out / "ensemble.json") << bundle.dump(1) << '\n';
  open_out(c.out / "report.txt") << report.str();
  std::cout << report.str();
  return 0;
}

int cmd_predict(const RunConfig& c, const std::optional<DataPaths>& data_paths) {
  const auto fits = load_ensemble(c.ensemble);
  const auto& paths = data_paths ? data_paths : c.data;
  if (!paths) throw ConfigError(kModule, "config field 'data': required for predict (or pass --data)");
  const Dataset data = load(*paths);
  std::ofstream out = open_out(c.out / "predictions.csv");
  bool header = false;
  for (const auto& fit : fits) {
    const RiskSet rs = risk_set(data, fit.window.t);
    const Eigen::MatrixXd P = fit.learner_predictions(data, rs.indices, fit.window.u);
    std::vector<std::vector<double>> ens;
    for (const auto& r : fit.losses) ens.push_back(fit.predict(data, rs.indices, fit.window.u, r.kind));
    if (!header) {
      out << "t,u,id";
      for (const auto& id : fit.learner_ids) out << ',' << id;
      for (const auto& r : fit.losses) out << ",eSL_" << to_string(r.kind) << ",dSL_" << to_string(r.kind);
      out << '\n';
      header = true;
    }
    for (std::size_t i = 0; i < rs.size(); ++i) {
      out << format_number(fit.window.t) << ',' << format_number(fit.window.u) << ',' << data.subject(rs.indices[i]).id;
      for (Eigen::Index k = 0; k < P.cols(); ++k) out << ',' << format_number(P(static_cast<Eigen::Index>(i), k));
      for (std::size_t l = 0; l < fit.losses.size(); ++l)
        out << ',' << format_number(ens[l][i]) << ','
            << format_number(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fit.losses[l].discrete)));
      out << '\n';
    }
  }
  std::cout << "predictions written to " << (c.out / "predictions.csv").string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& c, const std::optional<DataPaths>& data_paths) {
  const auto fits = load_ensemble(c.ensemble);
  const auto& paths = data_paths ? data_paths : c.test_data;
  if (!paths) throw ConfigError(kModule, "config field 'test_data': required for evaluate (or pass --data)");
  const Dataset test = load(*paths);
  std::ostringstream text;
  std::ofstream csv = open_out(c.out / "metrics.csv");
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const MetricTable table = evaluate_fit(fits[i], test, c.pairing, c.orientation);
    if (i > 0) text << '\n';
    write_text(table, text);
    write_cv_diagnostic(fits[i], text);
    std::ostringstream rows;
    write_csv(table, rows);
    std::string s = rows.str();
    if (i > 0) s.erase(0, s.find('\n') + 1);
    csv << s;
  }
  open_out(c.out / "metrics.txt") << text.str();
  std::cout << text.str();
  return 0;
}

int cmd_report(const RunConfig& c) {
  if (!c.study.empty()) {
    const fs::path file = fs::is_directory(c.study) ? c.study / "study.csv" : c.study;
    std::ifstream in(file);
    if (!in) throw ConfigError(kModule, "cannot open study file " + file.string());
    const StudyResult result = read_study_rows(in);
    const auto summary = summarize_study(result);
    auto out = open_out(c.out / "summary.txt");
    write_text(summary, result.learner_ids, out);
    write_text(summary, result.learner_ids, std::cout);
    return 0;
  }
  const auto fits = load_ensemble(c.ensemble);
  std::ostringstream text;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (i > 0) text << '\n';
    write_text(weight_table(fits[i]), text);
    write_cv_diagnostic(fits[i], text);
  }
  open_out(c.out / "report.txt") << text.str();
  std::cout << text.str();
  return 0;
}

std::uint64_t parse_unsigned(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-')
    throw ConfigError(kModule, std::string(what) + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Super Learner ensembles of dynamic survival predictions"};
  app.require_subcommand(1);
  std::string config_path, out_dir, ensemble_path, study_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::vector<std::string> data_files;
  bool export_only = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (overrides DYNSL_THREADS and the config)");
    sub->add_option("--out", out_dir, "output directory (overrides DYNSL_OUT and the config)");
  };
  auto* simulate = app.add_subcommand("simulate", "run the censoring simulation study");
  common(simulate);
  simulate->add_flag("--export", export_only, "write one simulated train/test dataset instead of running the study");
  auto* fit = app.add_subcommand("fit", "fit the Super Learner on each configured window");
  common(fit);
  auto* predict = app.add_subcommand("predict", "predict conditional survival with a fitted ensemble");
  common(predict);
  auto* evaluate = app.add_subcommand("evaluate", "held-out BS, IBS and tv-AUC of a fitted ensemble");
  common(evaluate);
  auto* report = app.add_subcommand("report", "weight tables of an ensemble, or the summary of a study");
  common(report);
  for (auto* sub : {predict, evaluate, report}) sub->add_option("--ensemble", ensemble_path, "ensemble.json from fit");
  for (auto* sub : {predict, evaluate})
    sub->add_option("--data", data_files, "baseline and longitudinal files")->expected(2);
  report->add_option("--study", study_path, "study directory or study.csv from simulate");

  CLI11_PARSE(app, argc, argv);

  try {
    json j = json::object();
    fs::path base = fs::current_path();
    if (!config_path.empty()) {
      j = read_json_file(config_path, "config");
      base = fs::absolute(config_path).parent_path();
    }
    RunConfig c = parse_config(j, base);
    if (const char* env = std::getenv("DYNSL_THREADS")) c.threads = parse_unsigned(env, "DYNSL_THREADS");
    if (const char* env = std::getenv("DYNSL_OUT")) c.out = env;
    if (threads) c.threads = *threads;
    if (!out_dir.empty()) c.out = out_dir;
    if (seed) {
      c.seed = *seed;
      c.simulation.seed = *seed;
    }
    if (c.threads == 0) c.threads = default_threads();
    if (!ensemble_path.empty()) c.ensemble = ensemble_path;
    if (c.ensemble.empty()) c.ensemble = c.out / "ensemble.json";
    if (!study_path.empty()) c.study = study_path;
    std::optional<DataPaths> data;
    if (!data_files.empty()) data = DataPaths{data_files[0], data_files[1], c.data ? c.data->schema : CsvSchema{}};

    if (*simulate) return cmd_simulate(c, export_only);
    if (*fit) return cmd_fit(c);
    if (*predict) return cmd_predict(c, data);
    if (*evaluate) return cmd_evaluate(c, data);
    return cmd_report(c);
  } catch (const Error& e) {
    std::cerr << e.module() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
