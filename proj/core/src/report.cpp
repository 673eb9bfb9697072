#include "dynsl/report.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "dynsl/error.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "superlearner";

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::size_t name_width(const std::vector<std::string>& names, std::size_t min) {
  std::size_t w = min;
  for (const auto& n : names) w = std::max(w, n.size());
  return w + 2;
}

std::string window_label(const PredictionWindow& w) {
  return "window {" + format_number(w.t) + ", " + format_number(w.u) + "}";
}

}  // namespace

WeightTable weight_table(const SuperLearnerFit& fit) {
  WeightTable t;
  t.window = fit.window;
  t.learners = fit.learner_ids;
  t.dropped = fit.dropped;
  t.omega.assign(t.learners.size(), {});
  t.dsl.assign(t.learners.size(), {});
  for (const auto& r : fit.losses) {
    t.losses.push_back(r.kind);
    t.converged.push_back(r.weights.converged);
    for (std::size_t k = 0; k < t.learners.size(); ++k) {
      t.omega[k].push_back(r.weights.omega[k]);
      t.dsl[k].push_back(k == r.discrete);
    }
  }
  return t;
}

void write_text(const WeightTable& t, std::ostream& out) {
  const std::size_t w0 = name_width(t.learners, 7);
  out << "Super Learner weights, " << window_label(t.window) << " (* = discrete SL)\n";
  out << pad("learner", w0);
  for (auto l : t.losses) out << lpad(to_string(l), 10);
  out << '\n';
  for (std::size_t k = 0; k < t.learners.size(); ++k) {
    out << pad(t.learners[k], w0);
    for (std::size_t c = 0; c < t.losses.size(); ++c)
      out << lpad(format_fixed(t.omega[k][c], 2) + (t.dsl[k][c] ? "*" : " "), 10);
    out << '\n';
  }
  out << pad("converged", w0);
  for (bool c : t.converged) out << lpad(c ? "yes " : "no ", 10);
  out << '\n';
  for (const auto& d : t.dropped) out << "dropped: " << d << '\n';
}

void write_csv(const WeightTable& t, std::ostream& out) {
  out << "t,u,learner,loss,omega,dsl,converged\n";
  for (std::size_t c = 0; c < t.losses.size(); ++c)
    for (std::size_t k = 0; k < t.learners.size(); ++k)
      out << format_number(t.window.t) << ',' << format_number(t.window.u) << ',' << t.learners[k] << ','
          << to_string(t.losses[c]) << ',' << format_number(t.omega[k][c]) << ',' << (t.dsl[k][c] ? 1 : 0) << ','
          << (t.converged[c] ? 1 : 0) << '\n';
}

MetricTable evaluate_fit(const SuperLearnerFit& fit, const Dataset& test, BrierPairing pairing,
                         AucOrientation orientation) {
  const RiskSet rs = risk_set(test, fit.window.t);
  if (rs.empty()) throw DomainError(kModule, "no test subjects at risk at the landmark");
  const LossEvaluator loss(test, fit.window, pairing, orientation);
  const Eigen::MatrixXd P_end = fit.learner_predictions(test, rs.indices, fit.window.u);
  const Eigen::MatrixXd P_mid = fit.learner_predictions(test, rs.indices, fit.window.midpoint());
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  MetricTable t;
  t.window = fit.window;
  t.at_risk = rs.size();
  t.losses = {MetricKind::brier, MetricKind::integrated_brier, MetricKind::tv_auc};
  auto eval = [&](MetricKind kind, const std::vector<double>& e, const std::vector<double>& m) {
    try {
      return loss(kind, e, m);
    } catch (const EstimabilityError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const std::size_t K = fit.learner_ids.size();
  for (std::size_t k = 0; k < K; ++k) {
    t.models.push_back(fit.learner_ids[k]);
    std::vector<double> row;
    for (auto kind : t.losses)
      row.push_back(eval(kind, vec(P_end.col(static_cast<Eigen::Index>(k))), vec(P_mid.col(static_cast<Eigen::Index>(k)))));
    t.value.push_back(row);
  }
  std::vector<double> esl, dsl;
  for (std::size_t c = 0; c < t.losses.size(); ++c) {
    const MetricKind kind = t.losses[c];
    const LossResult* r = nullptr;
    for (const auto& x : fit.losses)
      if (x.kind == kind) r = &x;
    if (!r) {
      esl.push_back(std::numeric_limits<double>::quiet_NaN());
      dsl.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Eigen::Map<const Eigen::VectorXd> w(r->weights.omega.data(), static_cast<Eigen::Index>(K));
    esl.push_back(eval(kind, vec(P_end * w), vec(P_mid * w)));
    dsl.push_back(t.value[r->discrete][c]);
  }
  t.models.push_back("eSL");
  t.value.push_back(esl);
  t.models.push_back("dSL");
  t.value.push_back(dsl);
  if (fit.km_reference) {
    const auto e = fit.km_reference->predict(test, rs.indices, fit.window.u);
    const auto m = fit.km_reference->predict(test, rs.indices, fit.window.midpoint());
    std::vector<double> row;
    for (auto kind : t.losses) row.push_back(eval(kind, e, m));
    t.models.push_back("KM");
    t.value.push_back(row);
  }
  return t;
}

void write_text(const MetricTable& t, std::ostream& out) {
  const std::size_t w0 = name_width(t.models, 5);
  out << "Held-out performance, " << window_label(t.window) << ", " << t.at_risk << " at risk\n";
  out << pad("model", w0);
  for (auto l : t.losses) {
    out << lpad(to_string(l), 10);
    if (l == MetricKind::tv_auc) out << lpad("1-" + to_string(l), 10);
  }
  out << '\n';
  for (std::size_t k = 0; k < t.models.size(); ++k) {
    out << pad(t.models[k], w0);
    for (std::size_t c = 0; c < t.losses.size(); ++c) {
      const double v = t.value[k][c];
      out << lpad(std::isnan(v) ? "NA" : format_fixed(v, 4), 10);
      if (t.losses[c] == MetricKind::tv_auc) out << lpad(std::isnan(v) ? "NA" : format_fixed(1.0 - v, 4), 10);
    }
    out << '\n';
  }
}

void write_csv(const MetricTable& t, std::ostream& out) {
  out << "t,u,model,loss,value\n";
  for (std::size_t k = 0; k < t.models.size(); ++k)
    for (std::size_t c = 0; c < t.losses.size(); ++c)
      out << format_number(t.window.t) << ',' << format_number(t.window.u) << ',' << t.models[k] << ','
          << to_string(t.losses[c]) << ',' << format_number(t.value[k][c]) << '\n';
  // the complementary orientation of tv-AUC
  for (std::size_t k = 0; k < t.models.size(); ++k)
    for (std::size_t c = 0; c < t.losses.size(); ++c)
      if (t.losses[c] == MetricKind::tv_auc)
        out << format_number(t.window.t) << ',' << format_number(t.window.u) << ',' << t.models[k] << ",1-"
            << to_string(t.losses[c]) << ',' << format_number(1.0 - t.value[k][c]) << '\n';
}

std::vector<StudySummaryRow> summarize_study(const StudyResult& result) {
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, StudySummaryRow> acc;
  std::vector<Key> order;
  const std::size_t K = result.learner_ids.size();
  for (const auto& r : result.rows) {
    const Key key{static_cast<int>(r.scenario), static_cast<int>(r.loss), r.model};
    auto [it, inserted] = acc.try_emplace(key);
    auto& s = it->second;
    if (inserted) {
      order.push_back(key);
      s.scenario = r.scenario;
      s.loss = r.loss;
      s.model = r.model;
      s.mean_weights.assign(K, 0.0);
      s.converged_fraction = 0.0;
    }
    ++s.count;
    s.mean_train += r.train_value;
    s.mean_test += r.test_value;
    for (std::size_t k = 0; k < K && k < r.weights.size(); ++k) s.mean_weights[k] += r.weights[k];
    s.converged_fraction += r.converged ? 1.0 : 0.0;
  }
  auto rank = [&](const std::string& model) {
    const auto it = std::find(result.learner_ids.begin(), result.learner_ids.end(), model);
    if (it != result.learner_ids.end()) return static_cast<std::size_t>(it - result.learner_ids.begin());
    static const std::vector<std::string> tail = {"eSL", "dSL", "OM"};
    return K + static_cast<std::size_t>(std::find(tail.begin(), tail.end(), model) - tail.begin());
  };
  std::sort(order.begin(), order.end(), [&](const Key& a, const Key& b) {
    return std::make_tuple(std::get<0>(a), std::get<1>(a), rank(std::get<2>(a))) <
           std::make_tuple(std::get<0>(b), std::get<1>(b), rank(std::get<2>(b)));
  });
  std::vector<StudySummaryRow> out;
  for (const auto& key : order) {
    auto s = acc.at(key);
    const double n = static_cast<double>(s.count);
    s.mean_train /= n;
    s.mean_test /= n;
    for (auto& w : s.mean_weights) w /= n;
    s.converged_fraction /= n;
    out.push_back(std::move(s));
  }
  return out;
}

void write_text(const std::vector<StudySummaryRow>& summary, const std::vector<std::string>& learner_ids,
                std::ostream& out) {
  std::vector<std::string> models;
  for (const auto& s : summary) models.push_back(s.model);
  const std::size_t w0 = name_width(models, 5);
  int last_scenario = -1, last_loss = -1;
  for (const auto& s : summary) {
    if (static_cast<int>(s.scenario) != last_scenario || static_cast<int>(s.loss) != last_loss) {
      last_scenario = static_cast<int>(s.scenario);
      last_loss = static_cast<int>(s.loss);
      out << "\nscenario " << to_string(s.scenario) << ", loss " << to_string(s.loss) << '\n';
      out << pad("model", w0) << lpad("n", 5) << lpad("train", 10) << lpad("test", 10);
      for (const auto& id : learner_ids) out << lpad("w_" + id, std::max<std::size_t>(id.size() + 4, 8));
      out << lpad("conv", 8) << '\n';
    }
    out << pad(s.model, w0) << lpad(std::to_string(s.count), 5) << lpad(format_fixed(s.mean_train, 4), 10)
        << lpad(format_fixed(s.mean_test, 4), 10);
    for (std::size_t k = 0; k < learner_ids.size(); ++k)
      out << lpad(format_fixed(s.mean_weights[k], 2), std::max<std::size_t>(learner_ids[k].size() + 4, 8));
    out << lpad(format_fixed(s.converged_fraction, 2), 8) << '\n';
  }
}

StudyResult read_study_rows(std::istream& in) {
  StudyResult result;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(kModule, "study file is empty");
  const auto header = split_delimited(line, ',');
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(kModule, "study file lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_rep = col("replicate"), c_gen = col("generator"), c_scen = col("scenario"), c_loss = col("loss"),
                    c_model = col("model"), c_sel = col("selected"), c_train = col("train_value"),
                    c_test = col("test_value"), c_conv = col("converged"), c_rate = col("censor_rate");
  std::vector<std::size_t> w_cols;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c].rfind("w_", 0) == 0) {
      w_cols.push_back(c);
      result.learner_ids.push_back(header[c].substr(2));
    }
  std::size_t lineno = 1;
  auto number = [&](const std::string& f, const char* name) {
    double x = 0.0;
    if (!parse_number(f, x))
      throw ParseError(kModule, "study file line " + std::to_string(lineno) + ", column " + name + ": '" + f + "'");
    return x;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_delimited(line, ',');
    if (f.size() != header.size())
      throw SchemaError(kModule, "study file line " + std::to_string(lineno) + " has the wrong number of fields");
    StudyRow r;
    r.replicate = static_cast<std::size_t>(number(f[c_rep], "replicate")) - 1;
    r.generator = f[c_gen] == "joint" ? EventProcess::joint : EventProcess::landmark;
    r.scenario = scenario_from_string(f[c_scen]);
    r.loss = metric_kind_from_string(f[c_loss]);
    r.model = f[c_model];
    r.selected = f[c_sel];
    r.train_value = number(f[c_train], "train_value");
    r.test_value = number(f[c_test], "test_value");
    for (std::size_t c : w_cols) r.weights.push_back(number(f[c], "weight"));
    r.converged = f[c_conv] == "1";
    r.censor_rate = number(f[c_rate], "censor_rate");
    result.rows.push_back(std::move(r));
  }
  return result;
}

}  // namespace dynsl
