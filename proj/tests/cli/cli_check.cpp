// Independent checks on files written by the dynsl command-line tool.
//   cli_check evaluate <ensemble.json> <baseline.csv> <longitudinal.csv> <metrics.csv>
//   cli_check predict  <ensemble.json> <predictions.csv>
//   cli_check weights  <weights.csv> <learner-count>
//   cli_check study    <study.csv> <replications> <scenarios> <losses>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dynsl/report.hpp"
#include "dynsl/superlearner.hpp"
#include "dynsl/text.hpp"

using namespace dynsl;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  if (!ok) {
    std::cerr << "FAIL: " << what << '\n';
    ++failures;
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("missing column " + name);
  }
};

Csv read_csv(const std::string& path) {
  std::istringstream in(slurp(path));
  Csv c;
  std::string line;
  std::getline(in, line);
  c.header = split_delimited(line, ',');
  while (std::getline(in, line))
    if (!line.empty()) c.rows.push_back(split_delimited(line, ','));
  return c;
}

double number(const std::string& s) {
  double x = 0.0;
  if (!parse_number(s, x)) throw std::runtime_error("not a number: '" + s + "'");
  return x;
}

std::vector<SuperLearnerFit> load_fits(const std::string& path) {
  const auto j = nlohmann::json::parse(slurp(path));
  std::vector<SuperLearnerFit> fits;
  for (const auto& f : j.at("fits")) fits.push_back(SuperLearnerFit::from_json(f));
  return fits;
}

void check_evaluate(char** a) {
  const auto fits = load_fits(a[0]);
  const Dataset test = load_dataset(a[1], a[2]);
  std::ostringstream expected;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    std::ostringstream rows;
    write_csv(evaluate_fit(fits[i], test), rows);
    std::string s = rows.str();
    if (i > 0) s.erase(0, s.find('\n') + 1);
    expected << s;
  }
  const std::string got = slurp(a[3]);
  expect(got == expected.str(), "metrics.csv differs from evaluate_fit on the same ensemble and data");
  for (const auto& fit : fits) {
    const std::string prefix = format_number(fit.window.t) + "," + format_number(fit.window.u) + ",KM,";
    expect(got.find(prefix) != std::string::npos, "Kaplan-Meier row missing for a window");
  }
}

void check_predict(char** a) {
  const auto fits = load_fits(a[0]);
  const Csv c = read_csv(a[1]);
  std::map<std::string, const SuperLearnerFit*> by_window;
  for (const auto& f : fits) by_window[format_number(f.window.t) + "," + format_number(f.window.u)] = &f;
  expect(!c.rows.empty(), "predictions.csv has rows");
  for (const auto& row : c.rows) {
    const SuperLearnerFit& fit = *by_window.at(row[0] + "," + row[1]);
    std::vector<double> p;
    for (const auto& id : fit.learner_ids) p.push_back(number(row[c.column(id)]));
    for (const auto& r : fit.losses) {
      double mix = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) mix += r.weights.omega[k] * p[k];
      const double esl = number(row[c.column("eSL_" + to_string(r.kind))]);
      const double dsl = number(row[c.column("dSL_" + to_string(r.kind))]);
      expect(std::fabs(esl - mix) <= 1e-12, "eSL equals the weighted sum of learner predictions");
      expect(dsl == p[r.discrete], "dSL equals the selected learner");
      expect(esl >= 0.0 && esl <= 1.0, "eSL is a probability");
    }
  }
}

void check_weights(char** a) {
  const Csv c = read_csv(a[0]);
  const std::size_t k = std::stoul(a[1]);
  const std::size_t t = c.column("t"), u = c.column("u"), loss = c.column("loss"), omega = c.column("omega");
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& row : c.rows) {
    auto& s = sums[row[t] + "," + row[u] + "," + row[loss]];
    s.first += number(row[omega]);
    ++s.second;
    if (k == 1) expect(number(row[omega]) == 1.0, "a single learner gets all the weight");
  }
  expect(!sums.empty(), "weights.csv has rows");
  for (const auto& [key, s] : sums) {
    expect(std::fabs(s.first - 1.0) <= 1e-9, "weights for " + key + " sum to one");
    expect(s.second == k, "one weight per learner for " + key);
  }
}

void check_study(char** a) {
  const Csv c = read_csv(a[0]);
  std::size_t k = 0;
  for (const auto& h : c.header) k += h.rfind("w_", 0) == 0;
  const std::size_t expected = std::stoul(a[1]) * std::stoul(a[2]) * std::stoul(a[3]) * (k + 3);
  expect(c.rows.size() == expected,
         "study.csv has " + std::to_string(c.rows.size()) + " rows, expected " + std::to_string(expected));
  const std::size_t model = c.column("model"), value = c.column("test_value");
  std::size_t esl = 0;
  for (const auto& row : c.rows) {
    esl += row[model] == "eSL";
    expect(std::isfinite(number(row[value])), "finite test value");
  }
  expect(esl * (k + 3) == c.rows.size(), "one eSL row per replicate, scenario and loss");
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::pair<int, void (*)(char**)>> modes{
      {"evaluate", {4, check_evaluate}}, {"predict", {2, check_predict}}, {"weights", {2, check_weights}},
      {"study", {4, check_study}}};
  if (argc < 2 || !modes.count(argv[1]) || argc != 2 + modes.at(argv[1]).first) {
    std::cerr << "usage: cli_check evaluate|predict|weights|study <files...>\n";
    return 2;
  }
  try {
    modes.at(argv[1]).second(argv + 2);
  } catch (const std::exception& e) {
    std::cerr << "FAIL: " << e.what() << '\n';
    return 1;
  }
  if (failures == 0) std::cout << "ok " << argv[1] << '\n';
  return failures == 0 ? 0 : 1;
}
