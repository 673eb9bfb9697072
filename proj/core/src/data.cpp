#include "dynsl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dynsl/error.hpp"
#include "dynsl/text.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "data_core";

}  // namespace

// ---------------------------------------------------------------------------
// text helpers

std::string format_number(double x) {
  if (std::isnan(x)) return {};
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double x, int digits) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_delimited(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

bool parse_number(std::string_view field, double& out) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

// ---------------------------------------------------------------------------
// PredictionWindow

PredictionWindow PredictionWindow::make(double t, double u) {
  if (!std::isfinite(t) || !std::isfinite(u) || t < 0.0 || !(t < u)) {
    throw DomainError(kModule, "prediction window requires 0 <= t < u (got t=" + format_number(t) +
                                   ", u=" + format_number(u) + ")");
  }
  return PredictionWindow{t, u};
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<std::string> covariate_names, std::vector<std::string> biomarker_names,
                 std::vector<SubjectRecord> subjects, std::vector<Measurement> measurements)
    : covariate_names_(std::move(covariate_names)),
      biomarker_names_(std::move(biomarker_names)),
      subjects_(std::move(subjects)),
      measurements_(std::move(measurements)) {
  if (subjects_.empty()) throw DomainError(kModule, "dataset needs at least one subject");
  if (biomarker_names_.empty()) throw DomainError(kModule, "dataset needs at least one biomarker");

  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    const auto& s = subjects_[i];
    if (!std::isfinite(s.observed_time) || s.observed_time < 0.0) {
      throw DomainError(kModule, "subject '" + s.id + "' has invalid observed time");
    }
    if (s.baseline.size() != covariate_names_.size()) {
      throw SchemaError(kModule, "subject '" + s.id + "' has " + std::to_string(s.baseline.size()) +
                                     " covariates, expected " + std::to_string(covariate_names_.size()));
    }
    if (!index_of_.emplace(s.id, i).second) {
      throw ReferentialError(kModule, "duplicate subject id '" + s.id + "'");
    }
  }

  const std::size_t n = subjects_.size();
  const std::size_t m_count = biomarker_names_.size();
  for (const auto& m : measurements_) {
    if (m.subject >= n) throw ReferentialError(kModule, "measurement refers to unknown subject index");
    if (m.biomarker >= m_count) throw ReferentialError(kModule, "measurement refers to unknown biomarker");
    if (!std::isfinite(m.time) || m.time < 0.0 || !std::isfinite(m.value)) {
      throw DomainError(kModule, "measurement of subject '" + subjects_[m.subject].id + "' is not finite");
    }
    if (m.time > subjects_[m.subject].observed_time) {
      throw ReferentialError(kModule, "measurement at time " + format_number(m.time) + " for subject '" +
                                          subjects_[m.subject].id + "' lies after its observed time " +
                                          format_number(subjects_[m.subject].observed_time));
    }
  }

  std::stable_sort(measurements_.begin(), measurements_.end(), [](const Measurement& a, const Measurement& b) {
    if (a.subject != b.subject) return a.subject < b.subject;
    if (a.biomarker != b.biomarker) return a.biomarker < b.biomarker;
    return a.time < b.time;
  });

  offsets_.assign(n * m_count + 1, 0);
  for (const auto& m : measurements_) ++offsets_[m.subject * m_count + m.biomarker + 1];
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());

  for (std::size_t k = 1; k < measurements_.size(); ++k) {
    const auto& a = measurements_[k - 1];
    const auto& b = measurements_[k];
    if (a.subject == b.subject && a.biomarker == b.biomarker && !(a.time < b.time)) {
      throw ReferentialError(kModule, "subject '" + subjects_[a.subject].id + "' has two measurements of '" +
                                          biomarker_names_[a.biomarker] + "' at time " + format_number(a.time));
    }
  }
}

std::span<const Measurement> Dataset::history(std::size_t i, std::size_t m) const {
  const std::size_t k = i * biomarker_names_.size() + m;
  return std::span<const Measurement>(measurements_).subspan(offsets_[k], offsets_[k + 1] - offsets_[k]);
}

std::span<const Measurement> Dataset::history(std::size_t i, std::size_t m, double t) const {
  auto all = history(i, m);
  auto end = std::upper_bound(all.begin(), all.end(), t,
                              [](double value, const Measurement& x) { return value < x.time; });
  return all.first(static_cast<std::size_t>(end - all.begin()));
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  auto it = index_of_.find(id);
  if (it == index_of_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> Dataset::observed_times() const {
  std::vector<double> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_) out.push_back(s.observed_time);
  return out;
}

std::vector<bool> Dataset::events() const {
  std::vector<bool> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_) out.push_back(s.event);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<SubjectRecord> subjects;
  std::vector<Measurement> measurements;
  subjects.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    subjects.push_back(subjects_.at(i));
    for (std::size_t m = 0; m < biomarker_names_.size(); ++m) {
      for (auto meas : history(i, m)) {
        meas.subject = r;
        measurements.push_back(meas);
      }
    }
  }
  return Dataset(covariate_names_, biomarker_names_, std::move(subjects), std::move(measurements));
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.covariate_names_ != b.covariate_names_ || a.biomarker_names_ != b.biomarker_names_) return false;
  if (a.subjects_.size() != b.subjects_.size() || a.measurements_ != b.measurements_) return false;
  for (std::size_t i = 0; i < a.subjects_.size(); ++i) {
    const auto& x = a.subjects_[i];
    const auto& y = b.subjects_[i];
    if (x.id != y.id || x.observed_time != y.observed_time || x.event != y.event) return false;
    if (x.baseline.size() != y.baseline.size()) return false;
    for (std::size_t c = 0; c < x.baseline.size(); ++c) {
      const bool both_nan = std::isnan(x.baseline[c]) && std::isnan(y.baseline[c]);
      if (!both_nan && x.baseline[c] != y.baseline[c]) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// CSV input / output

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(const std::filesystem::path& path, char delim) {
  std::ifstream in(path);
  if (!in) throw SchemaError(kModule, "cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_delimited(line, delim);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError(kModule, path.filename().string() + " row " + std::to_string(line_no) + ": expected " +
                                    std::to_string(table.header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw SchemaError(kModule, "'" + path.string() + "' has no header row");
  return table;
}

std::size_t column(const Table& table, const std::string& name, const std::filesystem::path& path) {
  auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) {
    throw SchemaError(kModule, "missing column '" + name + "' in " + path.filename().string());
  }
  return static_cast<std::size_t>(it - table.header.begin());
}

double required_number(const Table& table, std::size_t row, std::size_t col, const std::filesystem::path& path) {
  double x = 0.0;
  if (!parse_number(table.rows[row][col], x)) {
    throw ParseError(kModule, path.filename().string() + " row " + std::to_string(table.line_numbers[row]) +
                                  ": column '" + table.header[col] + "' is not numeric ('" + table.rows[row][col] +
                                  "')");
  }
  return x;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& baseline_path, const std::filesystem::path& longitudinal_path,
                     const CsvSchema& schema) {
  const Table base = read_table(baseline_path, schema.delimiter);
  const std::size_t id_col = column(base, schema.id, baseline_path);
  const std::size_t time_col = column(base, schema.event_time, baseline_path);
  const std::size_t event_col = column(base, schema.event, baseline_path);

  std::vector<std::string> covariate_names = schema.covariates;
  if (covariate_names.empty()) {
    for (std::size_t c = 0; c < base.header.size(); ++c) {
      if (c != id_col && c != time_col && c != event_col) covariate_names.push_back(base.header[c]);
    }
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& name : covariate_names) cov_cols.push_back(column(base, name, baseline_path));

  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t r = 0; r < base.rows.size(); ++r) {
    SubjectRecord s;
    s.id = base.rows[r][id_col];
    s.observed_time = required_number(base, r, time_col, baseline_path);
    const double ev = required_number(base, r, event_col, baseline_path);
    if (ev != 0.0 && ev != 1.0) {
      throw ParseError(kModule, baseline_path.filename().string() + " row " + std::to_string(base.line_numbers[r]) +
                                    ": event indicator must be 0 or 1");
    }
    s.event = ev == 1.0;
    for (std::size_t c : cov_cols) {
      double x = std::numeric_limits<double>::quiet_NaN();
      if (!base.rows[r][c].empty() && !parse_number(base.rows[r][c], x)) {
        throw ParseError(kModule, baseline_path.filename().string() + " row " +
                                      std::to_string(base.line_numbers[r]) + ": column '" + base.header[c] +
                                      "' is not numeric");
      }
      s.baseline.push_back(x);
    }
    if (!index_of.emplace(s.id, subjects.size()).second) {
      throw ReferentialError(kModule, baseline_path.filename().string() + " row " +
                                          std::to_string(base.line_numbers[r]) + ": duplicate id '" + s.id + "'");
    }
    subjects.push_back(std::move(s));
  }

  const Table lon = read_table(longitudinal_path, schema.delimiter);
  const std::size_t lid = column(lon, schema.long_id, longitudinal_path);
  const std::size_t lbio = column(lon, schema.biomarker, longitudinal_path);
  const std::size_t ltime = column(lon, schema.time, longitudinal_path);
  const std::size_t lvalue = column(lon, schema.value, longitudinal_path);

  std::vector<std::string> biomarkers = schema.biomarkers;
  std::unordered_map<std::string, std::size_t> bio_index;
  for (std::size_t m = 0; m < biomarkers.size(); ++m) bio_index.emplace(biomarkers[m], m);

  std::vector<Measurement> measurements;
  measurements.reserve(lon.rows.size());
  for (std::size_t r = 0; r < lon.rows.size(); ++r) {
    const auto& row = lon.rows[r];
    const std::string row_ref =
        longitudinal_path.filename().string() + " row " + std::to_string(lon.line_numbers[r]);
    auto subj = index_of.find(row[lid]);
    if (subj == index_of.end()) {
      throw ReferentialError(kModule, row_ref + ": unknown subject '" + row[lid] + "'");
    }
    auto bio = bio_index.find(row[lbio]);
    if (bio == bio_index.end()) {
      if (!schema.biomarkers.empty()) {
        throw ReferentialError(kModule, row_ref + ": unknown biomarker '" + row[lbio] + "'");
      }
      bio = bio_index.emplace(row[lbio], biomarkers.size()).first;
      biomarkers.push_back(row[lbio]);
    }
    Measurement m;
    m.subject = subj->second;
    m.biomarker = bio->second;
    m.time = required_number(lon, r, ltime, longitudinal_path);
    m.value = required_number(lon, r, lvalue, longitudinal_path);
    if (m.time > subjects[m.subject].observed_time) {
      throw ReferentialError(kModule, row_ref + ": measurement at time " + format_number(m.time) +
                                          " lies after the observed time " +
                                          format_number(subjects[m.subject].observed_time) + " of subject '" +
                                          row[lid] + "'");
    }
    measurements.push_back(m);
  }
  if (biomarkers.empty()) throw SchemaError(kModule, "no biomarkers found in " + longitudinal_path.string());

  return Dataset(std::move(covariate_names), std::move(biomarkers), std::move(subjects), std::move(measurements));
}

void write_dataset(const Dataset& data, const std::filesystem::path& baseline_path,
                   const std::filesystem::path& longitudinal_path, const CsvSchema& schema) {
  const char d = schema.delimiter;
  {
    std::ofstream out(baseline_path);
    if (!out) throw SchemaError(kModule, "cannot write '" + baseline_path.string() + "'");
    out << schema.id << d << schema.event_time << d << schema.event;
    for (const auto& c : data.covariate_names()) out << d << c;
    out << '\n';
    for (const auto& s : data.subjects()) {
      out << s.id << d << format_number(s.observed_time) << d << (s.event ? 1 : 0);
      for (double x : s.baseline) out << d << format_number(x);
      out << '\n';
    }
  }
  std::ofstream out(longitudinal_path);
  if (!out) throw SchemaError(kModule, "cannot write '" + longitudinal_path.string() + "'");
  out << schema.long_id << d << schema.biomarker << d << schema.time << d << schema.value << '\n';
  // biomarker-major order so that first appearance reproduces biomarker indices
  for (std::size_t m = 0; m < data.biomarker_count(); ++m) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (const auto& meas : data.history(i, m)) {
        out << data.subject(i).id << d << data.biomarker_names()[m] << d << format_number(meas.time) << d
            << format_number(meas.value) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// risk sets and folds

RiskSet risk_set(const Dataset& data, double t) {
  if (!(t >= 0.0)) throw DomainError(kModule, "landmark time must be nonnegative");
  RiskSet rs;
  rs.landmark = t;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.subject(i).observed_time > t) rs.indices.push_back(i);
  }
  return rs;
}

bool event_in_window(const SubjectRecord& s, const PredictionWindow& w) noexcept {
  return s.event && s.observed_time > w.t && s.observed_time <= w.u;
}

std::vector<std::size_t> FoldAssignment::training_rows(std::size_t v) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != v) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::held_out_rows(std::size_t v) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == v) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> stratified_partition(const std::vector<bool>& stratum, std::size_t folds,
                                              std::uint64_t seed) {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < stratum.size(); ++i) (stratum[i] ? positives : negatives).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);

  std::vector<std::size_t> fold_of(stratum.size(), 0);
  std::size_t next = 0;
  for (std::size_t i : positives) fold_of[i] = next++ % folds;
  for (std::size_t i : negatives) fold_of[i] = next++ % folds;
  return fold_of;
}

FoldAssignment stratified_folds(const Dataset& data, const PredictionWindow& window, std::size_t folds,
                                std::uint64_t seed) {
  if (folds < 2) throw ConfigError(kModule, "need at least 2 folds");
  const RiskSet rs = risk_set(data, window.t);
  if (rs.empty()) throw ConfigError(kModule, "risk set at landmark " + format_number(window.t) + " is empty");

  std::vector<bool> stratum(data.size(), false);
  std::size_t events = 0;
  for (std::size_t i : rs.indices) {
    if (event_in_window(data.subject(i), window)) {
      stratum[i] = true;
      ++events;
    }
  }
  if (events < folds) {
    throw ConfigError(kModule, "only " + std::to_string(events) + " events in window {" + format_number(window.t) +
                                   ", " + format_number(window.u) + "} for " + std::to_string(folds) +
                                   " folds; use fewer folds so every fold has events in the window");
  }
  FoldAssignment fa;
  fa.fold_of = stratified_partition(stratum, folds, seed);
  fa.folds = folds;
  fa.seed = seed;
  return fa;
}

}  // namespace dynsl
