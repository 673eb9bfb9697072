#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dynsl {

/// Prediction window {t, u}: condition on survival to the landmark `t`,
/// predict survival to the horizon `u`.
struct PredictionWindow {
  double t = 0.0;
  double u = 0.0;

  /// Validating constructor; throws DomainError unless 0 <= t < u < inf.
  static PredictionWindow make(double t, double u);

  double midpoint() const noexcept { return 0.5 * (t + u); }

  friend bool operator==(const PredictionWindow&, const PredictionWindow&) = default;
};

struct SubjectRecord {
  std::string id;
  std::vector<double> baseline;  // NaN encodes a missing value
  double observed_time = 0.0;
  bool event = false;
};

struct Measurement {
  std::size_t subject = 0;    // index into Dataset::subjects()
  std::size_t biomarker = 0;  // index into Dataset::biomarker_names()
  double time = 0.0;
  double value = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// Longitudinal + time-to-event data. Immutable after construction.
///
/// Measurements are kept sorted by (subject, biomarker, time) and indexed so
/// that the history of one subject for one biomarker is a contiguous span.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> covariate_names,
          std::vector<std::string> biomarker_names,
          std::vector<SubjectRecord> subjects,
          std::vector<Measurement> measurements);

  std::size_t size() const noexcept { return subjects_.size(); }
  std::size_t biomarker_count() const noexcept { return biomarker_names_.size(); }
  std::size_t covariate_count() const noexcept { return covariate_names_.size(); }

  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const std::vector<std::string>& biomarker_names() const noexcept { return biomarker_names_; }
  std::span<const SubjectRecord> subjects() const noexcept { return subjects_; }
  const SubjectRecord& subject(std::size_t i) const { return subjects_.at(i); }
  std::span<const Measurement> measurements() const noexcept { return measurements_; }

  /// All measurements of subject `i` for biomarker `m`, time-ordered.
  std::span<const Measurement> history(std::size_t i, std::size_t m) const;
  /// Measurements of subject `i` for biomarker `m` with time <= t.
  std::span<const Measurement> history(std::size_t i, std::size_t m, double t) const;

  std::optional<std::size_t> find(const std::string& id) const;

  std::vector<double> observed_times() const;
  std::vector<bool> events() const;

  /// New dataset holding the given rows (in that order) and their measurements.
  Dataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  std::vector<std::string> covariate_names_;
  std::vector<std::string> biomarker_names_;
  std::vector<SubjectRecord> subjects_;
  std::vector<Measurement> measurements_;
  std::vector<std::size_t> offsets_;  // (subject * M + biomarker) -> first index; size n*M+1
  std::unordered_map<std::string, std::size_t> index_of_;
};

/// Column names used when reading the two delimited files.
struct CsvSchema {
  std::string id = "id";
  std::string event_time = "event_time";
  std::string event = "event";
  /// Baseline covariate columns; empty means "every other column".
  std::vector<std::string> covariates;

  std::string long_id = "id";
  std::string biomarker = "biomarker";
  std::string time = "time";
  std::string value = "value";
  /// Biomarker labels in index order; empty means order of first appearance.
  std::vector<std::string> biomarkers;

  char delimiter = ',';
};

Dataset load_dataset(const std::filesystem::path& baseline_path,
                     const std::filesystem::path& longitudinal_path,
                     const CsvSchema& schema = {});

/// Writes the two files `load_dataset` reads. Numbers use shortest round-trip
/// formatting so that write-then-read reproduces the dataset exactly.
void write_dataset(const Dataset& data, const std::filesystem::path& baseline_path,
                   const std::filesystem::path& longitudinal_path,
                   const CsvSchema& schema = {});

struct RiskSet {
  double landmark = 0.0;
  std::vector<std::size_t> indices;  // ascending subject indices with T_i > landmark

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
};

RiskSet risk_set(const Dataset& data, double t);

/// True for t < T_i <= u with an observed event.
bool event_in_window(const SubjectRecord& s, const PredictionWindow& w) noexcept;

struct FoldAssignment {
  std::vector<std::size_t> fold_of;  // per subject, 0-based fold index
  std::size_t folds = 0;
  std::uint64_t seed = 0;

  /// Subjects whose fold differs from `v`.
  std::vector<std::size_t> training_rows(std::size_t v) const;
  std::vector<std::size_t> held_out_rows(std::size_t v) const;
};

/// Event-stratified V-fold assignment over all subjects. In-window event-havers
/// among the risk set and everybody else are shuffled separately and dealt
/// round-robin, so per-fold in-window event counts differ by at most one.
FoldAssignment stratified_folds(const Dataset& data, const PredictionWindow& window,
                                std::size_t folds, std::uint64_t seed);

/// Same scheme for an arbitrary binary stratum over `count` items.
std::vector<std::size_t> stratified_partition(const std::vector<bool>& stratum, std::size_t folds,
                                              std::uint64_t seed);

}  // namespace dynsl
