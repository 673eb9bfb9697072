#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dynsl/data.hpp"

namespace fixtures {

struct Subject {
  double time;
  bool event;
  std::vector<double> baseline = {};
  std::vector<std::pair<double, double>> visits = {};  // (time, value) of biomarker "y"
};

inline dynsl::Dataset make(const std::vector<Subject>& subjects, std::vector<std::string> covariates = {}) {
  std::vector<dynsl::SubjectRecord> recs;
  std::vector<dynsl::Measurement> ms;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    recs.push_back({"s" + std::to_string(i + 1), s.baseline, s.time, s.event});
    for (auto [t, v] : s.visits) ms.push_back({i, 0, t, v});
  }
  return dynsl::Dataset(std::move(covariates), {"y"}, std::move(recs), std::move(ms));
}

// Times and events only.
inline dynsl::Dataset times(const std::vector<double>& t, const std::vector<bool>& e) {
  std::vector<Subject> s;
  for (std::size_t i = 0; i < t.size(); ++i) s.push_back({t[i], e[i]});
  return make(s);
}

}  // namespace fixtures
