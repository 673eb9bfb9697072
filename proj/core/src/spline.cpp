#include <algorithm>
#include <cmath>

#include "dynsl/error.hpp"
#include "dynsl/mixed_model.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "mixed_model";

double quantile(std::vector<double> sorted, double p) {
  // type-7 quantile of already sorted data
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double cube_plus(double x) { return x > 0.0 ? x * x * x : 0.0; }

}  // namespace

SplineBasis::SplineBasis(std::vector<double> interior_knots, std::pair<double, double> boundary)
    : interior_(std::move(interior_knots)), boundary_(boundary) {
  if (!(boundary_.first < boundary_.second)) throw DomainError(kModule, "spline boundary knots must be increasing");
  double prev = boundary_.first;
  for (double k : interior_) {
    if (!(k > prev)) throw DomainError(kModule, "spline knots must be strictly increasing inside the boundary");
    prev = k;
  }
  if (!(boundary_.second > prev)) throw DomainError(kModule, "interior knot on or beyond the upper boundary");
}

SplineBasis SplineBasis::from_quantiles(std::span<const double> times, std::size_t df,
                                        std::pair<double, double> boundary) {
  if (df < 1) throw DomainError(kModule, "spline df must be >= 1");
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (df > distinct) {
    throw DomainError(kModule, "spline df " + std::to_string(df) + " exceeds the " + std::to_string(distinct) +
                                   " distinct time points");
  }
  sorted.assign(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> interior;
  for (std::size_t k = 1; k < df; ++k) {
    interior.push_back(quantile(sorted, static_cast<double>(k) / static_cast<double>(df)));
  }
  return SplineBasis(std::move(interior), boundary);
}

Eigen::RowVectorXd SplineBasis::evaluate(double x) const {
  // truncated-power construction of a natural cubic spline on knots scaled
  // to [0, 1]; the first column is linear, the rest are d_k - d_{K-1}
  const double lo = boundary_.first;
  const double width = boundary_.second - lo;
  const double s = (x - lo) / width;
  std::vector<double> knots;
  knots.reserve(interior_.size() + 2);
  knots.push_back(0.0);
  for (double k : interior_) knots.push_back((k - lo) / width);
  knots.push_back(1.0);
  const std::size_t K = knots.size();

  auto d = [&](std::size_t k) {
    return (cube_plus(s - knots[k]) - cube_plus(s - knots[K - 1])) / (knots[K - 1] - knots[k]);
  };
  Eigen::RowVectorXd row(df());
  row(0) = s;
  if (K > 2) {
    const double last = d(K - 2);
    for (std::size_t k = 0; k + 2 < K; ++k) row(static_cast<Eigen::Index>(k + 1)) = d(k) - last;
  }
  return row;
}

Eigen::MatrixXd natural_cubic_basis(std::span<const double> times, std::size_t df, std::pair<double, double> boundary) {
  const SplineBasis basis = SplineBasis::from_quantiles(times, df, boundary);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(df));
  for (std::size_t i = 0; i < times.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = basis.evaluate(times[i]);
  return out;
}

}  // namespace dynsl
