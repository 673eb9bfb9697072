#include "dynsl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynsl/error.hpp"

namespace dynsl {

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                             const NelderMeadOptions& options) {
  const std::size_t d = start.size();
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<std::vector<double>> simplex(d + 1, start);
  for (std::size_t k = 0; k < d; ++k) simplex[k + 1][k] += options.initial_step;
  std::vector<double> values(d + 1);
  for (std::size_t k = 0; k <= d; ++k) values[k] = eval(simplex[k]);

  std::vector<std::size_t> order(d + 1);
  NelderMeadResult result;
  std::vector<double> centroid(d), trial(d), trial2(d);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[d - (d > 0 ? 1 : 0)];

    double diameter = 0.0;
    for (std::size_t k = 0; k <= d; ++k) {
      for (std::size_t j = 0; j < d; ++j) diameter = std::max(diameter, std::abs(simplex[k][j] - simplex[best][j]));
    }
    if (values[worst] - values[best] <= options.f_tolerance && diameter <= options.x_tolerance) {
      result.converged = true;
      break;
    }
    if (d == 0) {
      result.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k <= d; ++k) {
      if (k == worst) continue;
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[k][j] / static_cast<double>(d);
    }
    for (std::size_t j = 0; j < d; ++j) trial[j] = centroid[j] + (centroid[j] - simplex[worst][j]);
    const double f_reflect = eval(trial);

    if (f_reflect < values[best]) {
      for (std::size_t j = 0; j < d; ++j) trial2[j] = centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]);
      const double f_expand = eval(trial2);
      if (f_expand < f_reflect) {
        simplex[worst] = trial2;
        values[worst] = f_expand;
      } else {
        simplex[worst] = trial;
        values[worst] = f_reflect;
      }
      continue;
    }
    if (f_reflect < values[second]) {
      simplex[worst] = trial;
      values[worst] = f_reflect;
      continue;
    }
    // contraction, outside if the reflection improved on the worst point
    const bool outside = f_reflect < values[worst];
    for (std::size_t j = 0; j < d; ++j) {
      trial2[j] = outside ? centroid[j] + 0.5 * (trial[j] - centroid[j])
                          : centroid[j] + 0.5 * (simplex[worst][j] - centroid[j]);
    }
    const double f_contract = eval(trial2);
    if (f_contract < (outside ? f_reflect : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = f_contract;
      continue;
    }
    for (std::size_t k = 0; k <= d; ++k) {
      if (k == best) continue;
      for (std::size_t j = 0; j < d; ++j) simplex[k][j] = simplex[best][j] + 0.5 * (simplex[k][j] - simplex[best][j]);
      values[k] = eval(simplex[k]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = it;
  return result;
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  // sort-and-threshold projection (Held, Wolfe and Crowder)
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] - theta, 0.0);
  return out;
}

namespace {

struct SimpsonPanel {
  double a, b, fa, fm, fb, whole;
};

double simpson_recurse(const std::function<double(double)>& f, const SimpsonPanel& p, double tolerance, double budget,
                       int depth) {
  const double m = 0.5 * (p.a + p.b);
  const double lm = 0.5 * (p.a + m);
  const double rm = 0.5 * (m + p.b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
  const double right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
  const double delta = left + right - p.whole;
  if (std::abs(delta) <= 15.0 * tolerance) return left + right + delta / 15.0;
  if (depth <= 0) {
    // integrable endpoint singularities (s^(k-1) with k < 2) end up here with a negligible remainder
    if (std::abs(delta) <= budget) return left + right + delta / 15.0;
    throw NumericalError("quadrature", "adaptive Simpson did not reach the requested tolerance");
  }
  return simpson_recurse(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tolerance, budget, depth - 1) +
         simpson_recurse(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tolerance, budget, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tolerance,
                        int max_depth) {
  if (a == b) return 0.0;
  // eight starting panels; their sum sets the scale for the relative tolerance
  constexpr int kPanels = 8;
  std::vector<SimpsonPanel> panels;
  panels.reserve(kPanels);
  double coarse = 0.0;
  double f_left = f(a);
  for (int k = 0; k < kPanels; ++k) {
    const double x0 = a + (b - a) * k / kPanels;
    const double x1 = k + 1 == kPanels ? b : a + (b - a) * (k + 1) / kPanels;
    const double f_right = f(x1);
    const double f_mid = f(0.5 * (x0 + x1));
    const double whole = (x1 - x0) / 6.0 * (f_left + 4.0 * f_mid + f_right);
    panels.push_back({x0, x1, f_left, f_mid, f_right, whole});
    coarse += whole;
    f_left = f_right;
  }
  const double scale = std::max(std::abs(coarse), std::numeric_limits<double>::min());
  double value = 0.0;
  const double budget = 1e-3 * rel_tolerance * scale;
  for (const auto& p : panels) value += simpson_recurse(f, p, rel_tolerance * scale / kPanels, budget, max_depth);
  if (!std::isfinite(value)) throw NumericalError("quadrature", "integrand is not finite");
  return value;
}

}  // namespace dynsl
