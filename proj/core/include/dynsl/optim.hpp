#pragma once

#include <functional>
#include <span>
#include <vector>

namespace dynsl {

struct NelderMeadOptions {
  int max_iterations = 2000;
  /// Converged when the spread of function values over the simplex falls below
  /// `f_tolerance` (absolute) and the simplex diameter below `x_tolerance`.
  double f_tolerance = 1e-8;
  double x_tolerance = 1e-8;
  double initial_step = 0.5;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes `f` with the Nelder-Mead simplex method (standard reflection,
/// expansion, contraction and shrink coefficients 1, 2, 1/2, 1/2).
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                             const NelderMeadOptions& options = {});

/// Euclidean projection onto the probability simplex {w >= 0, sum w = 1}.
std::vector<double> project_to_simplex(std::span<const double> v);

/// Adaptive composite Simpson quadrature with Richardson correction. Throws
/// NumericalError when the recursion depth is exhausted before the relative
/// tolerance is met.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tolerance = 1e-8,
                        int max_depth = 50);

}  // namespace dynsl
