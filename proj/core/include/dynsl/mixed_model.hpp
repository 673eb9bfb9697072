#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dynsl/data.hpp"
#include "dynsl/error.hpp"

namespace dynsl {

/// Natural cubic spline basis without intercept. `df` columns, `df - 1`
/// interior knots; linear beyond the boundary knots.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(std::vector<double> interior_knots, std::pair<double, double> boundary);

  /// Interior knots at equally spaced quantiles of `times`.
  static SplineBasis from_quantiles(std::span<const double> times, std::size_t df, std::pair<double, double> boundary);

  std::size_t df() const noexcept { return interior_.size() + 1; }
  const std::vector<double>& interior_knots() const noexcept { return interior_; }
  std::pair<double, double> boundary() const noexcept { return boundary_; }

  Eigen::RowVectorXd evaluate(double x) const;

 private:
  std::vector<double> interior_;
  std::pair<double, double> boundary_{0.0, 1.0};
};

/// Design matrix of the natural cubic spline basis for `times`.
Eigen::MatrixXd natural_cubic_basis(std::span<const double> times, std::size_t df, std::pair<double, double> boundary);

enum class TrajectoryKind { linear, spline };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::linear;
  std::size_t df = 3;  // spline only
};

enum class RandomEffects { intercept, intercept_slope };

/// Fixed-effects time basis x(t): (1, t) or (1, N_1(t), ..., N_df(t)).
struct TimeBasis {
  TrajectoryKind kind = TrajectoryKind::linear;
  SplineBasis spline;

  std::size_t dimension() const noexcept { return kind == TrajectoryKind::linear ? 2 : spline.df() + 1; }
  Eigen::RowVectorXd row(double t) const;
};

Eigen::RowVectorXd random_row(RandomEffects re, double t);

/// Observations of one subject for one biomarker.
struct SubjectSeries {
  std::vector<double> times;
  std::vector<double> values;
};

struct LmmFit {
  Eigen::VectorXd fixed_effects;
  Eigen::MatrixXd re_covariance;
  double residual_variance = 1.0;
  TimeBasis time_basis;
  RandomEffects random_effects = RandomEffects::intercept_slope;
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Marginal Gaussian likelihood of a random-intercept(-slope) model with
/// per-subject cross products precomputed.
class LmmProblem {
 public:
  LmmProblem(std::span<const SubjectSeries> series, TimeBasis basis, RandomEffects re);

  std::size_t random_dimension() const noexcept { return q_; }
  std::size_t fixed_dimension() const noexcept { return p_; }
  std::size_t observation_count() const noexcept { return n_obs_; }
  /// Number of unconstrained parameters: log-Cholesky entries of D plus log sigma^2.
  std::size_t parameter_count() const noexcept { return q_ * (q_ + 1) / 2 + 1; }

  /// Log-likelihood with beta profiled out by generalized least squares.
  double profile_loglik(std::span<const double> theta, Eigen::VectorXd* beta = nullptr) const;
  /// Log-likelihood at explicit parameters (D may be singular).
  double loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& D, double sigma2) const;

  Eigen::MatrixXd covariance_from_theta(std::span<const double> theta) const;
  std::vector<double> theta_from(const Eigen::MatrixXd& D, double sigma2) const;
  const TimeBasis& basis() const noexcept { return basis_; }
  RandomEffects random_effects() const noexcept { return re_; }

  /// Ordinary least squares start: (beta, residual variance).
  std::pair<Eigen::VectorXd, double> ols() const;

 private:
  struct Block {
    Eigen::MatrixXd ztz, ztx, xtx;
    Eigen::VectorXd zty, xty;
    double yty = 0.0;
    std::size_t k = 0;
  };
  template <class Accumulate>
  void accumulate(const Eigen::MatrixXd& D, double sigma2, Accumulate&& acc, double& logdet) const;

  TimeBasis basis_;
  RandomEffects re_;
  std::size_t q_ = 2;
  std::size_t p_ = 2;
  std::size_t n_obs_ = 0;
  std::vector<Block> blocks_;
};

struct LmmOptions {
  int max_iterations = 2000;
  double tolerance = 1e-8;  // on successive total log-likelihoods
  int restarts = 3;
  RandomEffects random_effects = RandomEffects::intercept_slope;
};

/// Carries the best fit found when the optimizer hits its iteration cap.
class LmmConvergenceError : public FitError {
 public:
  LmmConvergenceError(const std::string& what, LmmFit best)
      : FitError("mixed_model", what), best_(std::move(best)) {}
  const LmmFit& best() const noexcept { return best_; }

 private:
  LmmFit best_;
};

/// Maximum likelihood fit of y = x(t)'beta + z(t)'b + e, b ~ N(0, D).
LmmFit fit_lmm(std::span<const SubjectSeries> series, const TrajectorySpec& trajectory, const LmmOptions& options = {});

/// Convenience: fit biomarker `m` of `data` on the given rows, optionally using
/// only measurements with time <= `up_to`.
LmmFit fit_lmm(const Dataset& data, std::size_t biomarker, const TrajectorySpec& trajectory,
               std::optional<double> up_to = std::nullopt, std::span<const std::size_t> rows = {},
               const LmmOptions& options = {});

/// Gaussian posterior mean of the random effects given one subject's history.
Eigen::VectorXd blup(const LmmFit& fit, std::span<const double> times, std::span<const double> values);

/// x(t)'beta + z(t)'b.
double predict_eta(const LmmFit& fit, const Eigen::VectorXd& b, double t);

}  // namespace dynsl
