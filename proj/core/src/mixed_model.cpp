#include "dynsl/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dynsl/optim.hpp"

namespace dynsl {

namespace {

constexpr const char* kModule = "mixed_model";

}  // namespace

Eigen::RowVectorXd TimeBasis::row(double t) const {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(dimension()));
  r(0) = 1.0;
  if (kind == TrajectoryKind::linear) {
    r(1) = t;
  } else {
    r.tail(static_cast<Eigen::Index>(spline.df())) = spline.evaluate(t);
  }
  return r;
}

Eigen::RowVectorXd random_row(RandomEffects re, double t) {
  if (re == RandomEffects::intercept) return Eigen::RowVectorXd::Ones(1);
  Eigen::RowVectorXd r(2);
  r << 1.0, t;
  return r;
}

// ---------------------------------------------------------------------------
// LmmProblem

LmmProblem::LmmProblem(std::span<const SubjectSeries> series, TimeBasis basis, RandomEffects re)
    : basis_(std::move(basis)), re_(re) {
  q_ = re_ == RandomEffects::intercept ? 1 : 2;
  p_ = basis_.dimension();
  for (const auto& s : series) {
    if (s.times.size() != s.values.size()) throw DomainError(kModule, "series times/values differ in length");
    if (s.times.empty()) continue;
    const auto k = static_cast<Eigen::Index>(s.times.size());
    Eigen::MatrixXd X(k, static_cast<Eigen::Index>(p_));
    Eigen::MatrixXd Z(k, static_cast<Eigen::Index>(q_));
    Eigen::VectorXd y(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      X.row(j) = basis_.row(s.times[jj]);
      Z.row(j) = random_row(re_, s.times[jj]);
      y(j) = s.values[jj];
    }
    Block b;
    b.ztz = Z.transpose() * Z;
    b.ztx = Z.transpose() * X;
    b.xtx = X.transpose() * X;
    b.zty = Z.transpose() * y;
    b.xty = X.transpose() * y;
    b.yty = y.squaredNorm();
    b.k = static_cast<std::size_t>(k);
    n_obs_ += b.k;
    blocks_.push_back(std::move(b));
  }
  if (blocks_.size() < 2) throw DomainError(kModule, "mixed model needs at least 2 subjects with measurements");
  if (n_obs_ <= p_) throw DomainError(kModule, "mixed model has fewer observations than fixed effects");
}

Eigen::MatrixXd LmmProblem::covariance_from_theta(std::span<const double> theta) const {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q_), static_cast<Eigen::Index>(q_));
  if (q_ == 1) {
    L(0, 0) = std::exp(theta[0]);
  } else {
    L(0, 0) = std::exp(theta[0]);
    L(1, 0) = theta[1];
    L(1, 1) = std::exp(theta[2]);
  }
  return L * L.transpose();
}

std::vector<double> LmmProblem::theta_from(const Eigen::MatrixXd& D, double sigma2) const {
  Eigen::LLT<Eigen::MatrixXd> llt(D + 1e-12 * Eigen::MatrixXd::Identity(D.rows(), D.cols()));
  const Eigen::MatrixXd L = llt.matrixL();
  std::vector<double> theta;
  theta.push_back(std::log(L(0, 0)));
  if (q_ == 2) {
    theta.push_back(L(1, 0));
    theta.push_back(std::log(L(1, 1)));
  }
  theta.push_back(std::log(sigma2));
  return theta;
}

template <class Accumulate>
void LmmProblem::accumulate(const Eigen::MatrixXd& D, double sigma2, Accumulate&& acc, double& logdet) const {
  // V_i^{-1} = (I - Z (s2 I + D Z'Z)^{-1} D Z') / s2 ;  det V_i = s2^k det(I + D Z'Z / s2)
  const auto q = static_cast<Eigen::Index>(q_);
  logdet = 0.0;
  for (const auto& b : blocks_) {
    const Eigen::MatrixXd M = sigma2 * Eigen::MatrixXd::Identity(q, q) + D * b.ztz;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    const Eigen::MatrixXd A = lu.solve(D);
    const double det = lu.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) throw NumericalError(kModule, "singular marginal covariance");
    logdet += static_cast<double>(b.k) * std::log(sigma2) + std::log(det) - static_cast<double>(q_) * std::log(sigma2);
    const Eigen::MatrixXd xvx = (b.xtx - b.ztx.transpose() * A * b.ztx) / sigma2;
    const Eigen::VectorXd xvy = (b.xty - b.ztx.transpose() * A * b.zty) / sigma2;
    const double yvy = (b.yty - b.zty.dot(A * b.zty)) / sigma2;
    acc(xvx, xvy, yvy);
  }
}

double LmmProblem::profile_loglik(std::span<const double> theta, Eigen::VectorXd* beta) const {
  const Eigen::MatrixXd D = covariance_from_theta(theta);
  const double sigma2 = std::exp(theta[q_ * (q_ + 1) / 2]);
  if (!std::isfinite(sigma2) || !(sigma2 > 0.0) || !D.allFinite()) return -std::numeric_limits<double>::infinity();

  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::MatrixXd XVX = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd XVy = Eigen::VectorXd::Zero(p);
  double yVy = 0.0;
  double logdet = 0.0;
  try {
    accumulate(
        D, sigma2,
        [&](const Eigen::MatrixXd& xvx, const Eigen::VectorXd& xvy, double yvy) {
          XVX += xvx;
          XVy += xvy;
          yVy += yvy;
        },
        logdet);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XVX);
  const Eigen::VectorXd b = ldlt.solve(XVy);
  const double quad = yVy - b.dot(XVy);
  if (beta != nullptr) *beta = b;
  return -0.5 * (static_cast<double>(n_obs_) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

double LmmProblem::loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& D, double sigma2) const {
  double quad = 0.0;
  double logdet = 0.0;
  accumulate(
      D, sigma2,
      [&](const Eigen::MatrixXd& xvx, const Eigen::VectorXd& xvy, double yvy) {
        quad += yvy - 2.0 * beta.dot(xvy) + beta.dot(xvx * beta);
      },
      logdet);
  return -0.5 * (static_cast<double>(n_obs_) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

std::pair<Eigen::VectorXd, double> LmmProblem::ols() const {
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd Xty = Eigen::VectorXd::Zero(p);
  double yty = 0.0;
  for (const auto& b : blocks_) {
    XtX += b.xtx;
    Xty += b.xty;
    yty += b.yty;
  }
  const Eigen::VectorXd beta = XtX.ldlt().solve(Xty);
  const double rss = std::max(yty - beta.dot(Xty), 0.0);
  return {beta, rss / static_cast<double>(n_obs_ - p_)};
}

// ---------------------------------------------------------------------------
// fitting

LmmFit fit_lmm(std::span<const SubjectSeries> series, const TrajectorySpec& trajectory, const LmmOptions& options) {
  TimeBasis basis;
  basis.kind = trajectory.kind;
  if (trajectory.kind == TrajectoryKind::spline) {
    std::vector<double> all_times;
    for (const auto& s : series) all_times.insert(all_times.end(), s.times.begin(), s.times.end());
    if (all_times.empty()) throw DomainError(kModule, "no measurements to place spline knots");
    const auto [lo, hi] = std::minmax_element(all_times.begin(), all_times.end());
    basis.spline = SplineBasis::from_quantiles(all_times, trajectory.df, {*lo, *hi});
  }
  const LmmProblem problem(series, basis, options.random_effects);

  // start: OLS fixed effects, residual variance split between D and sigma^2
  const auto [beta0, var0] = problem.ols();
  const double v = std::max(var0, 1e-8);
  Eigen::MatrixXd D0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(problem.random_dimension()),
                                             static_cast<Eigen::Index>(problem.random_dimension()));
  D0(0, 0) = 0.5 * v;
  if (problem.random_dimension() == 2) D0(1, 1) = 0.05 * v;
  std::vector<double> theta = problem.theta_from(D0, 0.5 * v);

  const double n_obs = static_cast<double>(problem.observation_count());
  auto objective = [&](std::span<const double> th) { return -problem.profile_loglik(th) / n_obs; };

  NelderMeadOptions nm;
  nm.max_iterations = options.max_iterations;
  nm.f_tolerance = options.tolerance / n_obs;
  nm.x_tolerance = 1e-7;
  nm.initial_step = 0.5;

  NelderMeadResult best = nelder_mead(objective, theta, nm);
  int iterations = best.iterations;
  bool converged = best.converged;
  for (int r = 0; r < options.restarts && converged; ++r) {
    nm.initial_step = 0.05;
    NelderMeadResult again = nelder_mead(objective, best.x, nm);
    iterations += again.iterations;
    const double gain = (best.value - again.value) * n_obs;
    converged = again.converged;
    if (again.value < best.value) best = again;
    if (gain < options.tolerance) break;
  }

  LmmFit fit;
  fit.time_basis = problem.basis();
  fit.random_effects = options.random_effects;
  fit.log_likelihood = problem.profile_loglik(best.x, &fit.fixed_effects);
  fit.re_covariance = problem.covariance_from_theta(best.x);
  fit.residual_variance = std::exp(best.x.back());
  fit.converged = converged;
  fit.iterations = iterations;
  if (!std::isfinite(fit.log_likelihood)) throw NumericalError(kModule, "marginal likelihood is not finite at the optimum");
  if (!converged) {
    throw LmmConvergenceError("mixed model did not converge within " + std::to_string(options.max_iterations) +
                                  " iterations (log-likelihood " + std::to_string(fit.log_likelihood) + ")",
                              fit);
  }
  return fit;
}

LmmFit fit_lmm(const Dataset& data, std::size_t biomarker, const TrajectorySpec& trajectory,
               std::optional<double> up_to, std::span<const std::size_t> rows, const LmmOptions& options) {
  if (biomarker >= data.biomarker_count()) throw DomainError(kModule, "unknown biomarker index");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  std::vector<SubjectSeries> series;
  series.reserve(rows.size());
  for (std::size_t i : rows) {
    const auto hist = up_to ? data.history(i, biomarker, *up_to) : data.history(i, biomarker);
    if (hist.empty()) continue;
    SubjectSeries s;
    for (const auto& m : hist) {
      s.times.push_back(m.time);
      s.values.push_back(m.value);
    }
    series.push_back(std::move(s));
  }
  if (series.empty()) {
    throw DomainError(kModule, "no measurements of biomarker '" + data.biomarker_names()[biomarker] + "' to fit");
  }
  return fit_lmm(series, trajectory, options);
}

Eigen::VectorXd blup(const LmmFit& fit, std::span<const double> times, std::span<const double> values) {
  const auto q = fit.re_covariance.rows();
  if (times.empty()) return Eigen::VectorXd::Zero(q);
  const auto k = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd Z(k, q);
  Eigen::VectorXd r(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    Z.row(j) = random_row(fit.random_effects, times[jj]);
    r(j) = values[jj] - fit.time_basis.row(times[jj]).dot(fit.fixed_effects);
  }
  const Eigen::MatrixXd V =
      Z * fit.re_covariance * Z.transpose() + fit.residual_variance * Eigen::MatrixXd::Identity(k, k);
  return fit.re_covariance * Z.transpose() * V.ldlt().solve(r);
}

double predict_eta(const LmmFit& fit, const Eigen::VectorXd& b, double t) {
  return fit.time_basis.row(t).dot(fit.fixed_effects) + random_row(fit.random_effects, t).dot(b);
}

}  // namespace dynsl
