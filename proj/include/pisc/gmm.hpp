#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pisc/moments.hpp"

namespace pisc {

enum class CovarianceKind { none, hc, hac };
std::string to_string(CovarianceKind kind);

/// Two-sided 95% normal critical value.
inline constexpr double kZ975 = 1.959963984540054;

/// Estimated parameters of a moment system and their sandwich covariance.
struct GmmFit {
  Eigen::VectorXd theta;
  /// Covariance of sqrt(n) (theta_hat - theta); empty until a covariance
  /// estimator has been applied.
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd s_hat;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd g_hat;
  std::optional<double> j_stat;

  bool converged = false;
  int iterations = 0;
  double moment_norm = 0.0;
  double objective = 0.0;
  Eigen::Index n_obs = 0;
  CovarianceKind covariance = CovarianceKind::none;
  Eigen::Index bandwidth = 0;
  std::vector<std::string> param_names;

  Eigen::MatrixXd covariance_matrix() const { return sigma / static_cast<double>(n_obs); }
  Eigen::VectorXd standard_errors() const;
  double se(Eigen::Index j) const;
  std::pair<double, double> ci(Eigen::Index j, double z = kZ975) const;
  Eigen::Index index_of(const std::string& name) const;
};

struct NonlinearOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
};

/// Closed-form minimizer of m(theta)' Omega m(theta) for a linear system.
/// An empty `omega` means the identity. Throws IdentificationError when the
/// (equilibrated) normal matrix has condition number above 1e12.
GmmFit solve_linear(const MomentSystem& ms, const Eigen::MatrixXd& omega = {});

/// Gauss-Newton with backtracking line search. Non-convergence is flagged on
/// the returned fit; a failed line search throws NumericalError.
GmmFit solve_nonlinear(const MomentSystem& ms, const Eigen::MatrixXd& omega, const Eigen::VectorXd& init,
                       const NonlinearOptions& opts = {});

/// Dispatches on ms.linear(); nonlinear systems start from `init` or, when
/// empty, from a default start (log-linear regression for exponential bridges).
GmmFit solve(const MomentSystem& ms, const Eigen::MatrixXd& omega = {}, const Eigen::VectorXd& init = {});

/// Newey-West long-run covariance of the rows of `u` with Bartlett weights;
/// bandwidth 0 gives u'u / n.
Eigen::MatrixXd long_run_covariance(const Eigen::MatrixXd& u, Eigen::Index bandwidth);

/// floor(4 (n / 100)^(2/9)).
Eigen::Index default_bandwidth(Eigen::Index n);

/// (G' Omega G)^{-1} G' Omega S Omega G (G' Omega G)^{-1}, symmetrized.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& g, const Eigen::MatrixXd& omega, const Eigen::MatrixXd& s);

GmmFit hc_covariance(const MomentSystem& ms, const GmmFit& fit);
/// Throws DataError when bandwidth >= n.
GmmFit hac_covariance(const MomentSystem& ms, const GmmFit& fit, std::optional<Eigen::Index> bandwidth = {});

/// Second GMM step with Omega = S_hat^{-1} taken from `first` (which must
/// carry a covariance estimate).
GmmFit two_step(const MomentSystem& ms, const GmmFit& first);

}  // namespace pisc
