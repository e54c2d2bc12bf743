#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pisc/panel.hpp"

namespace pisc {

/// Regression-based synthetic control fit.
struct OlsFit {
  bool constrained = false;
  std::vector<std::string> labels;
  Eigen::VectorXd weights;
  Eigen::VectorXd xi;  // treated-unit covariate coefficients (unconstrained only)
  double tau = 0.0;
  double se_conventional = 0.0;
  double se_hc = 0.0;
  double se_hac = 0.0;
  Eigen::Index bandwidth = 0;
  double pre_rmse = 0.0;
  Eigen::VectorXd e_hat;      // post-period contrasts
  Eigen::VectorXd synthetic;  // fitted counterfactual over all periods

  std::pair<double, double> ci(double se) const;
};

struct OlsOptions {
  /// Regress on every control unit (donors and proxies); otherwise donors only.
  bool all_controls = true;
  /// Add the treated unit's covariates as regressors (unconstrained only).
  bool covariates = false;
  std::optional<Eigen::Index> bandwidth;
  int restarts = 10;
  std::uint64_t seed = 20240101;
};

/// Unconstrained: least squares of Y_t on 1(t > T0) and the controls over all
/// periods. Constrained: simplex-constrained least squares on the pre-period
/// rows, then the mean post-period contrast.
OlsFit fit_ols(const PanelDataset& d, bool constrained, const OlsOptions& opts = {});

/// Euclidean projection onto {a : a_i >= 0, sum a_i = 1} by the sort-based
/// method.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

struct SimplexLsResult {
  Eigen::VectorXd weights;
  double objective = 0.0;  // (1/n) ||y - X a||^2
  int iterations = 0;
  bool converged = false;
};

/// min_a (1/n) ||y - X a||^2 over the simplex by accelerated projected
/// gradient from `restarts` random starting points; returns the best.
SimplexLsResult simplex_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int restarts = 10,
                                      std::uint64_t seed = 20240101, double tolerance = 1e-10);

}  // namespace pisc
