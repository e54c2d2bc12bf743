#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "pisc/panel.hpp"

namespace pisc {

enum class ErrorLaw { iid_normal, ar1 };
enum class OutcomeFamily { gaussian, poisson };
enum class EffectPath { constant, linear_trend };

/// Interactive fixed effects design with N = 2r controls: the first r are
/// the donor pool (loadings e_k), the last r duplicate their loadings and
/// serve as proxies. The treated unit loads 1 on every factor, so the true
/// weights are all ones.
///
/// Gaussian family:
///   lambda_tk ~ N(log t, 1),
///   Y_t = tau_t 1(t > T0) + sum_k lambda_tk + xi c_0t + eps_0t,
///   W_it = mu_i' lambda_t + xi c_it + eps_it.
/// Poisson family (stationary positive factors psi_tk = exp(N(0, psi_sd^2))):
///   W_it ~ Poisson(kappa mu_i' psi_t),
///   Y_t(0) ~ Poisson(exp(c + sum_k psi_tk)), Y_t = Y_t(0) + tau_t 1(t > T0),
/// for which h(w) = exp(c + log(1 + 1/kappa) sum_i w_i) is an exact bridge.
struct SimDesign {
  int r = 1;
  Eigen::Index t0 = 100;
  Eigen::Index t1 = 100;
  EffectPath effect = EffectPath::constant;
  double tau = 2.0;
  double gamma0 = 1.0;
  double gamma1 = 1.0;
  ErrorLaw error_law = ErrorLaw::iid_normal;
  double ar_coef = 0.1;
  int burn_in = 100;
  double error_sd = 1.0;
  bool covariates = false;
  double xi = 0.0;
  OutcomeFamily family = OutcomeFamily::gaussian;
  double poisson_kappa = 10.0;
  double poisson_mean = 10.0;
  double psi_sd = 0.25;
  std::uint64_t seed = 1;

  Eigen::Index n_periods() const { return t0 + t1; }
  int n_controls() const { return 2 * r; }
  /// Effect at 1-based period t.
  double effect_at(Eigen::Index t) const;
  /// Intercept c of the Poisson treated-unit rate.
  double poisson_intercept() const;
  void validate() const;
};

/// Quantities a real analysis never sees, kept for oracle checks.
struct SimTruth {
  Eigen::MatrixXd factors;  // T x r (lambda, or psi for Poisson)
  Eigen::MatrixXd errors;   // T x (N + 1), treated first
  Eigen::VectorXd alpha;    // true synthetic control weights
  Eigen::VectorXd effect;   // tau_t for every period (0 before T0)
  double bridge_intercept = 0.0;
  Eigen::VectorXd bridge_weights;
};

struct SimulatedPanel {
  PanelDataset data;
  SimTruth truth;
};

SimulatedPanel generate(const SimDesign& design);

/// Per-replication seed derived from a master seed (splitmix64 mixing), so
/// any replication can be regenerated on its own.
std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep);

std::string to_string(ErrorLaw e);
std::string to_string(OutcomeFamily f);
std::string to_string(EffectPath p);
ErrorLaw parse_error_law(const std::string& s);
OutcomeFamily parse_outcome_family(const std::string& s);
EffectPath parse_effect_path(const std::string& s);

}  // namespace pisc
