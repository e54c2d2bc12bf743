#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "pisc/gmm.hpp"
#include "pisc/moments.hpp"
#include "pisc/panel.hpp"

namespace pisc {

/// A fitted synthetic control: h(W_t) plus an optional per-period covariate
/// contribution.
struct SyntheticControl {
  Link link = Link::identity;
  double intercept = 0.0;
  Eigen::VectorXd weights;
  Eigen::VectorXd adjustment;  // empty or length T
};

/// Post-treatment effect estimates and the contrast series they come from.
struct EffectReport {
  std::string effect_model;
  std::vector<std::string> names;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se_hc, se_hac;
  Eigen::MatrixXd ci_hc, ci_hac;  // rows: parameters; cols: lower, upper
  Eigen::Index bandwidth = 0;

  std::vector<long> post_times;
  Eigen::VectorXd e_hat;   // length T1
  Eigen::VectorXd fitted;  // tau(s_t; gamma_hat) at the post periods
  Eigen::VectorXd v;       // CATT weights when applicable

  std::vector<long> pre_times;
  Eigen::VectorXd pre_residuals;
  double pre_rmse = 0.0;
};

/// e_t = Y_t - h(W_t) - adjustment_t over all T periods.
Eigen::VectorXd residual_series(const PanelDataset& d, const SyntheticControl& sc);

/// Contrast series implied by a fitted moment system: the residual with the
/// effect block set to zero.
Eigen::VectorXd contrast_series(const MomentSystem& ms, const Eigen::VectorXd& theta);

/// Reads weights, intercept and covariate contribution off a fitted system.
SyntheticControl synthetic_control(const MomentSystem& ms, const Eigen::VectorXd& theta);

/// tau_hat = sum v_t e_t / sum v_t (v defaults to ones), with HC/HAC standard
/// errors that treat the weights as known.
EffectReport estimate_catt(const Eigen::VectorXd& e, const Eigen::VectorXd& v = {},
                           std::optional<Eigen::Index> bandwidth = {});

/// Least squares of e_t on phi(s_t) with HC/HAC standard errors; `s` holds the
/// normalized times of the entries of `e`.
EffectReport fit_trend(const Eigen::VectorXd& e, const Eigen::VectorXd& s, const TrendBasis& basis,
                       std::optional<Eigen::Index> bandwidth = {});

/// Centered moving average; the window shrinks at the ends.
Eigen::VectorXd moving_average(const Eigen::VectorXd& x, Eigen::Index window = 5);

enum class EffectEstimator { pi_joint, pi_two_stage, bridge };
EffectEstimator parse_effect_estimator(const std::string& name);
std::string to_string(EffectEstimator e);

enum class CovariateMode { none, per_unit, pooled };
CovariateMode parse_covariate_mode(const std::string& name);
std::string to_string(CovariateMode m);

struct EffectOptions {
  EffectEstimator estimator = EffectEstimator::pi_joint;
  TrendBasis basis = TrendBasis::constant();
  InstrumentSpec instruments{};
  CovariateMode covariates = CovariateMode::none;
  Link link = Link::exponential;  // bridge estimator only
  std::optional<Eigen::Index> bandwidth;
  bool two_step = false;
};

/// Full proximal fit: moment system, HC and HAC fits, and the effect report.
struct EffectAnalysis {
  MomentSystem system;
  GmmFit fit_hc;
  GmmFit fit_hac;
  EffectReport report;
};

/// Builds the moment system selected by `opts` for the whole panel.
MomentSystem build_effect_system(const PanelDataset& d, const EffectOptions& opts);

EffectAnalysis estimate_effects(const PanelDataset& d, const EffectOptions& opts = {});

/// Refit treating `pseudo_t0` as the treatment start, using only rows t <= t0.
EffectAnalysis placebo_run(const PanelDataset& d, long pseudo_t0, const EffectOptions& opts = {});

}  // namespace pisc
