#include "pisc/effects.hpp"

#include <algorithm>
#include <cmath>

namespace pisc {

namespace {

Eigen::MatrixXd ci_matrix(const Eigen::VectorXd& est, const Eigen::VectorXd& se) {
  Eigen::MatrixXd ci(est.size(), 2);
  ci.col(0) = est - kZ975 * se;
  ci.col(1) = est + kZ975 * se;
  return ci;
}

/// Donor covariate blocks in donor order, one n x q matrix per donor.
std::vector<Eigen::MatrixXd> donor_covariate_blocks(const PanelDataset& d, const std::vector<std::string>& names) {
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& donor : d.donor_labels) {
    Eigen::MatrixXd b(d.n_periods(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      bool found = false;
      for (std::size_t j = 0; j < d.covariate_columns.size(); ++j) {
        const auto& c = d.covariate_columns[j];
        if (c.unit == donor && c.name == names[k]) {
          b.col(static_cast<Eigen::Index>(k)) = d.covariates.col(static_cast<Eigen::Index>(j));
          found = true;
        }
      }
      if (!found) throw DataError("donor '" + donor + "' lacks covariate '" + names[k] + "'");
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::vector<std::string> treated_covariate_names(const PanelDataset& d) {
  std::vector<std::string> names;
  for (const auto& c : d.covariate_columns)
    if (c.role == Role::treated) names.push_back(c.name);
  return names;
}

MomentSystem with_covariates(const PanelDataset& d, const MomentSystem& ms, CovariateMode mode) {
  if (mode == CovariateMode::none) return ms;
  const auto names = treated_covariate_names(d);
  if (names.empty()) throw DataError("covariate adjustment requested but the panel has no covariates");
  if (mode == CovariateMode::pooled) {
    Eigen::MatrixXd treated = d.covariate_block(Role::treated);
    auto donors = donor_covariate_blocks(d, names);
    if (ms.n_obs() != d.n_periods()) {
      treated = treated.topRows(ms.n_obs()).eval();
      for (auto& b : donors) b = b.topRows(ms.n_obs()).eval();
    }
    return add_pooled_covariates(ms, treated, donors, names);
  }
  std::vector<Eigen::Index> cols = d.covariate_indices(Role::treated);
  for (auto j : d.covariate_indices(Role::donor)) cols.push_back(j);
  Eigen::MatrixXd x(ms.n_obs(), static_cast<Eigen::Index>(cols.size()));
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = d.covariates.col(cols[j]).head(ms.n_obs());
    const auto& c = d.covariate_columns[static_cast<std::size_t>(cols[j])];
    labels.push_back(c.unit + ":" + c.name);
  }
  return add_covariates(ms, x, labels);
}

void attach_pre_diagnostics(const PanelDataset& d, const Eigen::VectorXd& e_all, EffectReport& r) {
  const auto n_pre = d.n_pre();
  r.pre_times.assign(d.time_index.begin(), d.time_index.begin() + n_pre);
  r.pre_residuals = e_all.head(n_pre);
  r.pre_rmse = std::sqrt(r.pre_residuals.squaredNorm() / static_cast<double>(n_pre));
  r.post_times.assign(d.time_index.begin() + n_pre, d.time_index.end());
  r.e_hat = e_all.tail(d.n_post());
}

}  // namespace

Eigen::VectorXd residual_series(const PanelDataset& d, const SyntheticControl& sc) {
  if (sc.weights.size() != d.n_donors()) throw DataError("weight vector length differs from donor count");
  Eigen::VectorXd e = d.y - evaluate_bridge(sc.link, sc.intercept, sc.weights, d.donors);
  if (sc.adjustment.size() > 0) e -= sc.adjustment;
  return e;
}

Eigen::VectorXd contrast_series(const MomentSystem& ms, const Eigen::VectorXd& theta) {
  Eigen::VectorXd t = theta;
  const auto& b = ms.blocks();
  t.segment(b.effect_begin, b.n_effect).setZero();
  return ms.residuals(t);
}

SyntheticControl synthetic_control(const MomentSystem& ms, const Eigen::VectorXd& theta) {
  const auto& b = ms.blocks();
  SyntheticControl sc;
  sc.link = std::holds_alternative<ExponentialBridge>(ms.model()) ? Link::exponential : Link::identity;
  sc.intercept = b.intercept >= 0 ? theta(b.intercept) : 0.0;
  sc.weights = theta.segment(b.weights_begin, b.n_weights);
  if (b.n_covariates > 0) {
    Eigen::VectorXd no_cov = theta;
    no_cov.segment(b.covariates_begin, b.n_covariates).setZero();
    sc.adjustment = contrast_series(ms, no_cov) - contrast_series(ms, theta);
  }
  return sc;
}

EffectReport estimate_catt(const Eigen::VectorXd& e, const Eigen::VectorXd& v_in, std::optional<Eigen::Index> bandwidth) {
  const auto n = e.size();
  if (n < 1) throw DataError("CATT needs at least one post-treatment period");
  const Eigen::VectorXd v = v_in.size() ? v_in : Eigen::VectorXd::Ones(n);
  if (v.size() != n) throw DataError("CATT weights length differs from the series length");
  const double total = v.sum();
  if (v.cwiseAbs().sum() == 0.0 || total == 0.0) throw DataError("CATT weights are all zero");

  // Moment v_t (e_t - tau): one instrument, one parameter.
  const MomentSystem ms(v, LinearResidual{e, v}, {"tau"}, ParameterBlocks{.n_effect = 1}, Eigen::VectorXd::Zero(n));
  GmmFit fit;
  fit.theta = Eigen::VectorXd::Constant(1, v.dot(e) / total);
  fit.omega = Eigen::MatrixXd::Identity(1, 1);
  fit.n_obs = n;
  fit.param_names = {"tau"};
  fit.converged = true;

  EffectReport r;
  r.effect_model = "constant";
  r.names = {"tau"};
  r.estimate = fit.theta;
  r.e_hat = e;
  r.v = v;
  r.fitted = Eigen::VectorXd::Constant(n, fit.theta(0));
  r.se_hc = hc_covariance(ms, fit).standard_errors();
  if (n > 1) {
    const auto l = std::min(bandwidth.value_or(default_bandwidth(n)), n - 1);
    r.se_hac = hac_covariance(ms, fit, l).standard_errors();
    r.bandwidth = l;
  } else {
    r.se_hac = r.se_hc;
  }
  r.ci_hc = ci_matrix(r.estimate, r.se_hc);
  r.ci_hac = ci_matrix(r.estimate, r.se_hac);
  return r;
}

EffectReport fit_trend(const Eigen::VectorXd& e, const Eigen::VectorXd& s, const TrendBasis& basis,
                       std::optional<Eigen::Index> bandwidth) {
  const auto n = e.size();
  if (s.size() != n) throw DataError("normalized times length differs from the series length");
  if (n < basis.dim())
    throw IdentificationError("too few post-treatment periods: " + std::to_string(n) + " rows for " +
                              std::to_string(basis.dim()) + " trend parameters");
  const Eigen::MatrixXd phi = basis.evaluate(s);
  ParameterBlocks blocks;
  blocks.n_effect = basis.dim();
  const MomentSystem ms(phi, LinearResidual{e, phi}, basis.names(), blocks, Eigen::VectorXd::Zero(n));
  GmmFit fit;
  try {
    fit = solve_linear(ms);
  } catch (const IdentificationError& ex) {
    throw IdentificationError(std::string("collinear trend basis: ") + ex.what());
  }

  EffectReport r;
  r.effect_model = basis.name();
  r.names = basis.names();
  r.estimate = fit.theta;
  r.e_hat = e;
  r.fitted = phi * fit.theta;
  r.se_hc = hc_covariance(ms, fit).standard_errors();
  const auto l = std::min(bandwidth.value_or(default_bandwidth(n)), n - 1);
  r.se_hac = hac_covariance(ms, fit, l).standard_errors();
  r.bandwidth = l;
  r.ci_hc = ci_matrix(r.estimate, r.se_hc);
  r.ci_hac = ci_matrix(r.estimate, r.se_hac);
  return r;
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& x, Eigen::Index window) {
  if (window < 1) throw DataError("moving-average window must be positive");
  const auto n = x.size();
  const auto half_lo = (window - 1) / 2;
  const auto half_hi = window / 2;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto lo = std::max<Eigen::Index>(0, i - half_lo);
    const auto hi = std::min<Eigen::Index>(n - 1, i + half_hi);
    out(i) = x.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

EffectEstimator parse_effect_estimator(const std::string& name) {
  if (name == "pi-joint" || name == "pi_joint") return EffectEstimator::pi_joint;
  if (name == "pi-two-stage" || name == "pi_two_stage") return EffectEstimator::pi_two_stage;
  if (name == "bridge") return EffectEstimator::bridge;
  throw DataError("unknown PI estimator '" + name + "'");
}

std::string to_string(EffectEstimator e) {
  switch (e) {
    case EffectEstimator::pi_joint: return "pi-joint";
    case EffectEstimator::pi_two_stage: return "pi-two-stage";
    case EffectEstimator::bridge: return "bridge";
  }
  return "?";
}

CovariateMode parse_covariate_mode(const std::string& name) {
  if (name == "none") return CovariateMode::none;
  if (name == "per-unit" || name == "per_unit") return CovariateMode::per_unit;
  if (name == "pooled") return CovariateMode::pooled;
  throw DataError("unknown covariate mode '" + name + "' (expected none, per-unit or pooled)");
}

std::string to_string(CovariateMode m) {
  switch (m) {
    case CovariateMode::none: return "none";
    case CovariateMode::per_unit: return "per-unit";
    case CovariateMode::pooled: return "pooled";
  }
  return "?";
}

MomentSystem build_effect_system(const PanelDataset& d, const EffectOptions& opts) {
  if (opts.estimator == EffectEstimator::bridge) {
    if (opts.covariates != CovariateMode::none)
      throw DataError("covariate adjustment is not available for the bridge estimator");
    return build_joint_bridge_moments(d, opts.link, opts.basis, opts.instruments);
  }
  return with_covariates(d, build_joint_moments(d, opts.basis, opts.instruments), opts.covariates);
}

EffectAnalysis estimate_effects(const PanelDataset& d, const EffectOptions& opts) {
  d.validate();
  MomentSystem ms = build_effect_system(d, opts);
  GmmFit fit = solve(ms);
  if (opts.two_step) fit = two_step(ms, hc_covariance(ms, fit));
  GmmFit fit_hc = hc_covariance(ms, fit);
  GmmFit fit_hac = hac_covariance(ms, fit, opts.bandwidth);

  const Eigen::VectorXd e_all = contrast_series(ms, fit.theta);
  const auto& b = ms.blocks();
  EffectReport r;

  if (opts.estimator == EffectEstimator::pi_two_stage) {
    // Weights (and covariate coefficients) from the pre-period block only,
    // then the effect model fitted to the post-period contrasts.
    const Eigen::VectorXd s_post = d.normalized_times().tail(d.n_post());
    r = fit_trend(e_all.tail(d.n_post()), s_post, opts.basis, opts.bandwidth);
    // Standard errors from the stacked system so weight estimation counts.
    r.se_hc = fit_hc.standard_errors().segment(b.effect_begin, b.n_effect);
    r.se_hac = fit_hac.standard_errors().segment(b.effect_begin, b.n_effect);
    r.ci_hc = ci_matrix(r.estimate, r.se_hc);
    r.ci_hac = ci_matrix(r.estimate, r.se_hac);
    r.bandwidth = fit_hac.bandwidth;
  } else {
    r.effect_model = opts.basis.name();
    r.names = opts.basis.names();
    r.estimate = fit.theta.segment(b.effect_begin, b.n_effect);
    r.se_hc = fit_hc.standard_errors().segment(b.effect_begin, b.n_effect);
    r.se_hac = fit_hac.standard_errors().segment(b.effect_begin, b.n_effect);
    r.ci_hc = ci_matrix(r.estimate, r.se_hc);
    r.ci_hac = ci_matrix(r.estimate, r.se_hac);
    r.bandwidth = fit_hac.bandwidth;
    const Eigen::MatrixXd phi = opts.basis.evaluate(d.normalized_times().tail(d.n_post()));
    r.fitted = phi * r.estimate;
  }
  attach_pre_diagnostics(d, e_all, r);
  return EffectAnalysis{std::move(ms), std::move(fit_hc), std::move(fit_hac), std::move(r)};
}

EffectAnalysis placebo_run(const PanelDataset& d, long pseudo_t0, const EffectOptions& opts) {
  if (pseudo_t0 >= d.t0)
    throw DataError("placebo period " + std::to_string(pseudo_t0) + " must precede the treatment period " +
                    std::to_string(d.t0));
  if (pseudo_t0 < d.time_index.front())
    throw DataError("placebo period " + std::to_string(pseudo_t0) + " precedes the first observed period");
  PanelDataset placebo = d.truncated(d.n_pre(), pseudo_t0);
  try {
    placebo.validate();
  } catch (const DataError& ex) {
    throw DataError(std::string("placebo period leaves too few rows: ") + ex.what());
  }
  if (placebo.n_post() < opts.basis.dim())
    throw DataError("placebo period leaves too few post-placebo rows for the effect model");
  return estimate_effects(placebo, opts);
}

}  // namespace pisc
