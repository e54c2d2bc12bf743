#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

#include "pisc/panel.hpp"

namespace pisc {

/// Instrument transform g(Z) applied to the proxy block.
enum class InstrumentKind {
  proxies,         // Z
  affine,          // (1, Z')'
  affine_squares,  // (1, Z', (Z.^2)')'
};

struct InstrumentSpec {
  InstrumentKind kind = InstrumentKind::affine;

  /// Accepts "proxies", "affine" or "affine+squares".
  static InstrumentSpec parse(const std::string& name);
  std::string name() const;
  Eigen::Index dim(Eigen::Index n_proxies) const;
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& z) const;
};

/// Parametric basis phi(s) for the post-treatment effect path tau(s; gamma),
/// evaluated at normalized time s = t / T.
class TrendBasis {
 public:
  enum class Kind { constant, linear, quadratic, piecewise };

  static TrendBasis constant() { return TrendBasis(Kind::constant, {}); }
  static TrendBasis linear() { return TrendBasis(Kind::linear, {}); }
  static TrendBasis quadratic() { return TrendBasis(Kind::quadratic, {}); }
  /// Piecewise-constant effect with jumps at the given normalized times.
  static TrendBasis piecewise(std::vector<double> breakpoints);
  /// Accepts constant | linear | quadratic | piecewise:s1;s2;...
  static TrendBasis parse(const std::string& name);

  Kind kind() const { return kind_; }
  Eigen::Index dim() const;
  Eigen::RowVectorXd evaluate(double s) const;
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& s) const;
  std::vector<std::string> names() const;
  std::string name() const;

 private:
  TrendBasis(Kind kind, std::vector<double> breakpoints) : kind_(kind), breakpoints_(std::move(breakpoints)) {}
  Kind kind_;
  std::vector<double> breakpoints_;
};

enum class Link { identity, exponential };
Link parse_link(const std::string& name);

/// r(theta) = response - design * theta.
struct LinearResidual {
  Eigen::VectorXd response;
  Eigen::MatrixXd design;
};

/// r(theta) = response - effect * gamma - exp(intercept + donors * alpha),
/// theta = (intercept, alpha', gamma')'.
struct ExponentialBridge {
  Eigen::VectorXd response;
  Eigen::MatrixXd donors;
  Eigen::MatrixXd effect;
};

/// Covariates sharing one coefficient per variable across units:
/// r(theta) = response - donors * alpha - effect * gamma
///            - (treated_cov - sum_i alpha_i donor_cov[i]) * xi,
/// theta = (alpha', gamma', xi')'.
struct PooledCovariateResidual {
  Eigen::VectorXd response;
  Eigen::MatrixXd donors;
  Eigen::MatrixXd effect;
  Eigen::MatrixXd treated_cov;
  std::vector<Eigen::MatrixXd> donor_cov;
};

/// Location of each parameter group inside theta.
struct ParameterBlocks {
  Eigen::Index intercept = -1;  // -1 when absent
  Eigen::Index weights_begin = 0, n_weights = 0;
  Eigen::Index effect_begin = 0, n_effect = 0;
  Eigen::Index covariates_begin = 0, n_covariates = 0;
};

/// Stacked estimating functions U_t(theta) = V_t r_t(theta) over the rows
/// of a panel. Rows are observations; V is the instrument matrix.
class MomentSystem {
 public:
  using Model = std::variant<LinearResidual, ExponentialBridge, PooledCovariateResidual>;

  MomentSystem(Eigen::MatrixXd instruments, Model model, std::vector<std::string> param_names,
               ParameterBlocks blocks, Eigen::VectorXd weight_mask);

  Eigen::Index n_obs() const { return instruments_.rows(); }
  Eigen::Index instrument_dim() const { return instruments_.cols(); }
  Eigen::Index param_dim() const { return static_cast<Eigen::Index>(names_.size()); }
  bool linear() const { return std::holds_alternative<LinearResidual>(model_); }

  const Eigen::MatrixXd& instruments() const { return instruments_; }
  const Model& model() const { return model_; }
  const LinearResidual* linear_model() const { return std::get_if<LinearResidual>(&model_); }
  const std::vector<std::string>& param_names() const { return names_; }
  const ParameterBlocks& blocks() const { return blocks_; }
  /// 1 on rows where the weight-identifying instruments are active.
  const Eigen::VectorXd& weight_mask() const { return weight_mask_; }

  Eigen::VectorXd residuals(const Eigen::VectorXd& theta) const;
  /// n x k matrix of d r_t / d theta.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const;
  double residual(Eigen::Index t, const Eigen::VectorXd& theta) const;
  Eigen::RowVectorXd jacobian_row(Eigen::Index t, const Eigen::VectorXd& theta) const;

  /// n x d matrix whose rows are U_t(theta)'.
  Eigen::MatrixXd contributions(const Eigen::VectorXd& theta) const;
  /// m(theta) = (1/n) sum_t U_t(theta).
  Eigen::VectorXd sample_moments(const Eigen::VectorXd& theta) const;
  /// G(theta) = d m / d theta', a d x k matrix.
  Eigen::MatrixXd moment_jacobian(const Eigen::VectorXd& theta) const;

 private:
  Eigen::MatrixXd instruments_;
  Model model_;
  std::vector<std::string> names_;
  ParameterBlocks blocks_;
  Eigen::VectorXd weight_mask_;
};

/// Normal equations of the regression of Y on the donors (pre-period rows):
/// the instrument is the regressor itself.
MomentSystem build_ols_moments(const PanelRows& pre);

/// Weight-only proximal system on pre-treatment rows:
/// U_t(alpha) = g(Z_t) (Y_t - W_t' alpha).
MomentSystem build_weight_moments(const PanelRows& pre, const InstrumentSpec& g = {});

/// Joint weight + effect system over all rows:
/// instrument (1(t<=T0) g(Z_t)', 1(t>T0) phi(s_t)')',
/// residual Y_t - 1(t>T0) phi(s_t)' gamma - W_t' alpha.
MomentSystem build_joint_moments(const PanelDataset& d, const TrendBasis& effect, const InstrumentSpec& g = {});

/// Appends covariate columns as regressors with one coefficient each and
/// as instruments sharing the weight-instrument mask.
MomentSystem add_covariates(const MomentSystem& ms, const Eigen::MatrixXd& x,
                            const std::vector<std::string>& names = {});

/// Pooled covariate adjustment (one coefficient per variable shared by the
/// treated unit and the donors). `treated_cov` is n x q, `donor_cov[i]` is the
/// n x q block of donor i. All covariate columns join the instrument vector.
/// Requires a linear system without intercept whose design is (W, effect).
MomentSystem add_pooled_covariates(const MomentSystem& ms, const Eigen::MatrixXd& treated_cov,
                                   const std::vector<Eigen::MatrixXd>& donor_cov,
                                   const std::vector<std::string>& names = {});

/// Confounding-bridge system on pre-treatment rows with
/// h(w; alpha) = alpha_0 + alpha'w (identity) or exp(alpha_0 + alpha'w).
MomentSystem build_bridge_moments(const PanelRows& pre, Link link, const InstrumentSpec& g = {});

/// Bridge system over all rows with a post-period effect block.
MomentSystem build_joint_bridge_moments(const PanelDataset& d, Link link, const TrendBasis& effect,
                                        const InstrumentSpec& g = {});

/// Evaluates h(w; alpha) row-wise; throws NumericalError on overflow.
Eigen::VectorXd evaluate_bridge(Link link, double intercept, const Eigen::VectorXd& weights,
                                const Eigen::Ref<const Eigen::MatrixXd>& donors);

}  // namespace pisc
