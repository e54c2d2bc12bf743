#include "pisc/gmm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pisc {

namespace {

constexpr double kMaxCondition = 1e12;

Eigen::MatrixXd identity_if_empty(const Eigen::MatrixXd& omega, Eigen::Index d) {
  if (omega.size() == 0) return Eigen::MatrixXd::Identity(d, d);
  if (omega.rows() != d || omega.cols() != d)
    throw DataError("weighting matrix must be " + std::to_string(d) + " x " + std::to_string(d));
  return omega;
}

/// Upper Cholesky factor R with Omega = R' R.
Eigen::MatrixXd omega_root(const Eigen::MatrixXd& omega) {
  if (!omega.isApprox(omega.transpose(), 1e-10)) throw DataError("weighting matrix must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw DataError("weighting matrix must be positive definite");
  return llt.matrixU();
}

void check_identification(const Eigen::MatrixXd& g, const Eigen::MatrixXd& omega,
                          const std::vector<std::string>& names) {
  const Eigen::MatrixXd a = g.transpose() * omega * g;
  std::vector<std::string> zero_cols;
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    if (!(a(j, j) > 0.0)) zero_cols.push_back(names[static_cast<std::size_t>(j)]);
  auto join = [](const std::vector<std::string>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    return os.str();
  };
  if (!zero_cols.empty())
    throw IdentificationError("identification failure: no moment information for " + join(zero_cols));

  const Eigen::VectorXd scale = a.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd b = scale.asDiagonal() * a * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  const auto& ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > hi / kMaxCondition)) {
    Eigen::Index imin = 0;
    ev.minCoeff(&imin);
    const Eigen::VectorXd v = es.eigenvectors().col(imin).cwiseAbs();
    std::vector<std::string> cols;
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (v(j) > 0.1 * v.maxCoeff()) cols.push_back(names[static_cast<std::size_t>(j)]);
    std::ostringstream os;
    os << "identification failure: rank-deficient moment conditions (condition number "
       << (lo > 0 ? hi / lo : std::numeric_limits<double>::infinity()) << "); deficient columns: " << join(cols);
    throw IdentificationError(os.str());
  }
}

void finish(const MomentSystem& ms, GmmFit& fit) {
  const Eigen::VectorXd m = ms.sample_moments(fit.theta);
  fit.moment_norm = m.norm();
  fit.objective = m.dot(fit.omega * m);
  fit.g_hat = ms.moment_jacobian(fit.theta);
  fit.n_obs = ms.n_obs();
  fit.param_names = ms.param_names();
}

double objective_at(const MomentSystem& ms, const Eigen::MatrixXd& omega, const Eigen::VectorXd& theta) {
  try {
    const Eigen::VectorXd m = ms.sample_moments(theta);
    const double q = m.dot(omega * m);
    return std::isfinite(q) ? q : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

Eigen::VectorXd default_init(const MomentSystem& ms) {
  const auto k = ms.param_dim();
  const auto& b = ms.blocks();
  const auto& mask = ms.weight_mask();
  if (const auto* m = std::get_if<ExponentialBridge>(&ms.model())) {
    Eigen::Index n_fit = 0;
    for (Eigen::Index t = 0; t < mask.size(); ++t) n_fit += mask(t) > 0 ? 1 : 0;
    Eigen::MatrixXd x(n_fit, 1 + m->donors.cols());
    Eigen::VectorXd ly(n_fit);
    for (Eigen::Index t = 0, r = 0; t < mask.size(); ++t) {
      if (mask(t) <= 0) continue;
      x(r, 0) = 1.0;
      x.row(r).tail(m->donors.cols()) = m->donors.row(t);
      ly(r) = std::log(std::max(m->response(t), 0.5));
      ++r;
    }
    Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
    init.head(1 + m->donors.cols()) = x.colPivHouseholderQr().solve(ly);
    if (b.n_effect > 0) {
      const Eigen::VectorXd resid = m->response - evaluate_bridge(Link::exponential, init(0),
                                                                  init.segment(1, m->donors.cols()), m->donors);
      init.segment(b.effect_begin, b.n_effect) = m->effect.colPivHouseholderQr().solve(resid);
    }
    return init;
  }
  if (const auto* m = std::get_if<PooledCovariateResidual>(&ms.model())) {
    Eigen::MatrixXd design(ms.n_obs(), k);
    design << m->donors, m->effect, m->treated_cov;
    const MomentSystem approx(ms.instruments(), LinearResidual{m->response, design}, ms.param_names(), b, mask);
    return solve_linear(approx).theta;
  }
  return Eigen::VectorXd::Zero(k);
}

}  // namespace

std::string to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::none: return "none";
    case CovarianceKind::hc: return "hc";
    case CovarianceKind::hac: return "hac";
  }
  return "?";
}

Eigen::VectorXd GmmFit::standard_errors() const {
  if (sigma.size() == 0) return Eigen::VectorXd::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
  return covariance_matrix().diagonal().cwiseMax(0.0).cwiseSqrt();
}

double GmmFit::se(Eigen::Index j) const { return standard_errors()(j); }

std::pair<double, double> GmmFit::ci(Eigen::Index j, double z) const {
  const double s = se(j);
  return {theta(j) - z * s, theta(j) + z * s};
}

Eigen::Index GmmFit::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return static_cast<Eigen::Index>(i);
  throw DataError("no parameter named '" + name + "'");
}

GmmFit solve_linear(const MomentSystem& ms, const Eigen::MatrixXd& omega_in) {
  const auto* lin = ms.linear_model();
  if (!lin) throw DataError("solve_linear requires a linear moment system");
  const double n = static_cast<double>(ms.n_obs());
  const Eigen::MatrixXd omega = identity_if_empty(omega_in, ms.instrument_dim());
  const Eigen::MatrixXd root = omega_root(omega);

  const Eigen::MatrixXd g = ms.instruments().transpose() * lin->design / n;
  const Eigen::VectorXd a = ms.instruments().transpose() * lin->response / n;
  check_identification(g, omega, ms.param_names());

  GmmFit fit;
  fit.omega = omega;
  fit.theta = (root * g).colPivHouseholderQr().solve(root * a);
  fit.converged = true;
  fit.iterations = 0;
  finish(ms, fit);
  return fit;
}

GmmFit solve_nonlinear(const MomentSystem& ms, const Eigen::MatrixXd& omega_in, const Eigen::VectorXd& init,
                       const NonlinearOptions& opts) {
  if (init.size() != ms.param_dim()) throw DataError("initial value has wrong dimension");
  if (!init.allFinite()) throw DataError("initial value must be finite");
  const Eigen::MatrixXd omega = identity_if_empty(omega_in, ms.instrument_dim());
  const Eigen::MatrixXd root = omega_root(omega);

  GmmFit fit;
  fit.omega = omega;
  Eigen::VectorXd theta = init;
  double q = objective_at(ms, omega, theta);
  if (!std::isfinite(q)) throw NumericalError("objective is not finite at the initial value");

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Eigen::VectorXd m = ms.sample_moments(theta);
    const Eigen::MatrixXd g = ms.moment_jacobian(theta);
    const Eigen::VectorXd grad = 2.0 * g.transpose() * omega * m;
    if (grad.norm() < opts.gradient_tolerance * (1.0 + std::abs(q))) {
      fit.converged = true;
      break;
    }
    check_identification(g, omega, ms.param_names());
    const Eigen::VectorXd step = (root * g).colPivHouseholderQr().solve(-(root * m));
    const double slope = grad.dot(step);

    double t = 1.0;
    double q_new = objective_at(ms, omega, theta + step);
    while (q_new > q + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      q_new = objective_at(ms, omega, theta + t * step);
    }
    if (t <= 1e-12) {
      if (step.norm() <= 1e-10 * (1.0 + theta.norm())) {
        fit.converged = true;
        break;
      }
      throw NumericalError("line search failed to decrease the GMM objective");
    }
    theta += t * step;
    const bool small_step = (t * step).norm() <= opts.step_tolerance * (1.0 + theta.norm());
    q = q_new;
    if (small_step) {
      fit.converged = true;
      ++it;
      break;
    }
  }
  fit.theta = theta;
  fit.iterations = it;
  finish(ms, fit);
  return fit;
}

GmmFit solve(const MomentSystem& ms, const Eigen::MatrixXd& omega, const Eigen::VectorXd& init) {
  if (ms.linear()) return solve_linear(ms, omega);
  return solve_nonlinear(ms, omega, init.size() ? init : default_init(ms));
}

Eigen::MatrixXd long_run_covariance(const Eigen::MatrixXd& u, Eigen::Index bandwidth) {
  const auto n = u.rows();
  if (bandwidth < 0 || bandwidth >= n)
    throw DataError("HAC bandwidth " + std::to_string(bandwidth) + " must be in [0, " + std::to_string(n) + ")");
  Eigen::MatrixXd s = u.transpose() * u;
  for (Eigen::Index l = 1; l <= bandwidth; ++l) {
    const double w = 1.0 - static_cast<double>(l) / static_cast<double>(bandwidth + 1);
    const Eigen::MatrixXd gamma = u.bottomRows(n - l).transpose() * u.topRows(n - l);
    s += w * (gamma + gamma.transpose());
  }
  s /= static_cast<double>(n);
  return 0.5 * (s + s.transpose());
}

Eigen::Index default_bandwidth(Eigen::Index n) {
  return static_cast<Eigen::Index>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& g, const Eigen::MatrixXd& omega, const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd bread = (g.transpose() * omega * g).ldlt().solve(g.transpose() * omega);
  const Eigen::MatrixXd out = bread * s * bread.transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

GmmFit with_long_run(const MomentSystem& ms, const GmmFit& fit, Eigen::Index bandwidth, CovarianceKind kind) {
  GmmFit out = fit;
  const Eigen::MatrixXd u = ms.contributions(fit.theta);
  out.s_hat = long_run_covariance(u, bandwidth);
  out.g_hat = ms.moment_jacobian(fit.theta);
  out.sigma = sandwich(out.g_hat, out.omega, out.s_hat);
  out.covariance = kind;
  out.bandwidth = bandwidth;
  out.j_stat.reset();
  if (ms.instrument_dim() > ms.param_dim()) {
    const Eigen::VectorXd m = ms.sample_moments(fit.theta);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(out.s_hat);
    out.j_stat = static_cast<double>(ms.n_obs()) * m.dot(cod.solve(m));
  }
  return out;
}

}  // namespace

GmmFit hc_covariance(const MomentSystem& ms, const GmmFit& fit) {
  return with_long_run(ms, fit, 0, CovarianceKind::hc);
}

GmmFit hac_covariance(const MomentSystem& ms, const GmmFit& fit, std::optional<Eigen::Index> bandwidth) {
  const auto l = bandwidth.value_or(default_bandwidth(ms.n_obs()));
  if (l >= ms.n_obs())
    throw DataError("HAC bandwidth " + std::to_string(l) + " must be smaller than the sample size " +
                    std::to_string(ms.n_obs()));
  return with_long_run(ms, fit, l, CovarianceKind::hac);
}

GmmFit two_step(const MomentSystem& ms, const GmmFit& first) {
  if (first.s_hat.size() == 0) throw DataError("two-step GMM needs a first-step covariance estimate");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(first.s_hat);
  Eigen::MatrixXd omega = cod.pseudoInverse();
  omega = 0.5 * (omega + omega.transpose());
  return ms.linear() ? solve_linear(ms, omega) : solve_nonlinear(ms, omega, first.theta);
}

}  // namespace pisc
