#include "pisc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pisc/effects.hpp"
#include "pisc/gmm.hpp"

namespace pisc {

std::pair<double, double> OlsFit::ci(double se) const { return {tau - kZ975 * se, tau + kZ975 * se}; }

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  if (n == 0) throw DataError("cannot project an empty vector onto the simplex");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

namespace {

SimplexLsResult fista_simplex(const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xty, double yty, double n,
                              double lipschitz, Eigen::VectorXd start, double tolerance) {
  auto objective = [&](const Eigen::VectorXd& a) { return (yty - 2.0 * a.dot(xty) + a.dot(xtx * a)) / n; };
  auto gradient = [&](const Eigen::VectorXd& a) -> Eigen::VectorXd { return 2.0 * (xtx * a - xty) / n; };

  constexpr int kMaxIterations = 200000;
  Eigen::VectorXd a = project_simplex(start);
  Eigen::VectorXd z = a;
  double momentum = 1.0;
  double f = objective(a);
  SimplexLsResult res;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    Eigen::VectorXd next = project_simplex(z - gradient(z) / lipschitz);
    const double f_next = objective(next);
    if (f_next > f) {
      // Restart momentum from the last iterate.
      momentum = 1.0;
      z = a;
      next = project_simplex(a - gradient(a) / lipschitz);
    }
    const double step = (next - a).lpNorm<Eigen::Infinity>();
    const double m_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    z = next + ((momentum - 1.0) / m_next) * (next - a);
    momentum = m_next;
    a = std::move(next);
    f = objective(a);
    if (step < tolerance) {
      res.converged = true;
      break;
    }
  }
  res.weights = a;
  res.objective = std::max(f, 0.0);
  res.iterations = it;
  return res;
}

}  // namespace

SimplexLsResult simplex_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int restarts,
                                      std::uint64_t seed, double tolerance) {
  if (x.rows() != y.size()) throw DataError("simplex least squares: dimension mismatch");
  const auto k = x.cols();
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;
  const double yty = y.squaredNorm();
  const double lipschitz =
      std::max(2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(xtx, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() / n,
               std::numeric_limits<double>::min());

  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  SimplexLsResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Eigen::VectorXd start(k);
    if (r == 0) {
      start.setConstant(1.0 / static_cast<double>(k));
    } else {
      for (Eigen::Index j = 0; j < k; ++j) start(j) = expo(rng);
      start /= start.sum();
    }
    auto res = fista_simplex(xtx, xty, yty, n, lipschitz, start, tolerance);
    if (res.objective < best.objective) best = std::move(res);
  }
  return best;
}

OlsFit fit_ols(const PanelDataset& d, bool constrained, const OlsOptions& opts) {
  d.validate();
  const Eigen::MatrixXd controls = opts.all_controls ? d.controls() : d.donors;
  std::vector<std::string> labels = d.donor_labels;
  if (opts.all_controls) labels.insert(labels.end(), d.proxy_labels.begin(), d.proxy_labels.end());
  const auto n_pre = d.n_pre();
  const auto n_post = d.n_post();

  OlsFit out;
  out.constrained = constrained;
  out.labels = labels;

  if (constrained) {
    auto res = simplex_least_squares(controls.topRows(n_pre), d.y.head(n_pre), opts.restarts, opts.seed);
    out.weights = res.weights;
    out.synthetic = controls * res.weights;
    const Eigen::VectorXd e = d.y - out.synthetic;
    out.pre_rmse = std::sqrt(res.objective);
    out.e_hat = e.tail(n_post);
    const auto catt = estimate_catt(out.e_hat, {}, opts.bandwidth);
    out.tau = catt.estimate(0);
    out.se_hc = catt.se_hc(0);
    out.se_hac = catt.se_hac(0);
    out.bandwidth = catt.bandwidth;
    const double mean = out.e_hat.mean();
    out.se_conventional = n_post > 1 ? std::sqrt((out.e_hat.array() - mean).square().sum() /
                                                 static_cast<double>(n_post - 1) / static_cast<double>(n_post))
                                     : 0.0;
    return out;
  }

  const Eigen::MatrixXd cov = opts.covariates ? d.covariate_block(Role::treated) : Eigen::MatrixXd(d.n_periods(), 0);
  const auto k = 1 + controls.cols() + cov.cols();
  Eigen::MatrixXd x(d.n_periods(), k);
  x << d.post_indicator(), controls, cov;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < k) throw IdentificationError("collinear regressors in the OLS synthetic control");
  const Eigen::VectorXd beta = qr.solve(d.y);

  std::vector<std::string> names{"tau"};
  for (const auto& l : labels) names.push_back("alpha[" + l + "]");
  for (Eigen::Index j = 0; j < cov.cols(); ++j) names.push_back("xi[" + std::to_string(j) + "]");
  ParameterBlocks blocks;
  blocks.n_effect = 1;
  blocks.weights_begin = 1;
  blocks.n_weights = controls.cols();
  blocks.covariates_begin = 1 + controls.cols();
  blocks.n_covariates = cov.cols();
  const MomentSystem ms(x, LinearResidual{d.y, x}, names, blocks, Eigen::VectorXd::Ones(d.n_periods()));
  GmmFit fit;
  fit.theta = beta;
  fit.omega = Eigen::MatrixXd::Identity(k, k);
  fit.n_obs = d.n_periods();
  fit.param_names = names;
  fit.converged = true;

  const Eigen::VectorXd resid = d.y - x * beta;
  const double s2 = resid.squaredNorm() / static_cast<double>(d.n_periods() - k);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(k, k));

  out.tau = beta(0);
  out.weights = beta.segment(1, controls.cols());
  out.xi = beta.tail(cov.cols());
  out.se_conventional = std::sqrt(s2 * xtx_inv(0, 0));
  out.se_hc = hc_covariance(ms, fit).se(0);
  const auto hac = hac_covariance(ms, fit, opts.bandwidth);
  out.se_hac = hac.se(0);
  out.bandwidth = hac.bandwidth;
  out.pre_rmse = std::sqrt(resid.head(n_pre).squaredNorm() / static_cast<double>(n_pre));
  out.synthetic = controls * out.weights + cov * out.xi;
  out.e_hat = (d.y - out.synthetic).tail(n_post);
  return out;
}

}  // namespace pisc
