#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pisc/baselines.hpp"
#include "pisc/simulate.hpp"

using namespace pisc;
using pisc::testing::make_panel;
using pisc::testing::random_matrix;

namespace {

double objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& a) {
  return (y - x * a).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

TEST_CASE("simplex projection") {
  SUBCASE("points on the simplex are fixed") {
    Eigen::Vector3d p(0.2, 0.3, 0.5);
    CHECK((project_simplex(p) - p).norm() < 1e-15);
  }
  SUBCASE("known projections") {
    CHECK((project_simplex(Eigen::Vector2d(2.0, 0.0)) - Eigen::Vector2d(1.0, 0.0)).norm() < 1e-15);
    CHECK((project_simplex(Eigen::Vector2d(0.5, 0.5)) - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-15);
    CHECK((project_simplex(Eigen::Vector3d(1.0, 1.0, 1.0)) - Eigen::Vector3d::Constant(1.0 / 3.0)).norm() < 1e-15);
  }
  SUBCASE("variational inequality against random simplex points") {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> expo(1.0);
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::VectorXd v = 3.0 * random_matrix(6, 1, rng).col(0);
      Eigen::VectorXd p = project_simplex(v);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(std::abs(p.sum() - 1.0) < 1e-12);
      for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd q(6);
        for (int j = 0; j < 6; ++j) q(j) = expo(rng);
        q /= q.sum();
        CHECK((v - p).dot(q - p) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(project_simplex(Eigen::VectorXd()), DataError);
}

TEST_CASE("constrained least squares satisfies the KKT conditions") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd x = random_matrix(40, 5, rng);
    Eigen::VectorXd y = random_matrix(40, 1, rng).col(0) + x.col(rep % 5);
    auto res = simplex_least_squares(x, y);
    const auto& a = res.weights;
    CHECK(res.converged);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(std::abs(a.sum() - 1.0) < 1e-8);
    const Eigen::VectorXd grad = 2.0 * x.transpose() * (x * a - y) / 40.0;
    double support_min = INFINITY, support_max = -INFINITY;
    for (int j = 0; j < 5; ++j)
      if (a(j) > 1e-8) {
        support_min = std::min(support_min, grad(j));
        support_max = std::max(support_max, grad(j));
      }
    CHECK(support_max - support_min < 1e-6);
    for (int j = 0; j < 5; ++j)
      if (a(j) <= 1e-8) CHECK(grad(j) >= support_min - 1e-6);
    for (int j = 0; j < 5; ++j)
      CHECK(res.objective <= objective(x, y, Eigen::VectorXd::Unit(5, j)) + 1e-12);
  }
}

TEST_CASE("noiseless panel: both OLS variants recover simplex weights") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd w = random_matrix(40, 3, rng).array() + 5.0;
  Eigen::MatrixXd z = random_matrix(40, 2, rng);
  Eigen::Vector3d alpha(0.2, 0.0, 0.8);
  Eigen::VectorXd y = w * alpha;
  y.tail(10).array() += 1.5;
  auto d = make_panel(y, w, z, 30);

  OlsOptions donors_only;
  donors_only.all_controls = false;
  auto c = fit_ols(d, true, donors_only);
  CHECK((c.weights - alpha).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(c.tau == doctest::Approx(1.5).epsilon(1e-6));

  auto u = fit_ols(d, false, donors_only);
  CHECK((u.weights - alpha).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(u.tau == doctest::Approx(1.5).epsilon(1e-10));
}

TEST_CASE("unconstrained fit solves the normal equations") {
  SimDesign design;
  design.r = 3;
  design.seed = 4;
  auto sim = generate(design);
  const auto& d = sim.data;
  auto fit = fit_ols(d, false);
  Eigen::MatrixXd x(d.n_periods(), 1 + 2 * design.r);
  x << d.post_indicator(), d.donors, d.proxies;
  const Eigen::VectorXd beta = (x.transpose() * x).llt().solve(x.transpose() * d.y);
  CHECK(std::abs(fit.tau - beta(0)) < 1e-10);
  CHECK((fit.weights - beta.tail(2 * design.r)).cwiseAbs().maxCoeff() < 1e-10);

  const Eigen::VectorXd resid = d.y - x * beta;
  const double s2 = resid.squaredNorm() / static_cast<double>(x.rows() - x.cols());
  const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
  CHECK(std::abs(fit.se_conventional - std::sqrt(s2 * inv(0, 0))) < 1e-10);
  CHECK(fit.synthetic.size() == d.n_periods());
}

TEST_CASE("covariate regressors in the unconstrained fit") {
  SimDesign design;
  design.covariates = true;
  design.xi = 1.0;
  design.seed = 5;
  auto sim = generate(design);
  OlsOptions opts;
  opts.covariates = true;
  auto fit = fit_ols(sim.data, false, opts);
  CHECK(fit.xi.size() == 1);
  CHECK(fit.xi(0) == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("collinear controls are an identification error") {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd w = random_matrix(20, 1, rng);
  auto d = make_panel(random_matrix(20, 1, rng).col(0), w, w, 14);
  CHECK_THROWS_AS(fit_ols(d, false), IdentificationError);
  CHECK_NOTHROW(fit_ols(d, true));
}

TEST_CASE("regression estimator is biased on the factor design") {
  const int reps = 200;
  Eigen::VectorXd est(reps);
  for (int rep = 0; rep < reps; ++rep) {
    SimDesign design;
    design.seed = replication_seed(8, static_cast<std::uint64_t>(rep));
    est(rep) = fit_ols(generate(design).data, false).tau;
  }
  const double bias = est.mean() - 2.0;
  const double mc_se = std::sqrt((est.array() - est.mean()).square().sum() / (reps - 1) / reps);
  CHECK(std::abs(bias) > 5.0 * mc_se);
}
