#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pisc/monte_carlo.hpp"
#include "pisc/simulate.hpp"

using namespace pisc;

namespace {

double lag1_autocorrelation(const Eigen::VectorXd& x) {
  const Eigen::VectorXd c = x.array() - x.mean();
  const auto n = c.size();
  return c.head(n - 1).dot(c.tail(n - 1)) / c.squaredNorm();
}

}  // namespace

TEST_CASE("same seed gives the same panel") {
  SimDesign design;
  design.r = 3;
  design.covariates = true;
  design.xi = 1.0;
  design.seed = 11;
  auto a = generate(design);
  auto b = generate(design);
  CHECK(a.data.y == b.data.y);
  CHECK(a.data.donors == b.data.donors);
  CHECK(a.data.proxies == b.data.proxies);
  CHECK(a.data.covariates == b.data.covariates);
  design.seed = 12;
  auto c = generate(design);
  CHECK(a.data.y != c.data.y);
}

TEST_CASE("panel shape follows the design") {
  SimDesign design;
  design.r = 5;
  design.t0 = 30;
  design.t1 = 7;
  auto sim = generate(design);
  const auto& d = sim.data;
  CHECK(d.n_periods() == 37);
  CHECK(d.n_pre() == 30);
  CHECK(d.n_post() == 7);
  CHECK(d.n_donors() == 5);
  CHECK(d.n_proxies() == 5);
  CHECK(d.donor_labels.size() + d.proxy_labels.size() == 10);
  CHECK(d.t0 == 30);
  CHECK(d.time_index.front() == 1);
  CHECK(d.time_index.back() == 37);
  CHECK_NOTHROW(d.validate());
  CHECK(d.covariates.cols() == 0);
}

TEST_CASE("truth record reproduces the outcomes") {
  SimDesign design;
  design.r = 2;
  design.covariates = true;
  design.xi = 0.5;
  design.seed = 13;
  auto sim = generate(design);
  const auto& d = sim.data;
  const auto& tr = sim.truth;
  CHECK(tr.alpha == Eigen::VectorXd::Ones(2));
  for (Eigen::Index t = 0; t < d.n_periods(); ++t) {
    const double y = tr.factors.row(t).sum() + tr.effect(t) + design.xi * d.covariates(t, 0) + tr.errors(t, 0);
    CHECK(std::abs(d.y(t) - y) < 1e-12);
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(d.donors(t, k) - tr.factors(t, k) - design.xi * d.covariates(t, 1 + k) - tr.errors(t, 1 + k)) <
            1e-12);
      CHECK(std::abs(d.proxies(t, k) - tr.factors(t, k) - design.xi * d.covariates(t, 3 + k) - tr.errors(t, 3 + k)) <
            1e-12);
    }
    CHECK(tr.effect(t) == (t < design.t0 ? 0.0 : 2.0));
  }
  // Treated signal equals the donor signal under the unit weights.
  const Eigen::VectorXd gap = d.y - d.donors * tr.alpha;
  const Eigen::VectorXd noise = tr.errors.col(0) - tr.errors.middleCols(1, 2).rowwise().sum() + tr.effect +
                                design.xi * (d.covariates.col(0) - d.covariates.middleCols(1, 2).rowwise().sum());
  CHECK((gap - noise).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("factor means grow like log t") {
  SimDesign design;
  design.r = 1;
  design.t0 = 5000;
  design.t1 = 5000;
  design.seed = 14;
  auto sim = generate(design);
  const Eigen::VectorXd centered =
      sim.truth.factors.col(0) -
      Eigen::VectorXd::LinSpaced(10000, 1, 10000).array().log().matrix();
  CHECK(std::abs(centered.mean()) < 4.0 / std::sqrt(10000.0));
  const double var = (centered.array() - centered.mean()).square().mean();
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("AR(1) errors have the requested autocorrelation") {
  SimDesign design;
  design.error_law = ErrorLaw::ar1;
  design.t0 = 50000;
  design.t1 = 50000;
  design.seed = 15;
  auto sim = generate(design);
  for (Eigen::Index j = 0; j < sim.truth.errors.cols(); ++j) {
    const double rho = lag1_autocorrelation(sim.truth.errors.col(j));
    CHECK(std::abs(rho - 0.1) < 4.0 / std::sqrt(100000.0));
  }
  design.error_law = ErrorLaw::iid_normal;
  auto iid = generate(design);
  CHECK(std::abs(lag1_autocorrelation(iid.truth.errors.col(0))) < 4.0 / std::sqrt(100000.0));
}

TEST_CASE("linear trend effect path") {
  SimDesign design;
  design.effect = EffectPath::linear_trend;
  design.t0 = 10;
  design.t1 = 10;
  CHECK(design.effect_at(10) == 0.0);
  CHECK(design.effect_at(11) == doctest::Approx(1.0 + 11.0 / 20.0));
  CHECK(design.effect_at(20) == doctest::Approx(2.0));
}

TEST_CASE("Poisson design") {
  SimDesign design;
  design.family = OutcomeFamily::poisson;
  design.r = 2;
  design.t0 = 20000;
  design.t1 = 1;
  design.seed = 16;
  auto sim = generate(design);
  const auto& d = sim.data;
  CHECK(d.donors.minCoeff() >= 0.0);
  CHECK((d.donors.array() == d.donors.array().round()).all());
  CHECK(sim.truth.bridge_weights(0) == doctest::Approx(std::log1p(0.1)));
  CHECK(sim.truth.bridge_intercept == doctest::Approx(design.poisson_intercept()));
  // E[Y(0) | W] = exp(c + b'W): check on the pre rows with the exact bridge.
  const Eigen::VectorXd h =
      (sim.truth.bridge_intercept + (d.donors.topRows(20000) * sim.truth.bridge_weights).array()).exp();
  const Eigen::VectorXd resid = d.y.head(20000) - h;
  const double se = std::sqrt((resid.array() - resid.mean()).square().mean() / 20000.0);
  CHECK(std::abs(resid.mean()) < 4.0 * se);
  const Eigen::VectorXd rate =
      (sim.truth.bridge_intercept + sim.truth.factors.topRows(20000).rowwise().sum().array()).exp();
  CHECK(std::abs(d.y.head(20000).mean() - rate.mean()) < 4.0 * std::sqrt(rate.mean() / 20000.0));
  SimDesign bad = design;
  bad.covariates = true;
  CHECK_THROWS_AS(generate(bad), DataError);
}

TEST_CASE("invalid designs") {
  SimDesign design;
  design.r = 0;
  CHECK_THROWS_AS(generate(design), DataError);
  design = SimDesign{};
  design.t0 = 2;
  CHECK_THROWS_AS(generate(design), DataError);
  design = SimDesign{};
  design.error_law = ErrorLaw::ar1;
  design.ar_coef = 1.0;
  CHECK_THROWS_AS(generate(design), DataError);
  design = SimDesign{};
  design.error_sd = -1.0;
  CHECK_THROWS_AS(generate(design), DataError);
  CHECK(parse_error_law("ar1") == ErrorLaw::ar1);
  CHECK(parse_outcome_family(to_string(OutcomeFamily::poisson)) == OutcomeFamily::poisson);
  CHECK(parse_effect_path(to_string(EffectPath::linear_trend)) == EffectPath::linear_trend);
  CHECK_THROWS_AS(parse_error_law("garch"), DataError);
}

TEST_CASE("replication seeds are distinct and reproducible") {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t rep = 0; rep < 1000; ++rep) seeds.push_back(replication_seed(20240101, rep));
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
  CHECK(replication_seed(1, 5) == replication_seed(1, 5));
  CHECK(replication_seed(1, 5) != replication_seed(2, 5));
}

TEST_CASE("Monte Carlo results do not depend on the worker count") {
  SimDesign design;
  design.t0 = 40;
  design.t1 = 10;
  McOptions opts;
  opts.reps = 24;
  opts.seed = 17;
  opts.estimators = {McEstimator::pi_joint, McEstimator::ols, McEstimator::conformal};
  opts.conformal.grid_points = 41;
  auto serial = run_monte_carlo_serial(design, opts);
  for (int workers : {1, 2, 4}) {
    opts.workers = workers;
    auto par = run_monte_carlo(design, opts);
    CHECK(par.estimates == serial.estimates);
    CHECK(par.lower == serial.lower);
    CHECK(par.upper == serial.upper);
  }
  // A single replication regenerates on its own.
  const auto n = static_cast<Eigen::Index>(serial.cells.size());
  Eigen::VectorXd est(n), lo(n), hi(n);
  run_replication(design, opts, 7, est.data(), lo.data(), hi.data());
  CHECK(est.transpose() == serial.estimates.row(7));
}

TEST_CASE("noiseless Monte Carlo recovers the effect exactly") {
  SimDesign design;
  design.error_sd = 0.0;
  design.t0 = 30;
  design.t1 = 10;
  McOptions opts;
  opts.reps = 5;
  opts.estimators = {McEstimator::pi_joint, McEstimator::ols};
  auto res = run_monte_carlo_serial(design, opts);
  const auto& pi = res.row(McEstimator::pi_joint, "tau", IntervalKind::hc);
  CHECK(pi.n_ok == 5);
  CHECK(std::abs(pi.bias) < 1e-9);
  CHECK(pi.mc_sd < 1e-9);
  // Donors and proxies coincide, so the unconstrained regression is singular.
  const auto& ols = res.row(McEstimator::ols, "tau", IntervalKind::conventional);
  CHECK(ols.failures == 5);
  CHECK(std::isnan(ols.mean));
}

TEST_CASE("summary oracle") {
  std::vector<McCell> cells{{McEstimator::pi_joint, "tau", IntervalKind::hc, 2.0}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd est(4, 1), lo(4, 1), hi(4, 1);
  est << 1.0, 2.0, 3.0, nan;
  lo << 0.5, 1.0, 2.5, 0.0;
  hi << 1.5, 3.0, 3.5, 1.0;
  auto rows = summarize(cells, est, lo, hi);
  REQUIRE(rows.size() == 1);
  const auto& r = rows[0];
  CHECK(r.n_ok == 3);
  CHECK(r.failures == 1);
  CHECK(r.mean == doctest::Approx(2.0));
  CHECK(r.bias == doctest::Approx(0.0));
  CHECK(r.mc_sd == doctest::Approx(1.0));
  CHECK(r.mc_se == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(r.mean_width == doctest::Approx(4.0 / 3.0));
  CHECK(r.coverage == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("table layouts") {
  std::vector<McResult> runs;
  for (Eigen::Index t0 : {30, 60}) {
    SimDesign design;
    design.t0 = t0;
    design.t1 = t0;
    McOptions opts;
    opts.reps = 4;
    runs.push_back(run_monte_carlo(design, opts));
  }
  std::ostringstream t1;
  write_table1(runs, t1);
  std::istringstream lines(t1.str());
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "N\tOLS_xi0_T30\tOLS_xi0_T60\tPI_xi0_T30\tPI_xi0_T60");
  CHECK(row.rfind("2\t", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), '%') == 4);
  CHECK_FALSE(std::getline(lines, extra));

  std::ostringstream long_table;
  write_mc_table(runs[0], long_table);
  const auto text = long_table.str();
  CHECK(text.rfind("estimator\tparameter\tinterval\t", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == runs[0].rows.size() + 1);
  CHECK(text.find("pi-joint\ttau\thc\t30\t30\t2\t") != std::string::npos);
}
