#include "pisc/simulate.hpp"

#include <cmath>
#include <random>

namespace pisc {

double SimDesign::effect_at(Eigen::Index t) const {
  if (t <= t0) return 0.0;
  if (effect == EffectPath::constant) return tau;
  return gamma0 + gamma1 * static_cast<double>(t) / static_cast<double>(n_periods());
}

double SimDesign::poisson_intercept() const {
  // E[psi] for the lognormal factor; the mean count is approximately
  // poisson_mean.
  const double mean_psi = std::exp(0.5 * psi_sd * psi_sd);
  return std::log(poisson_mean) - static_cast<double>(r) * mean_psi;
}

void SimDesign::validate() const {
  if (r < 1) throw DataError("design needs at least one factor");
  if (t0 < r + 2 || t1 < 1) throw DataError("design needs t0 >= r + 2 and t1 >= 1");
  if (error_law == ErrorLaw::ar1 && !(std::abs(ar_coef) < 1.0)) throw DataError("AR(1) coefficient must be in (-1, 1)");
  if (family == OutcomeFamily::poisson && covariates)
    throw DataError("covariates are not supported for the Poisson design");
  if (!(error_sd >= 0.0)) throw DataError("error_sd must be non-negative");
}

std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (rep + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimulatedPanel generate(const SimDesign& design) {
  design.validate();
  const auto T = design.n_periods();
  const int r = design.r;
  const int n_controls = design.n_controls();

  std::mt19937_64 rng(design.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedPanel out;
  auto& d = out.data;
  auto& truth = out.truth;

  d.time_index.resize(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) d.time_index[static_cast<std::size_t>(t)] = t + 1;
  d.t0 = design.t0;
  d.treated_label = "treated";
  for (int k = 0; k < r; ++k) d.donor_labels.push_back("donor" + std::to_string(k + 1));
  for (int k = 0; k < r; ++k) d.proxy_labels.push_back("proxy" + std::to_string(k + 1));

  truth.alpha = Eigen::VectorXd::Ones(r);
  truth.effect.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) truth.effect(t) = design.effect_at(t + 1);

  // Unit j = 0 is treated; control unit j (1..N) loads on factor (j - 1) mod r.
  Eigen::MatrixXd outcomes(T, n_controls + 1);
  truth.factors.resize(T, r);
  truth.errors.resize(T, n_controls + 1);

  if (design.family == OutcomeFamily::gaussian) {
    for (Eigen::Index t = 0; t < T; ++t)
      for (int k = 0; k < r; ++k) truth.factors(t, k) = std::log(static_cast<double>(t + 1)) + normal(rng);

    Eigen::MatrixXd cov;
    if (design.covariates) {
      cov.resize(T, n_controls + 1);
      for (int j = 0; j <= n_controls; ++j)
        for (Eigen::Index t = 0; t < T; ++t) cov(t, j) = normal(rng);
    }

    for (int j = 0; j <= n_controls; ++j) {
      double prev = 0.0;
      if (design.error_law == ErrorLaw::ar1)
        for (int b = 0; b < design.burn_in; ++b) prev = design.ar_coef * prev + normal(rng);
      for (Eigen::Index t = 0; t < T; ++t) {
        double e = normal(rng);
        if (design.error_law == ErrorLaw::ar1) {
          e += design.ar_coef * prev;
          prev = e;
        }
        truth.errors(t, j) = design.error_sd * e;
      }
    }

    for (Eigen::Index t = 0; t < T; ++t) {
      double signal0 = truth.factors.row(t).sum();
      outcomes(t, 0) = signal0 + truth.effect(t) + truth.errors(t, 0);
      for (int j = 1; j <= n_controls; ++j) outcomes(t, j) = truth.factors(t, (j - 1) % r) + truth.errors(t, j);
      if (design.covariates)
        for (int j = 0; j <= n_controls; ++j) outcomes(t, j) += design.xi * cov(t, j);
    }

    if (design.covariates) {
      d.covariates = cov;
      d.covariate_columns.push_back({d.treated_label, "c", Role::treated});
      for (const auto& u : d.donor_labels) d.covariate_columns.push_back({u, "c", Role::donor});
      for (const auto& u : d.proxy_labels) d.covariate_columns.push_back({u, "c", Role::proxy});
    } else {
      d.covariates.resize(T, 0);
    }
    truth.bridge_intercept = 0.0;
    truth.bridge_weights = truth.alpha;
  } else {
    const double c = design.poisson_intercept();
    const double kappa = design.poisson_kappa;
    for (Eigen::Index t = 0; t < T; ++t)
      for (int k = 0; k < r; ++k) truth.factors(t, k) = std::exp(design.psi_sd * normal(rng));
    for (Eigen::Index t = 0; t < T; ++t) {
      const double rate0 = std::exp(c + truth.factors.row(t).sum());
      const double y0 = static_cast<double>(std::poisson_distribution<long>(rate0)(rng));
      truth.errors(t, 0) = y0 - rate0;
      outcomes(t, 0) = y0 + truth.effect(t);
      for (int j = 1; j <= n_controls; ++j) {
        const double rate = kappa * truth.factors(t, (j - 1) % r);
        const double w = static_cast<double>(std::poisson_distribution<long>(rate)(rng));
        truth.errors(t, j) = w - rate;
        outcomes(t, j) = w;
      }
    }
    d.covariates.resize(T, 0);
    truth.bridge_intercept = c;
    truth.bridge_weights = Eigen::VectorXd::Constant(r, std::log1p(1.0 / kappa));
  }

  d.y = outcomes.col(0);
  d.donors = outcomes.middleCols(1, r);
  d.proxies = outcomes.middleCols(1 + r, r);
  return out;
}

std::string to_string(ErrorLaw e) { return e == ErrorLaw::iid_normal ? "iid" : "ar1"; }
std::string to_string(OutcomeFamily f) { return f == OutcomeFamily::gaussian ? "gaussian" : "poisson"; }
std::string to_string(EffectPath p) { return p == EffectPath::constant ? "constant" : "linear"; }

ErrorLaw parse_error_law(const std::string& s) {
  if (s == "iid" || s == "iid_normal") return ErrorLaw::iid_normal;
  if (s == "ar1") return ErrorLaw::ar1;
  throw DataError("unknown error law '" + s + "' (expected iid or ar1)");
}

OutcomeFamily parse_outcome_family(const std::string& s) {
  if (s == "gaussian") return OutcomeFamily::gaussian;
  if (s == "poisson") return OutcomeFamily::poisson;
  throw DataError("unknown outcome family '" + s + "' (expected gaussian or poisson)");
}

EffectPath parse_effect_path(const std::string& s) {
  if (s == "constant") return EffectPath::constant;
  if (s == "linear" || s == "linear_trend") return EffectPath::linear_trend;
  throw DataError("unknown effect path '" + s + "' (expected constant or linear)");
}

}  // namespace pisc
