#include "pisc/report.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "pisc/gmm.hpp"

namespace pisc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string block_of(const ParameterBlocks& b, Eigen::Index j) {
  if (j == b.intercept) return "intercept";
  if (j >= b.weights_begin && j < b.weights_begin + b.n_weights) return "weight";
  if (j >= b.effect_begin && j < b.effect_begin + b.n_effect) return "effect";
  if (j >= b.covariates_begin && j < b.covariates_begin + b.n_covariates) return "covariate";
  return "other";
}

void band(const Eigen::VectorXd& fitted, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& cov, Eigen::VectorXd& lo,
          Eigen::VectorXd& hi) {
  lo.resize(fitted.size());
  hi.resize(fitted.size());
  for (Eigen::Index t = 0; t < fitted.size(); ++t) {
    const double se = std::sqrt(std::max(phi.row(t).dot(cov * phi.row(t).transpose()), 0.0));
    lo(t) = fitted(t) - kZ975 * se;
    hi(t) = fitted(t) + kZ975 * se;
  }
}

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

CovarianceChoice parse_covariance_choice(const std::string& name) {
  if (name == "hc") return CovarianceChoice::hc;
  if (name == "hac") return CovarianceChoice::hac;
  if (name == "both") return CovarianceChoice::both;
  throw DataError("unknown covariance '" + name + "' (expected hc, hac or both)");
}

std::string to_string(CovarianceChoice c) {
  switch (c) {
    case CovarianceChoice::hc: return "hc";
    case CovarianceChoice::hac: return "hac";
    case CovarianceChoice::both: return "both";
  }
  return "?";
}

FitSummary summarize_fit(const PanelDataset& d, const EffectAnalysis& a, const EffectOptions& opts) {
  FitSummary s;
  s.estimator = to_string(opts.estimator);
  s.effect_model = opts.basis.name();
  s.instruments = opts.instruments.name();
  s.covariates = to_string(opts.covariates);
  const auto& ms = a.system;
  const auto& b = ms.blocks();
  const auto& r = a.report;
  const Eigen::VectorXd se_hc = a.fit_hc.standard_errors();
  const Eigen::VectorXd se_hac = a.fit_hac.standard_errors();
  for (Eigen::Index j = 0; j < ms.param_dim(); ++j) {
    ParameterRow row;
    row.name = ms.param_names()[static_cast<std::size_t>(j)];
    row.block = block_of(b, j);
    row.estimate = a.fit_hc.theta(j);
    if (row.block == "effect") row.estimate = r.estimate(j - b.effect_begin);
    row.se_conventional = kNaN;
    row.se_hc = se_hc(j);
    row.se_hac = se_hac(j);
    s.parameters.push_back(row);
  }
  s.effect_names = r.names;
  s.effect = r.estimate;
  s.effect_se_hc = r.se_hc;
  s.effect_se_hac = r.se_hac;

  s.times = d.time_index;
  s.t0 = d.t0;
  s.y = d.y;
  s.synthetic = d.y - contrast_series(ms, a.fit_hc.theta);
  s.fitted = r.fitted;
  const Eigen::MatrixXd phi = opts.basis.evaluate(d.normalized_times().tail(d.n_post()));
  band(s.fitted, phi, a.fit_hc.covariance_matrix().block(b.effect_begin, b.effect_begin, b.n_effect, b.n_effect),
       s.band_hc_lower, s.band_hc_upper);
  band(s.fitted, phi, a.fit_hac.covariance_matrix().block(b.effect_begin, b.effect_begin, b.n_effect, b.n_effect),
       s.band_hac_lower, s.band_hac_upper);

  s.pre_rmse = r.pre_rmse;
  s.n_pre = d.n_pre();
  s.n_post = d.n_post();
  s.bandwidth = a.fit_hac.bandwidth;
  s.j_stat = a.fit_hc.j_stat;
  s.converged = a.fit_hc.converged;
  s.iterations = a.fit_hc.iterations;
  return s;
}

FitSummary summarize_fit(const PanelDataset& d, const OlsFit& f) {
  FitSummary s;
  s.estimator = f.constrained ? "ols-constrained" : "ols";
  s.effect_model = "constant";
  s.instruments = "none";
  s.covariates = f.xi.size() > 0 ? "treated" : "none";
  s.parameters.push_back({"tau", "effect", f.tau, f.se_conventional, f.se_hc, f.se_hac});
  for (std::size_t i = 0; i < f.labels.size(); ++i)
    s.parameters.push_back({"alpha[" + f.labels[i] + "]", "weight", f.weights(static_cast<Eigen::Index>(i)), kNaN,
                            kNaN, kNaN});
  for (Eigen::Index j = 0; j < f.xi.size(); ++j)
    s.parameters.push_back({"xi[" + std::to_string(j) + "]", "covariate", f.xi(j), kNaN, kNaN, kNaN});
  s.effect_names = {"tau"};
  s.effect = Eigen::VectorXd::Constant(1, f.tau);
  s.effect_se_hc = Eigen::VectorXd::Constant(1, f.se_hc);
  s.effect_se_hac = Eigen::VectorXd::Constant(1, f.se_hac);

  s.times = d.time_index;
  s.t0 = d.t0;
  s.y = d.y;
  s.synthetic = f.synthetic;
  const auto n_post = d.n_post();
  s.fitted = Eigen::VectorXd::Constant(n_post, f.tau);
  const auto [hc_lo, hc_hi] = f.ci(f.se_hc);
  const auto [hac_lo, hac_hi] = f.ci(f.se_hac);
  s.band_hc_lower = Eigen::VectorXd::Constant(n_post, hc_lo);
  s.band_hc_upper = Eigen::VectorXd::Constant(n_post, hc_hi);
  s.band_hac_lower = Eigen::VectorXd::Constant(n_post, hac_lo);
  s.band_hac_upper = Eigen::VectorXd::Constant(n_post, hac_hi);
  s.pre_rmse = f.pre_rmse;
  s.n_pre = d.n_pre();
  s.n_post = n_post;
  s.bandwidth = f.bandwidth;
  return s;
}

void write_parameter_table(const FitSummary& s, CovarianceChoice c, std::ostream& out) {
  const bool hc = c != CovarianceChoice::hac;
  const bool hac = c != CovarianceChoice::hc;
  const bool conventional = s.estimator == "ols" || s.estimator == "ols-constrained";
  out << "parameter\tblock\testimate";
  if (conventional) out << "\tse_conventional\tci_conventional_lower\tci_conventional_upper";
  if (hc) out << "\tse_hc\tci_hc_lower\tci_hc_upper";
  if (hac) out << "\tse_hac\tci_hac_lower\tci_hac_upper";
  out << '\n';
  auto cols = [&](double est, double se) {
    out << '\t' << format_number(se) << '\t' << format_number(est - kZ975 * se) << '\t'
        << format_number(est + kZ975 * se);
  };
  for (const auto& p : s.parameters) {
    out << p.name << '\t' << p.block << '\t' << format_number(p.estimate);
    if (conventional) cols(p.estimate, p.se_conventional);
    if (hc) cols(p.estimate, p.se_hc);
    if (hac) cols(p.estimate, p.se_hac);
    out << '\n';
  }
}

void write_series(const FitSummary& s, std::ostream& out, Eigen::Index ma_window) {
  const auto n = static_cast<Eigen::Index>(s.times.size());
  const Eigen::VectorXd e = s.y - s.synthetic;
  const Eigen::VectorXd ma = moving_average(e, ma_window);
  out << "t\ts\ty\tsynthetic\te_hat\tpost\tfitted\tband_hc_lower\tband_hc_upper\tband_hac_lower\tband_hac_upper"
         "\tmoving_average\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool post = i >= s.n_pre;
    const auto k = i - s.n_pre;
    out << s.times[static_cast<std::size_t>(i)] << '\t' << format_number(static_cast<double>(i + 1) / n) << '\t'
        << format_number(s.y(i)) << '\t' << format_number(s.synthetic(i)) << '\t' << format_number(e(i)) << '\t'
        << (post ? 1 : 0) << '\t' << format_number(post ? s.fitted(k) : kNaN) << '\t'
        << format_number(post ? s.band_hc_lower(k) : kNaN) << '\t' << format_number(post ? s.band_hc_upper(k) : kNaN)
        << '\t' << format_number(post ? s.band_hac_lower(k) : kNaN) << '\t'
        << format_number(post ? s.band_hac_upper(k) : kNaN) << '\t' << format_number(ma(i)) << '\n';
  }
}

nlohmann::json summary_json(const FitSummary& s, CovarianceChoice c) {
  nlohmann::json j;
  j["estimator"] = s.estimator;
  j["effect_model"] = s.effect_model;
  j["instruments"] = s.instruments;
  j["covariates"] = s.covariates;
  j["covariance"] = to_string(c);
  j["t0"] = s.t0;
  j["n_pre"] = s.n_pre;
  j["n_post"] = s.n_post;
  j["pre_rmse"] = number(s.pre_rmse);
  j["hac_bandwidth"] = s.bandwidth;
  j["converged"] = s.converged;
  j["iterations"] = s.iterations;
  j["j_stat"] = s.j_stat ? number(*s.j_stat) : nlohmann::json(nullptr);
  nlohmann::json effects = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.effect.size(); ++i) {
    nlohmann::json e;
    e["name"] = s.effect_names[static_cast<std::size_t>(i)];
    e["estimate"] = number(s.effect(i));
    if (c != CovarianceChoice::hac) {
      e["se_hc"] = number(s.effect_se_hc(i));
      e["ci_hc"] = {number(s.effect(i) - kZ975 * s.effect_se_hc(i)), number(s.effect(i) + kZ975 * s.effect_se_hc(i))};
    }
    if (c != CovarianceChoice::hc) {
      e["se_hac"] = number(s.effect_se_hac(i));
      e["ci_hac"] = {number(s.effect(i) - kZ975 * s.effect_se_hac(i)),
                     number(s.effect(i) + kZ975 * s.effect_se_hac(i))};
    }
    effects.push_back(e);
  }
  j["effects"] = effects;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : s.parameters)
    params.push_back({{"name", p.name},
                      {"block", p.block},
                      {"estimate", number(p.estimate)},
                      {"se_conventional", number(p.se_conventional)},
                      {"se_hc", number(p.se_hc)},
                      {"se_hac", number(p.se_hac)}});
  j["parameters"] = params;
  return j;
}

void write_conformal_table(const std::vector<ConformalResult>& results, std::ostream& out) {
  out << "period\tpoint\tlower\tupper\tlevel\tconnected\tgrid_min\tgrid_max\tgrid_points\n";
  for (const auto& r : results)
    out << r.period << '\t' << format_number(r.point) << '\t' << format_number(r.lower) << '\t'
        << format_number(r.upper) << '\t' << format_number(r.level) << '\t' << (r.connected ? "true" : "false")
        << '\t' << format_number(r.grid(0)) << '\t' << format_number(r.grid(r.grid.size() - 1)) << '\t'
        << r.grid.size() << '\n';
}

void write_conformal_grid(const std::vector<ConformalResult>& results, std::ostream& out) {
  out << "period\teta0\tp_value\taccepted\n";
  for (const auto& r : results)
    for (Eigen::Index i = 0; i < r.grid.size(); ++i)
      out << r.period << '\t' << format_number(r.grid(i)) << '\t' << format_number(r.p_values(i)) << '\t'
          << (r.p_values(i) > r.level ? 1 : 0) << '\n';
}

nlohmann::json conformal_json(const std::vector<ConformalResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results)
    arr.push_back({{"period", r.period},
                   {"point", number(r.point)},
                   {"lower", number(r.lower)},
                   {"upper", number(r.upper)},
                   {"level", r.level},
                   {"connected", r.connected}});
  return arr;
}

}  // namespace pisc
