#include "pisc/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <tuple>

#include <omp.h>

#include "pisc/baselines.hpp"
#include "pisc/effects.hpp"

namespace pisc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

TrendBasis basis_for(const SimDesign& design) {
  return design.effect == EffectPath::constant ? TrendBasis::constant() : TrendBasis::linear();
}

double mean_post_effect(const SimDesign& design) {
  double s = 0.0;
  for (Eigen::Index t = design.t0 + 1; t <= design.n_periods(); ++t) s += design.effect_at(t);
  return s / static_cast<double>(design.t1);
}

bool needs_covariates(McEstimator e) { return e == McEstimator::pi_covariates || e == McEstimator::pi_pooled; }

std::vector<McCell> cells_of(McEstimator e, const SimDesign& design) {
  std::vector<McCell> out;
  switch (e) {
    case McEstimator::pi_joint:
    case McEstimator::pi_covariates:
    case McEstimator::pi_pooled:
    case McEstimator::pi_two_stage:
    case McEstimator::bridge: {
      const auto names = basis_for(design).names();
      for (std::size_t j = 0; j < names.size(); ++j) {
        double truth = design.tau;
        if (design.effect == EffectPath::linear_trend) truth = j == 0 ? design.gamma0 : design.gamma1;
        for (auto k : {IntervalKind::hc, IntervalKind::hac}) out.push_back({e, names[j], k, truth});
      }
      break;
    }
    case McEstimator::ols:
    case McEstimator::ols_constrained:
      for (auto k : {IntervalKind::conventional, IntervalKind::hc, IntervalKind::hac})
        out.push_back({e, "tau", k, mean_post_effect(design)});
      break;
    case McEstimator::conformal:
      out.push_back({e, "eta[" + std::to_string(design.t0 + 1) + "]", IntervalKind::conformal,
                     design.effect_at(design.t0 + 1)});
      break;
  }
  return out;
}

struct Draw {
  double estimate = kNaN, lower = kNaN, upper = kNaN;
};

std::vector<Draw> evaluate(McEstimator e, const PanelDataset& d, const SimDesign& design, const McOptions& opts) {
  std::vector<Draw> out;
  switch (e) {
    case McEstimator::pi_joint:
    case McEstimator::pi_covariates:
    case McEstimator::pi_pooled:
    case McEstimator::pi_two_stage:
    case McEstimator::bridge: {
      EffectOptions eo;
      eo.basis = basis_for(design);
      eo.instruments = opts.instruments;
      eo.bandwidth = opts.bandwidth;
      eo.estimator = e == McEstimator::pi_two_stage ? EffectEstimator::pi_two_stage
                     : e == McEstimator::bridge     ? EffectEstimator::bridge
                                                    : EffectEstimator::pi_joint;
      if (e == McEstimator::pi_covariates) eo.covariates = CovariateMode::per_unit;
      if (e == McEstimator::pi_pooled) eo.covariates = CovariateMode::pooled;
      const auto a = estimate_effects(d, eo);
      if (!a.fit_hc.converged) throw NumericalError("solver did not converge");
      const auto& r = a.report;
      for (Eigen::Index j = 0; j < r.estimate.size(); ++j) {
        out.push_back({r.estimate(j), r.ci_hc(j, 0), r.ci_hc(j, 1)});
        out.push_back({r.estimate(j), r.ci_hac(j, 0), r.ci_hac(j, 1)});
      }
      break;
    }
    case McEstimator::ols:
    case McEstimator::ols_constrained: {
      OlsOptions oo;
      oo.bandwidth = opts.bandwidth;
      oo.covariates = e == McEstimator::ols && design.covariates;
      const auto f = fit_ols(d, e == McEstimator::ols_constrained, oo);
      for (double se : {f.se_conventional, f.se_hc, f.se_hac}) {
        const auto [lo, hi] = f.ci(se);
        out.push_back({f.tau, lo, hi});
      }
      break;
    }
    case McEstimator::conformal: {
      const long period = d.time_index[static_cast<std::size_t>(d.n_pre())];
      const auto c = conformal_interval_default_serial(d, period, opts.conformal);
      out.push_back({c.point, c.lower, c.upper});
      break;
    }
  }
  return out;
}

McResult run_impl(const SimDesign& design, const McOptions& opts, bool parallel) {
  design.validate();
  if (opts.reps < 1) throw DataError("Monte Carlo needs at least one replication");
  McResult res;
  res.design = design;
  res.options = opts;
  res.cells = mc_cells(design, opts.estimators);
  const auto n_cells = static_cast<Eigen::Index>(res.cells.size());
  // Row-major per replication so each worker writes a contiguous slot.
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor est(opts.reps, n_cells), lo(opts.reps, n_cells), hi(opts.reps, n_cells);

  const int threads = opts.workers > 0 ? opts.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (parallel)
  for (int rep = 0; rep < opts.reps; ++rep)
    run_replication(design, opts, static_cast<std::uint64_t>(rep), est.row(rep).data(),
                    lo.row(rep).data(), hi.row(rep).data());

  res.estimates = est;
  res.lower = lo;
  res.upper = hi;
  res.rows = summarize(res.cells, res.estimates, res.lower, res.upper);
  return res;
}

}  // namespace

McEstimator parse_mc_estimator(const std::string& name) {
  static const std::map<std::string, McEstimator> table{
      {"pi-joint", McEstimator::pi_joint},         {"pi-covariates", McEstimator::pi_covariates},
      {"pi-pooled", McEstimator::pi_pooled},       {"pi-two-stage", McEstimator::pi_two_stage},
      {"ols", McEstimator::ols},                   {"ols-constrained", McEstimator::ols_constrained},
      {"bridge", McEstimator::bridge},             {"conformal", McEstimator::conformal}};
  const auto it = table.find(name);
  if (it == table.end()) throw DataError("unknown Monte Carlo estimator '" + name + "'");
  return it->second;
}

std::string to_string(McEstimator e) {
  switch (e) {
    case McEstimator::pi_joint: return "pi-joint";
    case McEstimator::pi_covariates: return "pi-covariates";
    case McEstimator::pi_pooled: return "pi-pooled";
    case McEstimator::pi_two_stage: return "pi-two-stage";
    case McEstimator::ols: return "ols";
    case McEstimator::ols_constrained: return "ols-constrained";
    case McEstimator::bridge: return "bridge";
    case McEstimator::conformal: return "conformal";
  }
  return "?";
}

std::string to_string(IntervalKind k) {
  switch (k) {
    case IntervalKind::hc: return "hc";
    case IntervalKind::hac: return "hac";
    case IntervalKind::conventional: return "conventional";
    case IntervalKind::conformal: return "conformal";
  }
  return "?";
}

const McRow& McResult::row(McEstimator e, const std::string& parameter, IntervalKind k) const {
  for (const auto& r : rows)
    if (r.cell.estimator == e && r.cell.parameter == parameter && r.cell.interval == k) return r;
  throw DataError("no Monte Carlo row for " + to_string(e) + "/" + parameter + "/" + to_string(k));
}

std::vector<McCell> mc_cells(const SimDesign& design, const std::vector<McEstimator>& estimators) {
  std::vector<McCell> cells;
  for (auto e : estimators) {
    if (needs_covariates(e) && !design.covariates)
      throw DataError(to_string(e) + " needs a design with covariates");
    if (e == McEstimator::bridge && design.effect != EffectPath::constant && design.family == OutcomeFamily::poisson)
      throw DataError("the Poisson design supports a constant effect only");
    auto c = cells_of(e, design);
    cells.insert(cells.end(), c.begin(), c.end());
  }
  return cells;
}

void run_replication(const SimDesign& design, const McOptions& opts, std::uint64_t rep, double* estimates,
                     double* lower, double* upper) {
  SimDesign rd = design;
  rd.seed = replication_seed(opts.seed, rep);
  const auto panel = generate(rd);
  std::size_t pos = 0;
  for (auto e : opts.estimators) {
    const auto n = cells_of(e, design).size();
    std::vector<Draw> draws;
    try {
      draws = evaluate(e, panel.data, design, opts);
    } catch (const std::exception&) {
      draws.assign(n, Draw{});
    }
    for (std::size_t j = 0; j < n; ++j, ++pos) {
      estimates[pos] = draws[j].estimate;
      lower[pos] = draws[j].lower;
      upper[pos] = draws[j].upper;
    }
  }
}

std::vector<McRow> summarize(const std::vector<McCell>& cells, const Eigen::MatrixXd& estimates,
                             const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper) {
  std::vector<McRow> rows;
  const auto reps = estimates.rows();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(c);
    McRow r;
    r.cell = cells[c];
    double sum = 0.0, width = 0.0;
    long covered = 0;
    for (Eigen::Index i = 0; i < reps; ++i) {
      const double x = estimates(i, j);
      if (!std::isfinite(x) || !std::isfinite(lower(i, j)) || !std::isfinite(upper(i, j))) continue;
      ++r.n_ok;
      sum += x;
      width += upper(i, j) - lower(i, j);
      covered += lower(i, j) <= r.cell.truth && r.cell.truth <= upper(i, j);
    }
    r.failures = static_cast<long>(reps) - r.n_ok;
    if (r.n_ok > 0) {
      const double n = static_cast<double>(r.n_ok);
      r.mean = sum / n;
      r.bias = r.mean - r.cell.truth;
      double ss = 0.0;
      for (Eigen::Index i = 0; i < reps; ++i) {
        const double x = estimates(i, j);
        if (!std::isfinite(x) || !std::isfinite(lower(i, j)) || !std::isfinite(upper(i, j))) continue;
        ss += (x - r.mean) * (x - r.mean);
      }
      r.mc_sd = r.n_ok > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      r.mc_se = r.mc_sd / std::sqrt(n);
      r.mean_width = width / n;
      r.coverage = static_cast<double>(covered) / n;
    } else {
      r.mean = r.bias = r.mc_sd = r.mc_se = r.mean_width = r.coverage = kNaN;
    }
    rows.push_back(r);
  }
  return rows;
}

McResult run_monte_carlo(const SimDesign& design, const McOptions& opts) { return run_impl(design, opts, true); }

McResult run_monte_carlo_serial(const SimDesign& design, const McOptions& opts) {
  return run_impl(design, opts, false);
}

void write_mc_table(const McResult& r, std::ostream& out) {
  out << "estimator\tparameter\tinterval\tT0\tT1\tN\txi\ttruth\tmean\tbias\tmc_sd\tmc_se\tmean_width\tcoverage\tn_ok"
         "\tfailures\n";
  for (const auto& row : r.rows) {
    out << to_string(row.cell.estimator) << '\t' << row.cell.parameter << '\t' << to_string(row.cell.interval) << '\t'
        << r.design.t0 << '\t' << r.design.t1 << '\t' << r.design.n_controls() << '\t' << fmt(r.design.xi) << '\t'
        << fmt(row.cell.truth) << '\t' << fmt(row.mean) << '\t' << fmt(row.bias) << '\t' << fmt(row.mc_sd) << '\t'
        << fmt(row.mc_se) << '\t' << fmt(row.mean_width) << '\t' << fmt(row.coverage) << '\t' << row.n_ok << '\t'
        << row.failures << '\n';
  }
}

void write_table1(const std::vector<McResult>& runs, std::ostream& out) {
  // Rows: number of control units. Columns: (xi, method, T0) coverage, with
  // HC intervals for PI (covariate-adjusted when xi != 0) and conventional
  // intervals for OLS.
  std::map<int, std::map<std::tuple<double, int, Eigen::Index>, double>> table;
  std::vector<double> xis;
  std::vector<Eigen::Index> t0s;
  for (const auto& run : runs) {
    const auto& d = run.design;
    const McEstimator pi = d.xi != 0.0 && d.covariates ? McEstimator::pi_covariates : McEstimator::pi_joint;
    for (const auto& row : run.rows) {
      if (row.cell.parameter != "tau") continue;
      int method = -1;
      if (row.cell.estimator == McEstimator::ols && row.cell.interval == IntervalKind::conventional) method = 0;
      if (row.cell.estimator == pi && row.cell.interval == IntervalKind::hc) method = 1;
      if (method < 0) continue;
      table[d.n_controls()][{d.xi, method, d.t0}] = row.coverage;
      if (std::find(xis.begin(), xis.end(), d.xi) == xis.end()) xis.push_back(d.xi);
      if (std::find(t0s.begin(), t0s.end(), d.t0) == t0s.end()) t0s.push_back(d.t0);
    }
  }
  std::sort(xis.begin(), xis.end());
  std::sort(t0s.begin(), t0s.end());
  out << "N";
  for (double xi : xis)
    for (int m = 0; m < 2; ++m)
      for (auto t0 : t0s) out << '\t' << (m == 0 ? "OLS" : "PI") << "_xi" << fmt(xi) << "_T" << t0;
  out << '\n';
  for (const auto& [n, cols] : table) {
    out << n;
    for (double xi : xis)
      for (int m = 0; m < 2; ++m)
        for (auto t0 : t0s) {
          const auto it = cols.find({xi, m, t0});
          char buf[32];
          if (it == cols.end() || std::isnan(it->second)) {
            out << "\tNA";
          } else {
            std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * it->second);
            out << '\t' << buf;
          }
        }
    out << '\n';
  }
}

}  // namespace pisc
