#include "pisc/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "pisc/gmm.hpp"

namespace pisc {

ConformalScheme parse_conformal_scheme(const std::string& name) {
  if (name == "iid" || name == "iid-permutation") return ConformalScheme::iid_permutation;
  if (name == "moving-block" || name == "block") return ConformalScheme::moving_block;
  throw DataError("unknown conformal scheme '" + name + "' (expected iid or moving-block)");
}

std::string to_string(ConformalScheme s) {
  return s == ConformalScheme::iid_permutation ? "iid-permutation" : "moving-block";
}

double permutation_p_value(const Eigen::VectorXd& scores, ConformalScheme scheme) {
  const auto n = scores.size();
  if (n == 0) throw DataError("no conformity scores");
  const double observed = std::abs(scores(n - 1));
  Eigen::Index count = 0;
  if (scheme == ConformalScheme::iid_permutation) {
    for (Eigen::Index j = 0; j < n; ++j) count += std::abs(scores(j)) >= observed;
  } else {
    // Shift j moves entry (n - 1 - j) mod n into the tested slot.
    for (Eigen::Index j = 0; j < n; ++j) count += std::abs(scores((n - 1 - j + n) % n)) >= observed;
  }
  return static_cast<double>(count) / static_cast<double>(n);
}

namespace {

Eigen::Index row_of(const PanelDataset& d, long period) {
  const auto it = std::find(d.time_index.begin(), d.time_index.end(), period);
  if (it == d.time_index.end()) throw DataError("period " + std::to_string(period) + " not in the panel");
  const auto row = static_cast<Eigen::Index>(it - d.time_index.begin());
  if (row < d.n_pre()) throw DataError("conformal period must be after t0");
  return row;
}

/// Pre rows followed by the tested row.
PanelDataset combined_sample(const PanelDataset& d, Eigen::Index row) {
  const auto n_pre = d.n_pre();
  PanelDataset c;
  c.treated_label = d.treated_label;
  c.donor_labels = d.donor_labels;
  c.proxy_labels = d.proxy_labels;
  c.time_index.assign(d.time_index.begin(), d.time_index.begin() + n_pre);
  c.time_index.push_back(d.time_index[static_cast<std::size_t>(row)]);
  c.t0 = c.time_index.back();
  auto take = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(n_pre + 1, m.cols());
    out.topRows(n_pre) = m.topRows(n_pre);
    out.row(n_pre) = m.row(row);
    return out;
  };
  c.y.resize(n_pre + 1);
  c.y.head(n_pre) = d.y.head(n_pre);
  c.y(n_pre) = d.y(row);
  c.donors = take(d.donors);
  c.proxies = take(d.proxies);
  c.covariates.resize(n_pre + 1, 0);
  return c;
}

Eigen::VectorXd scores_for(PanelDataset& c, double y_tested, double eta0, const InstrumentSpec& g) {
  c.y(c.y.size() - 1) = y_tested - eta0;
  const PanelRows rows{&c, 0, c.n_periods()};
  const auto ms = build_weight_moments(rows, g);
  const auto fit = solve_linear(ms);
  Eigen::VectorXd u = ms.residuals(fit.theta);
  // Exact fits leave rounding noise; treat it as a tie at zero.
  const double tol = 1e-10 * (1.0 + c.y.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (std::abs(u(i)) < tol) u(i) = 0.0;
  return u;
}

/// Pre-period weight fit and the contrast it implies at `row`, with the
/// pre-period residual RMSE.
std::pair<double, double> pre_fit_contrast(const PanelDataset& d, Eigen::Index row, const InstrumentSpec& g) {
  const auto [pre, post] = split(d);
  const auto ms = build_weight_moments(pre, g);
  const auto fit = solve_linear(ms);
  const Eigen::VectorXd u = ms.residuals(fit.theta);
  const double rmse = std::sqrt(u.squaredNorm() / static_cast<double>(u.size()));
  return {d.y(row) - d.donors.row(row).dot(fit.theta), rmse};
}

/// With `endpoint_accepted` set, an accepted grid endpoint is reported
/// through it instead of raising DataError.
ConformalResult run(const PanelDataset& d, long period, const Eigen::VectorXd& grid, const ConformalOptions& opts,
                    bool parallel, bool* endpoint_accepted = nullptr) {
  d.validate();
  if (grid.size() < 2) throw DataError("conformal grid needs at least two points");
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid(i))) throw DataError("conformal grid must be finite");
    if (i > 0 && !(grid(i) > grid(i - 1))) throw DataError("conformal grid must be strictly increasing");
  }
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw DataError("conformal level must be in (0, 1)");
  const auto row = row_of(d, period);
  const PanelDataset base = combined_sample(d, row);
  const double y_tested = d.y(row);

  ConformalResult res;
  res.period = period;
  res.level = opts.level;
  res.grid = grid;
  res.p_values.resize(grid.size());
  res.point = pre_fit_contrast(d, row, opts.instruments).first;
  {
    // Identification does not depend on the grid value; fail early and serially.
    PanelDataset c = base;
    scores_for(c, y_tested, 0.0, opts.instruments);
  }

  std::exception_ptr failure;
  const auto m = grid.size();
#pragma omp parallel if (parallel)
  {
    PanelDataset c = base;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < m; ++i) {
      try {
        res.p_values(i) = permutation_p_value(scores_for(c, y_tested, grid(i), opts.instruments), opts.scheme);
      } catch (...) {
#pragma omp critical(pisc_conformal_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  Eigen::Index first = -1, last = -1, runs = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (res.p_values(i) > opts.level) {
      if (first < 0) first = i;
      if (last != i - 1 || runs == 0) ++runs;
      last = i;
    }
  }
  if (first < 0) throw NumericalError("conformal: every grid point rejected; refine grid");
  if (first == 0 || last == m - 1) {
    if (!endpoint_accepted) throw DataError("conformal: grid endpoint not rejected; widen grid");
    *endpoint_accepted = true;
  }
  res.lower = grid(first);
  res.upper = grid(last);
  res.connected = runs == 1;
  return res;
}

ConformalResult run_default(const PanelDataset& d, long period, const ConformalOptions& opts, bool parallel) {
  if (opts.max_widenings < 0) throw DataError("max_widenings must be non-negative");
  ConformalOptions o = opts;
  for (int k = 0; k < opts.max_widenings; ++k) {
    bool widen = false;
    auto res = run(d, period, default_grid(d, period, o), o, parallel, &widen);
    if (!widen) return res;
    o.grid_scale *= 2.0;
  }
  return run(d, period, default_grid(d, period, o), o, parallel);
}

}  // namespace

Eigen::VectorXd conformity_scores(const PanelDataset& d, long period, double eta0, const InstrumentSpec& g) {
  PanelDataset c = combined_sample(d, row_of(d, period));
  const double y_tested = c.y(c.y.size() - 1);
  return scores_for(c, y_tested, eta0, g);
}

Eigen::VectorXd default_grid(const PanelDataset& d, long period, const ConformalOptions& opts) {
  const auto [center, rmse] = pre_fit_contrast(d, row_of(d, period), opts.instruments);
  const double half = opts.grid_scale * (rmse > 0.0 ? rmse : 1.0);
  return Eigen::VectorXd::LinSpaced(std::max<Eigen::Index>(opts.grid_points, 2), center - half, center + half);
}

ConformalResult conformal_interval(const PanelDataset& d, long period, const Eigen::VectorXd& grid,
                                   const ConformalOptions& opts) {
  return run(d, period, grid, opts, true);
}

ConformalResult conformal_interval_serial(const PanelDataset& d, long period, const Eigen::VectorXd& grid,
                                          const ConformalOptions& opts) {
  return run(d, period, grid, opts, false);
}

ConformalResult conformal_interval_default(const PanelDataset& d, long period, const ConformalOptions& opts) {
  return run_default(d, period, opts, true);
}

ConformalResult conformal_interval_default_serial(const PanelDataset& d, long period, const ConformalOptions& opts) {
  return run_default(d, period, opts, false);
}

std::vector<ConformalResult> conformal_all(const PanelDataset& d, const ConformalOptions& opts) {
  std::vector<ConformalResult> out;
  for (auto row = d.n_pre(); row < d.n_periods(); ++row) {
    const long period = d.time_index[static_cast<std::size_t>(row)];
    out.push_back(conformal_interval_default(d, period, opts));
  }
  return out;
}

}  // namespace pisc
