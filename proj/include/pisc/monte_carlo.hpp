#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pisc/conformal.hpp"
#include "pisc/simulate.hpp"

namespace pisc {

enum class McEstimator { pi_joint, pi_covariates, pi_pooled, pi_two_stage, ols, ols_constrained, bridge, conformal };
McEstimator parse_mc_estimator(const std::string& name);
std::string to_string(McEstimator e);

enum class IntervalKind { hc, hac, conventional, conformal };
std::string to_string(IntervalKind k);

struct McOptions {
  std::vector<McEstimator> estimators{McEstimator::pi_joint, McEstimator::ols};
  int reps = 500;
  std::uint64_t seed = 20240101;
  /// OpenMP threads; 0 keeps the runtime default.
  int workers = 0;
  std::optional<Eigen::Index> bandwidth;
  InstrumentSpec instruments{};
  ConformalOptions conformal{};
};

/// One (estimator, parameter, interval) combination tracked across replications.
struct McCell {
  McEstimator estimator;
  std::string parameter;
  IntervalKind interval;
  double truth = 0.0;
};

/// Summary of one cell over the replications that succeeded.
struct McRow {
  McCell cell;
  double mean = 0.0;
  double bias = 0.0;
  double mc_sd = 0.0;
  double mc_se = 0.0;
  double mean_width = 0.0;
  double coverage = 0.0;
  long n_ok = 0;
  long failures = 0;
};

struct McResult {
  SimDesign design;
  McOptions options;
  std::vector<McCell> cells;
  /// reps x cells; NaN marks a failed replication.
  Eigen::MatrixXd estimates, lower, upper;
  std::vector<McRow> rows;

  const McRow& row(McEstimator e, const std::string& parameter, IntervalKind k) const;
};

std::vector<McCell> mc_cells(const SimDesign& design, const std::vector<McEstimator>& estimators);

/// Replications run in parallel; each writes its own slot and the summary is
/// aggregated in replication order, so results do not depend on `workers`.
McResult run_monte_carlo(const SimDesign& design, const McOptions& opts);
McResult run_monte_carlo_serial(const SimDesign& design, const McOptions& opts);

/// Estimates of replication `rep` in mc_cells order; the panel is generated
/// from replication_seed(opts.seed, rep).
void run_replication(const SimDesign& design, const McOptions& opts, std::uint64_t rep, double* estimates,
                     double* lower, double* upper);

std::vector<McRow> summarize(const std::vector<McCell>& cells, const Eigen::MatrixXd& estimates,
                             const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper);

/// Long table: one line per cell.
void write_mc_table(const McResult& r, std::ostream& out);
/// Table-1 layout: one line per (T0, estimator) with bias, MC-SD, coverage.
void write_table1(const std::vector<McResult>& runs, std::ostream& out);

}  // namespace pisc
