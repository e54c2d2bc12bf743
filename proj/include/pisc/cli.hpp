#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pisc/monte_carlo.hpp"
#include "pisc/simulate.hpp"

namespace pisc {

/// Resolved settings for one CLI invocation. JSON config keys use the flag
/// names without the leading dashes, with '-' replaced by '_'.
struct RunConfig {
  std::string subcommand;

  std::string data;
  std::string roles;
  std::optional<long> t0;
  std::string unit_column, time_column, outcome_column;
  std::vector<std::string> covariate_names;

  std::string estimator = "pi-joint";
  std::string effect = "constant";
  std::string instruments = "affine";
  std::string covariates = "none";
  std::string link = "exponential";
  std::string cov = "both";
  std::optional<long> bandwidth;
  bool two_step = false;

  std::string out = "pisc_out";
  std::uint64_t seed = 20240101;
  int reps = 500;
  int workers = 0;

  std::optional<long> pseudo_t0;

  double level = 0.10;
  std::string scheme = "moving-block";
  std::vector<long> periods;
  std::string grid;  // "lo:hi:n"; empty means the default grid
  long grid_points = 101;
  double grid_scale = 6.0;

  std::string design;
  std::vector<std::string> mc_estimators;  // empty: design file list, else pi-joint and ols
  bool emit_data = false;

  std::string input;
  std::string output;

  /// Throws DataError on missing inputs or incompatible estimator, effect
  /// and covariate choices.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Applies the keys of `j` on top of `cfg`; unknown keys are an error.
void apply_config(RunConfig& cfg, const nlohmann::json& j);

/// Builds one design from JSON keys (r, t0, t1, effect, tau, gamma0, gamma1,
/// error_law, ar_coef, burn_in, error_sd, covariates, xi, family,
/// poisson_kappa, poisson_mean, psi_sd, seed). Missing t1 copies t0; missing
/// covariates is true when xi != 0.
SimDesign design_from_json(const nlohmann::json& j);
nlohmann::json design_to_json(const SimDesign& d);

/// Expands list-valued keys of a design file into the Cartesian product of
/// designs (e.g. "t0": [50, 100, 200], "r": [1, 5, 10], "xi": [0, 1]).
/// A top-level "designs" array is also accepted.
std::vector<SimDesign> expand_designs(const nlohmann::json& j);

int cmd_fit(const RunConfig& cfg, std::ostream& log);
int cmd_placebo(const RunConfig& cfg, std::ostream& log);
int cmd_conformal(const RunConfig& cfg, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);
int cmd_convert(const RunConfig& cfg, std::ostream& log);

/// Parses arguments, dispatches, and maps errors to exit codes:
/// 2 for input problems, 3 for identification failures, 4 for numerical
/// failures.
int run_cli(int argc, char** argv);

}  // namespace pisc
