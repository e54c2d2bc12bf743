#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "pisc/moments.hpp"
#include "pisc/panel.hpp"

namespace pisc {

enum class ConformalScheme { iid_permutation, moving_block };
ConformalScheme parse_conformal_scheme(const std::string& name);
std::string to_string(ConformalScheme s);

struct ConformalOptions {
  double level = 0.10;
  ConformalScheme scheme = ConformalScheme::moving_block;
  InstrumentSpec instruments{};
  /// Default grid: `grid_points` values spanning e_t* +/- grid_scale * RMSE.
  Eigen::Index grid_points = 101;
  double grid_scale = 6.0;
  /// Times the default grid may double in width while an endpoint is accepted.
  int max_widenings = 4;
};

/// Test-inversion prediction interval for the effect at one post period.
struct ConformalResult {
  long period = 0;
  double point = 0.0;  // e_t* from the pre-period weight fit
  Eigen::VectorXd grid;
  Eigen::VectorXd p_values;
  double lower = 0.0;
  double upper = 0.0;
  /// False when the accepted grid points do not form one run; lower/upper
  /// are then the hull.
  bool connected = true;
  double level = 0.10;
};

/// p-value of the last entry of `scores` among all placements: every
/// position (iid) or every cyclic shift (moving block). Uses ranks of |u|.
double permutation_p_value(const Eigen::VectorXd& scores, ConformalScheme scheme);

/// Residuals u_t of the proximal weight fit on the pre rows plus period
/// `period`, whose outcome is reduced by `eta0`. The tested row is last.
Eigen::VectorXd conformity_scores(const PanelDataset& d, long period, double eta0, const InstrumentSpec& g = {});

Eigen::VectorXd default_grid(const PanelDataset& d, long period, const ConformalOptions& opts = {});

/// Grid points are refit in parallel (OpenMP).
ConformalResult conformal_interval(const PanelDataset& d, long period, const Eigen::VectorXd& grid,
                                   const ConformalOptions& opts = {});
/// Serial reference with identical results.
ConformalResult conformal_interval_serial(const PanelDataset& d, long period, const Eigen::VectorXd& grid,
                                          const ConformalOptions& opts = {});

/// Interval on the default grid, doubling its width (at most
/// `max_widenings` times) until both endpoints are rejected.
ConformalResult conformal_interval_default(const PanelDataset& d, long period, const ConformalOptions& opts = {});
ConformalResult conformal_interval_default_serial(const PanelDataset& d, long period,
                                                  const ConformalOptions& opts = {});

/// One interval per post period on the default grids.
std::vector<ConformalResult> conformal_all(const PanelDataset& d, const ConformalOptions& opts = {});

}  // namespace pisc
