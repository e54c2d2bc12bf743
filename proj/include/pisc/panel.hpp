#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pisc/errors.hpp"

namespace pisc {

enum class Role { treated, donor, proxy, excluded };

Role parse_role(const std::string& name);
std::string to_string(Role role);

/// Unit-to-role assignment plus the covariate columns to carry along.
///
/// Units present in the data but absent from the map become proxies, so
/// callers normally list only the treated unit and the donor pool.
struct RoleMap {
  std::map<std::string, Role> roles;
  std::vector<std::string> covariates;

  /// Parses "A:treated,B:donor,C:proxy".
  static RoleMap parse(const std::string& spec);
  Role role_of(const std::string& unit) const;
};

/// One covariate column of the wide panel: which unit it belongs to and
/// which measured variable it is.
struct CovariateColumn {
  std::string unit;
  std::string name;
  Role role = Role::treated;
};

/// Wide observed panel. Rows are periods, columns of `donors`/`proxies`
/// are units, columns of `covariates` are (unit, variable) pairs.
struct PanelDataset {
  std::vector<long> time_index;
  long t0 = 0;  // last pre-treatment period, in `time_index` units
  Eigen::VectorXd y;
  Eigen::MatrixXd donors;
  Eigen::MatrixXd proxies;
  Eigen::MatrixXd covariates;

  std::string treated_label;
  std::vector<std::string> donor_labels;
  std::vector<std::string> proxy_labels;
  std::vector<CovariateColumn> covariate_columns;

  Eigen::Index n_periods() const { return y.size(); }
  Eigen::Index n_pre() const;
  Eigen::Index n_post() const { return n_periods() - n_pre(); }
  Eigen::Index n_donors() const { return donors.cols(); }
  Eigen::Index n_proxies() const { return proxies.cols(); }

  /// Normalized time s = position / T for row `row` (0-based).
  double normalized_time(Eigen::Index row) const {
    return static_cast<double>(row + 1) / static_cast<double>(n_periods());
  }
  Eigen::VectorXd normalized_times() const;

  /// Indices into `covariates` for columns owned by units with `role`.
  std::vector<Eigen::Index> covariate_indices(Role role) const;
  Eigen::MatrixXd covariate_block(Role role) const;

  /// Row indicator for t > t0.
  Eigen::VectorXd post_indicator() const;

  /// All control outcomes, donors first then proxies.
  Eigen::MatrixXd controls() const;

  /// Checks shape consistency and the row-count invariants; throws DataError.
  void validate() const;

  /// Copy restricted to rows [0, n_rows) with a new treatment period.
  PanelDataset truncated(Eigen::Index n_rows, long new_t0) const;
};

/// Row range view into a PanelDataset.
struct PanelRows {
  const PanelDataset* data = nullptr;
  Eigen::Index begin = 0;
  Eigen::Index count = 0;

  auto y() const { return data->y.segment(begin, count); }
  auto donors() const { return data->donors.middleRows(begin, count); }
  auto proxies() const { return data->proxies.middleRows(begin, count); }
  auto covariates() const { return data->covariates.middleRows(begin, count); }
  std::vector<long> times() const;
};

/// Pre-treatment rows (t <= t0) and post-treatment rows (t > t0).
std::pair<PanelRows, PanelRows> split(const PanelDataset& d);

/// Names of the unit, time and outcome columns; empty means the first,
/// second and third column.
struct ColumnMap {
  std::string unit;
  std::string time;
  std::string outcome;
};

/// Reads a long-format delimited file (comma or tab, header row) with
/// columns unit, time, outcome and optional covariate columns. Missing
/// covariate cells (empty or NA) are filled by last observation carried
/// forward within unit; missing outcomes are an error.
PanelDataset ingest(const std::filesystem::path& file, const RoleMap& roles, long t0, const ColumnMap& columns = {});
PanelDataset ingest(std::istream& in, const RoleMap& roles, long t0, const ColumnMap& columns = {});

/// Writes the panel back in long format with round-trip precision.
void export_long(const PanelDataset& d, std::ostream& out);

/// Converts a wide file (time column followed by one column per unit) to
/// long format with columns unit, time, outcome.
void wide_to_long(std::istream& in, std::ostream& out);

}  // namespace pisc
