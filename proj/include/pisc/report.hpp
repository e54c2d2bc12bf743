#pragma once

#include <Eigen/Dense>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pisc/baselines.hpp"
#include "pisc/conformal.hpp"
#include "pisc/effects.hpp"
#include "pisc/panel.hpp"

namespace pisc {

/// Which sandwich estimates to report.
enum class CovarianceChoice { hc, hac, both };
CovarianceChoice parse_covariance_choice(const std::string& name);
std::string to_string(CovarianceChoice c);

struct ParameterRow {
  std::string name;
  std::string block;  // intercept | weight | effect | covariate
  double estimate = 0.0;
  /// NaN when the estimator does not provide that standard error.
  double se_conventional = 0.0, se_hc = 0.0, se_hac = 0.0;
};

/// Estimator-independent view of one fit, ready for serialization.
struct FitSummary {
  std::string estimator;
  std::string effect_model;
  std::string instruments;
  std::string covariates;
  std::vector<ParameterRow> parameters;
  std::vector<std::string> effect_names;
  Eigen::VectorXd effect, effect_se_hc, effect_se_hac;

  std::vector<long> times;
  long t0 = 0;
  Eigen::VectorXd y, synthetic;
  /// Post-period fitted effect path and its pointwise 95% bands.
  Eigen::VectorXd fitted, band_hc_lower, band_hc_upper, band_hac_lower, band_hac_upper;

  double pre_rmse = 0.0;
  Eigen::Index n_pre = 0, n_post = 0;
  Eigen::Index bandwidth = 0;
  std::optional<double> j_stat;
  bool converged = true;
  int iterations = 0;
};

FitSummary summarize_fit(const PanelDataset& d, const EffectAnalysis& a, const EffectOptions& opts);
FitSummary summarize_fit(const PanelDataset& d, const OlsFit& f);

/// name, block, estimate, then SE and 95% CI columns for each selected kind.
void write_parameter_table(const FitSummary& s, CovarianceChoice c, std::ostream& out);
/// t, s, y, synthetic, e_hat, post indicator, fitted effect, CI bands,
/// moving average of e_hat.
void write_series(const FitSummary& s, std::ostream& out, Eigen::Index ma_window = 5);
nlohmann::json summary_json(const FitSummary& s, CovarianceChoice c);

void write_conformal_table(const std::vector<ConformalResult>& results, std::ostream& out);
/// Long table of (period, eta0, p-value, accepted).
void write_conformal_grid(const std::vector<ConformalResult>& results, std::ostream& out);
nlohmann::json conformal_json(const std::vector<ConformalResult>& results);

/// Round-trip formatting used by every text output, so files are
/// byte-identical across runs.
std::string format_number(double x);

}  // namespace pisc
