#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "pisc/panel.hpp"

namespace pisc::testing {

/// Panel with consecutive times 1..T, donors "w1.." and proxies "z1..".
inline PanelDataset make_panel(const Eigen::VectorXd& y, const Eigen::MatrixXd& w, const Eigen::MatrixXd& z,
                               long t0) {
  PanelDataset d;
  const auto n = y.size();
  for (Eigen::Index t = 0; t < n; ++t) d.time_index.push_back(static_cast<long>(t + 1));
  d.t0 = t0;
  d.y = y;
  d.donors = w;
  d.proxies = z;
  d.covariates.resize(n, 0);
  d.treated_label = "y";
  for (Eigen::Index i = 0; i < w.cols(); ++i) d.donor_labels.push_back("w" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < z.cols(); ++i) d.proxy_labels.push_back("z" + std::to_string(i + 1));
  return d;
}

/// Noiseless factor panel: one positive factor per donor, proxies copy the
/// factors with a shift, and Y = W * alpha + effect after t0.
inline PanelDataset noiseless_panel(Eigen::Index T, long t0, const Eigen::VectorXd& alpha, double effect,
                                    unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = alpha.size();
  Eigen::MatrixXd w(T, k), z(T, k);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < k; ++i) {
      w(t, i) = 3.0 + std::log(static_cast<double>(t + 1)) + normal(rng);
      z(t, i) = 0.5 * w(t, i) + 1.0 + 0.0 * normal(rng);
    }
  Eigen::VectorXd y = w * alpha;
  for (Eigen::Index t = t0; t < T; ++t) y(t) += effect;
  return make_panel(y, w, z, t0);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace pisc::testing
