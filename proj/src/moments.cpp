#include "pisc/moments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pisc {

namespace {

constexpr double kMaxExponent = 700.0;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::string> weight_names(const std::vector<std::string>& labels) {
  std::vector<std::string> names;
  for (const auto& l : labels) names.push_back("alpha[" + l + "]");
  return names;
}

Eigen::MatrixXd effect_design(const PanelDataset& d, const TrendBasis& basis) {
  const auto post = d.post_indicator();
  Eigen::MatrixXd e = basis.evaluate(d.normalized_times());
  return post.asDiagonal() * e;
}

Eigen::VectorXd checked_exp(const Eigen::VectorXd& eta) {
  if (!eta.allFinite() || eta.maxCoeff() > kMaxExponent)
    throw NumericalError("exponential bridge overflow: linear predictor exceeds " + std::to_string(kMaxExponent));
  return eta.array().exp().matrix();
}

}  // namespace

InstrumentSpec InstrumentSpec::parse(const std::string& name) {
  if (name == "affine") return {InstrumentKind::affine};
  if (name == "affine+squares") return {InstrumentKind::affine_squares};
  if (name == "proxies") return {InstrumentKind::proxies};
  throw DataError("unknown instrument spec '" + name + "' (expected proxies, affine or affine+squares)");
}

std::string InstrumentSpec::name() const {
  switch (kind) {
    case InstrumentKind::proxies: return "proxies";
    case InstrumentKind::affine: return "affine";
    case InstrumentKind::affine_squares: return "affine+squares";
  }
  return "?";
}

Eigen::Index InstrumentSpec::dim(Eigen::Index n_proxies) const {
  switch (kind) {
    case InstrumentKind::proxies: return n_proxies;
    case InstrumentKind::affine: return 1 + n_proxies;
    case InstrumentKind::affine_squares: return 1 + 2 * n_proxies;
  }
  return 0;
}

Eigen::MatrixXd InstrumentSpec::apply(const Eigen::Ref<const Eigen::MatrixXd>& z) const {
  if (kind == InstrumentKind::proxies) return z;
  Eigen::MatrixXd g(z.rows(), dim(z.cols()));
  g.col(0).setOnes();
  g.middleCols(1, z.cols()) = z;
  if (kind == InstrumentKind::affine_squares) g.rightCols(z.cols()) = z.array().square().matrix();
  return g;
}

TrendBasis TrendBasis::piecewise(std::vector<double> breakpoints) {
  if (!std::is_sorted(breakpoints.begin(), breakpoints.end()) ||
      std::adjacent_find(breakpoints.begin(), breakpoints.end()) != breakpoints.end())
    throw DataError("piecewise breakpoints must be strictly increasing");
  return TrendBasis(Kind::piecewise, std::move(breakpoints));
}

TrendBasis TrendBasis::parse(const std::string& name) {
  if (name == "constant") return constant();
  if (name == "linear" || name == "linear_trend") return linear();
  if (name == "quadratic") return quadratic();
  if (name.rfind("piecewise:", 0) == 0) {
    std::vector<double> bps;
    std::istringstream ss(name.substr(10));
    std::string item;
    while (std::getline(ss, item, ';')) bps.push_back(std::stod(item));
    return piecewise(std::move(bps));
  }
  throw DataError("unknown effect model '" + name + "' (expected constant, linear, quadratic or piecewise:s1;s2)");
}

Eigen::Index TrendBasis::dim() const {
  switch (kind_) {
    case Kind::constant: return 1;
    case Kind::linear: return 2;
    case Kind::quadratic: return 3;
    case Kind::piecewise: return static_cast<Eigen::Index>(breakpoints_.size()) + 1;
  }
  return 0;
}

Eigen::RowVectorXd TrendBasis::evaluate(double s) const {
  Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(dim());
  switch (kind_) {
    case Kind::quadratic: phi(2) = s * s; [[fallthrough]];
    case Kind::linear: phi(1) = s; [[fallthrough]];
    case Kind::constant: phi(0) = 1.0; break;
    case Kind::piecewise: {
      auto seg = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), s) - breakpoints_.begin();
      phi(seg) = 1.0;
      break;
    }
  }
  return phi;
}

Eigen::MatrixXd TrendBasis::evaluate(const Eigen::VectorXd& s) const {
  Eigen::MatrixXd out(s.size(), dim());
  for (Eigen::Index i = 0; i < s.size(); ++i) out.row(i) = evaluate(s(i));
  return out;
}

std::vector<std::string> TrendBasis::names() const {
  if (kind_ == Kind::constant) return {"tau"};
  std::vector<std::string> out;
  const std::string stem = kind_ == Kind::piecewise ? "tau_seg" : "gamma";
  for (Eigen::Index j = 0; j < dim(); ++j) out.push_back(stem + std::to_string(j));
  return out;
}

std::string TrendBasis::name() const {
  switch (kind_) {
    case Kind::constant: return "constant";
    case Kind::linear: return "linear";
    case Kind::quadratic: return "quadratic";
    case Kind::piecewise: {
      std::ostringstream os;
      os << "piecewise:";
      for (std::size_t i = 0; i < breakpoints_.size(); ++i) os << (i ? ";" : "") << breakpoints_[i];
      return os.str();
    }
  }
  return "?";
}

Link parse_link(const std::string& name) {
  if (name == "identity") return Link::identity;
  if (name == "exponential" || name == "exp") return Link::exponential;
  throw DataError("unknown link '" + name + "' (expected identity or exponential)");
}

MomentSystem::MomentSystem(Eigen::MatrixXd instruments, Model model, std::vector<std::string> param_names,
                           ParameterBlocks blocks, Eigen::VectorXd weight_mask)
    : instruments_(std::move(instruments)),
      model_(std::move(model)),
      names_(std::move(param_names)),
      blocks_(blocks),
      weight_mask_(std::move(weight_mask)) {
  if (instrument_dim() < param_dim())
    throw IdentificationError("under-identified: " + std::to_string(instrument_dim()) + " instruments for " +
                              std::to_string(param_dim()) + " parameters");
  const auto n = std::visit([](const auto& m) { return m.response.size(); }, model_);
  if (n != n_obs() || weight_mask_.size() != n_obs())
    throw DataError("moment system blocks have inconsistent row counts");
}

Eigen::VectorXd MomentSystem::residuals(const Eigen::VectorXd& theta) const {
  return std::visit(
      overloaded{
          [&](const LinearResidual& m) -> Eigen::VectorXd { return m.response - m.design * theta; },
          [&](const ExponentialBridge& m) -> Eigen::VectorXd {
            const auto k = m.donors.cols();
            Eigen::VectorXd h = checked_exp(((m.donors * theta.segment(1, k)).array() + theta(0)).matrix());
            return m.response - m.effect * theta.tail(m.effect.cols()) - h;
          },
          [&](const PooledCovariateResidual& m) -> Eigen::VectorXd {
            const auto k = m.donors.cols();
            const auto ne = m.effect.cols();
            Eigen::VectorXd alpha = theta.head(k);
            Eigen::VectorXd xi = theta.tail(m.treated_cov.cols());
            Eigen::VectorXd adj = m.treated_cov * xi;
            for (Eigen::Index i = 0; i < k; ++i) adj -= alpha(i) * (m.donor_cov[static_cast<std::size_t>(i)] * xi);
            return m.response - m.donors * alpha - m.effect * theta.segment(k, ne) - adj;
          },
      },
      model_);
}

Eigen::MatrixXd MomentSystem::jacobian(const Eigen::VectorXd& theta) const {
  return std::visit(
      overloaded{
          [&](const LinearResidual& m) -> Eigen::MatrixXd { return -m.design; },
          [&](const ExponentialBridge& m) -> Eigen::MatrixXd {
            const auto k = m.donors.cols();
            Eigen::VectorXd h = checked_exp(((m.donors * theta.segment(1, k)).array() + theta(0)).matrix());
            Eigen::MatrixXd j(n_obs(), param_dim());
            j.col(0) = -h;
            j.middleCols(1, k) = -(h.asDiagonal() * m.donors);
            j.rightCols(m.effect.cols()) = -m.effect;
            return j;
          },
          [&](const PooledCovariateResidual& m) -> Eigen::MatrixXd {
            const auto k = m.donors.cols();
            const auto ne = m.effect.cols();
            const auto q = m.treated_cov.cols();
            Eigen::VectorXd alpha = theta.head(k);
            Eigen::VectorXd xi = theta.tail(q);
            Eigen::MatrixXd j(n_obs(), param_dim());
            Eigen::MatrixXd c = m.treated_cov;
            for (Eigen::Index i = 0; i < k; ++i) {
              const auto& ci = m.donor_cov[static_cast<std::size_t>(i)];
              j.col(i) = -m.donors.col(i) + ci * xi;
              c -= alpha(i) * ci;
            }
            j.middleCols(k, ne) = -m.effect;
            j.rightCols(q) = -c;
            return j;
          },
      },
      model_);
}

double MomentSystem::residual(Eigen::Index t, const Eigen::VectorXd& theta) const {
  return residuals(theta)(t);
}

Eigen::RowVectorXd MomentSystem::jacobian_row(Eigen::Index t, const Eigen::VectorXd& theta) const {
  return jacobian(theta).row(t);
}

Eigen::MatrixXd MomentSystem::contributions(const Eigen::VectorXd& theta) const {
  return residuals(theta).asDiagonal() * instruments_;
}

Eigen::VectorXd MomentSystem::sample_moments(const Eigen::VectorXd& theta) const {
  return instruments_.transpose() * residuals(theta) / static_cast<double>(n_obs());
}

Eigen::MatrixXd MomentSystem::moment_jacobian(const Eigen::VectorXd& theta) const {
  return instruments_.transpose() * jacobian(theta) / static_cast<double>(n_obs());
}

MomentSystem build_ols_moments(const PanelRows& pre) {
  ParameterBlocks blocks;
  blocks.n_weights = pre.data->n_donors();
  Eigen::MatrixXd w = pre.donors();
  return MomentSystem(w, LinearResidual{pre.y(), w}, weight_names(pre.data->donor_labels), blocks,
                      Eigen::VectorXd::Ones(pre.count));
}

MomentSystem build_weight_moments(const PanelRows& pre, const InstrumentSpec& g) {
  const auto& d = *pre.data;
  if (d.n_proxies() < d.n_donors())
    throw IdentificationError("under-identified: " + std::to_string(d.n_proxies()) + " instruments for " +
                              std::to_string(d.n_donors()) + " weights");
  ParameterBlocks blocks;
  blocks.n_weights = d.n_donors();
  return MomentSystem(g.apply(pre.proxies()), LinearResidual{pre.y(), pre.donors()}, weight_names(d.donor_labels),
                      blocks, Eigen::VectorXd::Ones(pre.count));
}

MomentSystem build_joint_moments(const PanelDataset& d, const TrendBasis& effect, const InstrumentSpec& g) {
  if (d.n_proxies() < d.n_donors())
    throw IdentificationError("under-identified: " + std::to_string(d.n_proxies()) + " instruments for " +
                              std::to_string(d.n_donors()) + " weights");
  if (d.n_post() < effect.dim())
    throw IdentificationError("too few post-treatment periods: " + std::to_string(d.n_post()) + " rows for " +
                              std::to_string(effect.dim()) + " effect parameters");
  const auto n = d.n_periods();
  const auto k = d.n_donors();
  const Eigen::VectorXd post = d.post_indicator();
  const Eigen::VectorXd pre = Eigen::VectorXd::Ones(n) - post;
  const Eigen::MatrixXd e = effect_design(d, effect);
  const Eigen::MatrixXd gz = pre.asDiagonal() * g.apply(d.proxies);

  Eigen::MatrixXd v(n, gz.cols() + e.cols());
  v << gz, e;
  Eigen::MatrixXd design(n, k + e.cols());
  design << d.donors, e;

  auto names = weight_names(d.donor_labels);
  for (const auto& s : effect.names()) names.push_back(s);
  ParameterBlocks blocks;
  blocks.n_weights = k;
  blocks.effect_begin = k;
  blocks.n_effect = e.cols();
  return MomentSystem(std::move(v), LinearResidual{d.y, std::move(design)}, std::move(names), blocks, pre);
}

MomentSystem add_covariates(const MomentSystem& ms, const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  const auto* lin = ms.linear_model();
  if (!lin) throw DataError("per-column covariate adjustment requires a linear moment system");
  if (x.rows() != ms.n_obs())
    throw DataError("covariate dimension mismatch: " + std::to_string(x.rows()) + " rows for " +
                    std::to_string(ms.n_obs()) + " observations");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != x.cols())
    throw DataError("covariate dimension mismatch: names do not match columns");
  if (x.cols() == 0) return ms;

  Eigen::MatrixXd v(ms.n_obs(), ms.instrument_dim() + x.cols());
  v << ms.instruments(), ms.weight_mask().asDiagonal() * x;
  Eigen::MatrixXd design(ms.n_obs(), lin->design.cols() + x.cols());
  design << lin->design, x;

  auto pnames = ms.param_names();
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    pnames.push_back("xi[" + (names.empty() ? std::to_string(j) : names[static_cast<std::size_t>(j)]) + "]");
  auto blocks = ms.blocks();
  blocks.covariates_begin = lin->design.cols();
  blocks.n_covariates = x.cols();
  return MomentSystem(std::move(v), LinearResidual{lin->response, std::move(design)}, std::move(pnames), blocks,
                      ms.weight_mask());
}

MomentSystem add_pooled_covariates(const MomentSystem& ms, const Eigen::MatrixXd& treated_cov,
                                   const std::vector<Eigen::MatrixXd>& donor_cov,
                                   const std::vector<std::string>& names) {
  const auto* lin = ms.linear_model();
  const auto& b = ms.blocks();
  if (!lin || b.intercept >= 0 || b.n_covariates > 0)
    throw DataError("pooled covariate adjustment requires a linear weight/effect system");
  const auto k = b.n_weights;
  const auto q = treated_cov.cols();
  if (treated_cov.rows() != ms.n_obs() || static_cast<Eigen::Index>(donor_cov.size()) != k)
    throw DataError("covariate dimension mismatch: expected one covariate block per donor");
  for (const auto& c : donor_cov)
    if (c.rows() != ms.n_obs() || c.cols() != q) throw DataError("covariate dimension mismatch in donor block");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != q)
    throw DataError("covariate dimension mismatch: names do not match columns");

  Eigen::MatrixXd all_cov(ms.n_obs(), q * (k + 1));
  all_cov.leftCols(q) = treated_cov;
  for (Eigen::Index i = 0; i < k; ++i) all_cov.middleCols(q * (i + 1), q) = donor_cov[static_cast<std::size_t>(i)];
  Eigen::MatrixXd v(ms.n_obs(), ms.instrument_dim() + all_cov.cols());
  v << ms.instruments(), ms.weight_mask().asDiagonal() * all_cov;

  PooledCovariateResidual model{lin->response, lin->design.leftCols(k), lin->design.middleCols(k, b.n_effect),
                                treated_cov, donor_cov};
  auto pnames = ms.param_names();
  for (Eigen::Index j = 0; j < q; ++j)
    pnames.push_back("xi[" + (names.empty() ? std::to_string(j) : names[static_cast<std::size_t>(j)]) + "]");
  auto blocks = b;
  blocks.covariates_begin = k + b.n_effect;
  blocks.n_covariates = q;
  return MomentSystem(std::move(v), std::move(model), std::move(pnames), blocks, ms.weight_mask());
}

namespace {

MomentSystem bridge_system(const Eigen::VectorXd& y, const Eigen::MatrixXd& w, const Eigen::MatrixXd& gz,
                           const Eigen::MatrixXd& effect, const Eigen::VectorXd& mask, Link link,
                           const std::vector<std::string>& donor_labels, const std::vector<std::string>& effect_names) {
  const auto n = y.size();
  const auto k = w.cols();
  Eigen::MatrixXd v(n, gz.cols() + effect.cols());
  v << gz, effect;

  std::vector<std::string> names{"alpha0"};
  for (const auto& s : weight_names(donor_labels)) names.push_back(s);
  for (const auto& s : effect_names) names.push_back(s);
  ParameterBlocks blocks;
  blocks.intercept = 0;
  blocks.weights_begin = 1;
  blocks.n_weights = k;
  blocks.effect_begin = 1 + k;
  blocks.n_effect = effect.cols();

  if (link == Link::identity) {
    Eigen::MatrixXd design(n, 1 + k + effect.cols());
    design << Eigen::VectorXd::Ones(n), w, effect;
    return MomentSystem(std::move(v), LinearResidual{y, std::move(design)}, std::move(names), blocks, mask);
  }
  if ((y.array() < 0).any()) throw DataError("exponential bridge requires non-negative outcomes");
  return MomentSystem(std::move(v), ExponentialBridge{y, w, effect}, std::move(names), blocks, mask);
}

}  // namespace

MomentSystem build_bridge_moments(const PanelRows& pre, Link link, const InstrumentSpec& g) {
  const auto& d = *pre.data;
  if (g.dim(d.n_proxies()) < d.n_donors() + 1)
    throw IdentificationError("under-identified: " + std::to_string(g.dim(d.n_proxies())) + " instruments for " +
                              std::to_string(d.n_donors() + 1) + " bridge parameters");
  return bridge_system(pre.y(), pre.donors(), g.apply(pre.proxies()), Eigen::MatrixXd(pre.count, 0),
                       Eigen::VectorXd::Ones(pre.count), link, d.donor_labels, {});
}

MomentSystem build_joint_bridge_moments(const PanelDataset& d, Link link, const TrendBasis& effect,
                                        const InstrumentSpec& g) {
  if (g.dim(d.n_proxies()) < d.n_donors() + 1)
    throw IdentificationError("under-identified: " + std::to_string(g.dim(d.n_proxies())) + " instruments for " +
                              std::to_string(d.n_donors() + 1) + " bridge parameters");
  if (d.n_post() < effect.dim())
    throw IdentificationError("too few post-treatment periods for the effect model");
  const Eigen::VectorXd post = d.post_indicator();
  const Eigen::VectorXd pre = Eigen::VectorXd::Ones(d.n_periods()) - post;
  return bridge_system(d.y, d.donors, pre.asDiagonal() * g.apply(d.proxies), effect_design(d, effect), pre, link,
                       d.donor_labels, effect.names());
}

Eigen::VectorXd evaluate_bridge(Link link, double intercept, const Eigen::VectorXd& weights,
                                const Eigen::Ref<const Eigen::MatrixXd>& donors) {
  Eigen::VectorXd eta = ((donors * weights).array() + intercept).matrix();
  return link == Link::identity ? eta : checked_exp(eta);
}

}  // namespace pisc
