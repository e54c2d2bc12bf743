#include "pisc/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <omp.h>

#include "pisc/baselines.hpp"
#include "pisc/conformal.hpp"
#include "pisc/effects.hpp"
#include "pisc/report.hpp"

namespace pisc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kEstimators{"pi-joint", "pi-two-stage", "ols", "ols-constrained", "bridge"};

bool is_ols(const std::string& e) { return e == "ols" || e == "ols-constrained"; }

Eigen::VectorXd parse_grid(const std::string& spec) {
  std::istringstream ss(spec);
  std::string lo, hi, n;
  if (!std::getline(ss, lo, ':') || !std::getline(ss, hi, ':') || !std::getline(ss, n))
    throw DataError("grid must look like lo:hi:n, got '" + spec + "'");
  try {
    const double a = std::stod(lo), b = std::stod(hi);
    const long m = std::stol(n);
    if (!(b > a) || m < 2) throw DataError("grid needs lo < hi and n >= 2");
    return Eigen::VectorXd::LinSpaced(m, a, b);
  } catch (const std::logic_error&) {
    throw DataError("grid must look like lo:hi:n, got '" + spec + "'");
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

fs::path prepare_out(const RunConfig& cfg) {
  fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return out;
}

PanelDataset load_panel(const RunConfig& cfg) {
  RoleMap roles = RoleMap::parse(cfg.roles);
  roles.covariates = cfg.covariate_names;
  return ingest(fs::path(cfg.data), roles, *cfg.t0, ColumnMap{cfg.unit_column, cfg.time_column, cfg.outcome_column});
}

EffectOptions effect_options(const RunConfig& cfg) {
  EffectOptions o;
  o.estimator = parse_effect_estimator(cfg.estimator);
  o.basis = TrendBasis::parse(cfg.effect);
  o.instruments = InstrumentSpec::parse(cfg.instruments);
  o.covariates = parse_covariate_mode(cfg.covariates);
  o.link = parse_link(cfg.link);
  if (cfg.bandwidth) o.bandwidth = *cfg.bandwidth;
  o.two_step = cfg.two_step;
  return o;
}

OlsOptions ols_options(const RunConfig& cfg) {
  OlsOptions o;
  o.covariates = cfg.covariates != "none";
  if (cfg.bandwidth) o.bandwidth = *cfg.bandwidth;
  o.seed = cfg.seed;
  return o;
}

FitSummary fit_summary(const PanelDataset& d, const RunConfig& cfg) {
  if (is_ols(cfg.estimator)) return summarize_fit(d, fit_ols(d, cfg.estimator == "ols-constrained", ols_options(cfg)));
  const auto opts = effect_options(cfg);
  return summarize_fit(d, estimate_effects(d, opts), opts);
}

std::string fixed(const json& v, const char* spec = "%12.6g") {
  if (v.is_null()) return std::string(12 - 2, ' ') + "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v.get<double>());
  return buf;
}

/// Plain-text rendering of a summary.json document.
std::string render_summary(const json& s) {
  std::ostringstream out;
  const std::string cov = s.value("covariance", "both");
  out << "estimator: " << s["estimator"].get<std::string>() << "   effect model: " << s["effect_model"].get<std::string>()
      << "   covariates: " << s["covariates"].get<std::string>() << "   instruments: "
      << s["instruments"].get<std::string>() << '\n';
  out << "periods: " << s["n_pre"] << " pre, " << s["n_post"] << " post (t0 = " << s["t0"] << ")\n";
  out << "pre-period RMSE: " << fixed(s["pre_rmse"], "%.6g") << "   HAC bandwidth: " << s["hac_bandwidth"]
      << "   converged: " << (s["converged"].get<bool>() ? "yes" : "no");
  if (!s["j_stat"].is_null()) out << "   J: " << fixed(s["j_stat"], "%.6g");
  out << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-10s %12s", "parameter", "block", "estimate");
  out << line;
  const bool conventional = s["estimator"] == "ols" || s["estimator"] == "ols-constrained";
  if (conventional) out << "      se_conv";
  if (cov != "hac") out << "        se_hc          95% CI (HC)      ";
  if (cov != "hc") out << "       se_hac          95% CI (HAC)     ";
  out << '\n';
  for (const auto& p : s["parameters"]) {
    std::snprintf(line, sizeof line, "%-28s %-10s ", p["name"].get<std::string>().c_str(),
                  p["block"].get<std::string>().c_str());
    out << line << fixed(p["estimate"]);
    const double est = p["estimate"].is_null() ? 0.0 : p["estimate"].get<double>();
    auto ci = [&](const json& se) {
      out << ' ' << fixed(se);
      if (se.is_null()) {
        out << std::string(24, ' ');
        return;
      }
      const double h = kZ975 * se.get<double>();
      std::snprintf(line, sizeof line, "  (%10.4g, %10.4g)", est - h, est + h);
      out << line;
    };
    if (conventional) out << ' ' << fixed(p["se_conventional"]);
    if (cov != "hac") ci(p["se_hc"]);
    if (cov != "hc") ci(p["se_hac"]);
    out << '\n';
  }
  return out.str();
}

std::string render_conformal(const json& c) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %12s %12s %12s %6s %10s\n", "period", "point", "lower", "upper", "level",
                "connected");
  out << line;
  for (const auto& r : c) {
    std::snprintf(line, sizeof line, "%-10ld %12s %12s %12s %6.2f %10s\n", r["period"].get<long>(),
                  fixed(r["point"]).c_str(), fixed(r["lower"]).c_str(), fixed(r["upper"]).c_str(),
                  r["level"].get<double>(), r["connected"].get<bool>() ? "yes" : "no");
    out << line;
  }
  return out.str();
}

void emit_fit(const fs::path& out, const std::string& prefix, const FitSummary& s, const RunConfig& cfg,
              std::ostream& log) {
  const auto cov = parse_covariance_choice(cfg.cov);
  std::ostringstream params, series;
  write_parameter_table(s, cov, params);
  write_series(s, series);
  const json summary = summary_json(s, cov);
  write_file(out / (prefix + "parameters.tsv"), params.str());
  write_file(out / (prefix + "series.tsv"), series.str());
  write_file(out / (prefix + "summary.json"), summary.dump(2) + "\n");
  const auto text = render_summary(summary);
  write_file(out / (prefix + "report.txt"), text);
  write_file(out / (prefix + "config.json"), cfg.to_json().dump(2) + "\n");
  log << text;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void RunConfig::validate() const {
  const bool needs_data = subcommand == "fit" || subcommand == "placebo" || subcommand == "conformal";
  if (needs_data) {
    if (data.empty()) throw DataError("--data is required for " + subcommand);
    if (roles.empty()) throw DataError("--roles is required for " + subcommand);
    if (!t0) throw DataError("--t0 is required for " + subcommand);
  }
  if (subcommand == "fit" || subcommand == "placebo") {
    if (!kEstimators.count(estimator))
      throw DataError("unknown estimator '" + estimator +
                      "' (expected pi-joint, pi-two-stage, ols, ols-constrained or bridge)");
    const auto basis = TrendBasis::parse(effect);
    (void)InstrumentSpec::parse(instruments);
    const auto cm = parse_covariate_mode(covariates);
    (void)parse_link(link);
    (void)parse_covariance_choice(cov);
    if (is_ols(estimator)) {
      if (basis.kind() != TrendBasis::Kind::constant)
        throw DataError("estimator " + estimator + " supports the constant effect model only");
      if (estimator == "ols-constrained" && cm != CovariateMode::none)
        throw DataError("ols-constrained does not take covariates");
      if (two_step) throw DataError("--two-step applies to the proximal estimators only");
    }
    if (estimator == "bridge" && cm != CovariateMode::none)
      throw DataError("covariate adjustment is not available for the bridge estimator");
    if (bandwidth && *bandwidth < 0) throw DataError("--bandwidth must be non-negative");
  }
  if (subcommand == "placebo" && !pseudo_t0) throw DataError("--pseudo-t0 is required for placebo");
  if (subcommand == "conformal") {
    if (!(level > 0.0 && level < 1.0)) throw DataError("--level must be in (0, 1)");
    (void)parse_conformal_scheme(scheme);
    (void)InstrumentSpec::parse(instruments);
    if (!grid.empty()) (void)parse_grid(grid);
    if (grid_points < 2) throw DataError("--grid-points must be at least 2");
    if (!(grid_scale > 0.0)) throw DataError("--grid-scale must be positive");
  }
  if (subcommand == "simulate") {
    if (reps < 1) throw DataError("--reps must be at least 1");
    for (const auto& e : mc_estimators) (void)parse_mc_estimator(e);
    (void)InstrumentSpec::parse(instruments);
  }
  if (subcommand == "convert" && (input.empty() || output.empty()))
    throw DataError("convert needs --input and --output");
  if (workers < 0) throw DataError("--workers must be non-negative");
}

json RunConfig::to_json() const {
  json j;
  j["subcommand"] = subcommand;
  j["data"] = data;
  j["roles"] = roles;
  j["t0"] = t0 ? json(*t0) : json(nullptr);
  j["unit_column"] = unit_column;
  j["time_column"] = time_column;
  j["outcome_column"] = outcome_column;
  j["covariate_names"] = covariate_names;
  j["estimator"] = estimator;
  j["effect"] = effect;
  j["instruments"] = instruments;
  j["covariates"] = covariates;
  j["link"] = link;
  j["cov"] = cov;
  j["bandwidth"] = bandwidth ? json(*bandwidth) : json(nullptr);
  j["two_step"] = two_step;
  j["out"] = out;
  j["seed"] = seed;
  j["reps"] = reps;
  j["workers"] = workers;
  j["pseudo_t0"] = pseudo_t0 ? json(*pseudo_t0) : json(nullptr);
  j["level"] = level;
  j["scheme"] = scheme;
  j["periods"] = periods;
  j["grid"] = grid;
  j["grid_points"] = grid_points;
  j["grid_scale"] = grid_scale;
  j["design"] = design;
  j["mc_estimators"] = mc_estimators;
  j["emit_data"] = emit_data;
  j["input"] = input;
  j["output"] = output;
  return j;
}

void apply_config(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw DataError("config file must hold a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "subcommand") continue;
      else if (key == "data") cfg.data = v.get<std::string>();
      else if (key == "roles") cfg.roles = v.get<std::string>();
      else if (key == "t0") cfg.t0 = v.is_null() ? std::nullopt : std::optional<long>(v.get<long>());
      else if (key == "unit_column") cfg.unit_column = v.get<std::string>();
      else if (key == "time_column") cfg.time_column = v.get<std::string>();
      else if (key == "outcome_column") cfg.outcome_column = v.get<std::string>();
      else if (key == "covariate_names") cfg.covariate_names = v.get<std::vector<std::string>>();
      else if (key == "estimator") cfg.estimator = v.get<std::string>();
      else if (key == "effect") cfg.effect = v.get<std::string>();
      else if (key == "instruments") cfg.instruments = v.get<std::string>();
      else if (key == "covariates") cfg.covariates = v.get<std::string>();
      else if (key == "link") cfg.link = v.get<std::string>();
      else if (key == "cov") cfg.cov = v.get<std::string>();
      else if (key == "bandwidth") cfg.bandwidth = v.is_null() ? std::nullopt : std::optional<long>(v.get<long>());
      else if (key == "two_step") cfg.two_step = v.get<bool>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "reps") cfg.reps = v.get<int>();
      else if (key == "workers") cfg.workers = v.get<int>();
      else if (key == "pseudo_t0") cfg.pseudo_t0 = v.is_null() ? std::nullopt : std::optional<long>(v.get<long>());
      else if (key == "level") cfg.level = v.get<double>();
      else if (key == "scheme") cfg.scheme = v.get<std::string>();
      else if (key == "periods") cfg.periods = v.get<std::vector<long>>();
      else if (key == "grid") cfg.grid = v.get<std::string>();
      else if (key == "grid_points") cfg.grid_points = v.get<long>();
      else if (key == "grid_scale") cfg.grid_scale = v.get<double>();
      else if (key == "design") cfg.design = v.get<std::string>();
      else if (key == "mc_estimators") cfg.mc_estimators = v.get<std::vector<std::string>>();
      else if (key == "emit_data") cfg.emit_data = v.get<bool>();
      else if (key == "input") cfg.input = v.get<std::string>();
      else if (key == "output") cfg.output = v.get<std::string>();
      else throw DataError("unknown config key '" + key + "'");
    }
  } catch (const json::type_error& e) {
    throw DataError(std::string("config value has the wrong type: ") + e.what());
  }
}

SimDesign design_from_json(const json& j) {
  static const std::set<std::string> keys{"r",      "t0",      "t1",        "effect",       "tau",
                                          "gamma0", "gamma1",  "error_law", "ar_coef",      "burn_in",
                                          "error_sd", "covariates", "xi",   "family",       "poisson_kappa",
                                          "poisson_mean", "psi_sd", "seed"};
  for (const auto& [key, v] : j.items())
    if (!keys.count(key)) throw DataError("unknown design key '" + key + "'");
  SimDesign d;
  try {
    d.r = get_or(j, "r", d.r);
    d.t0 = get_or<long>(j, "t0", d.t0);
    d.t1 = get_or<long>(j, "t1", d.t0);
    if (j.contains("effect")) d.effect = parse_effect_path(j["effect"].get<std::string>());
    d.tau = get_or(j, "tau", d.tau);
    d.gamma0 = get_or(j, "gamma0", d.gamma0);
    d.gamma1 = get_or(j, "gamma1", d.gamma1);
    if (j.contains("error_law")) d.error_law = parse_error_law(j["error_law"].get<std::string>());
    d.ar_coef = get_or(j, "ar_coef", d.ar_coef);
    d.burn_in = get_or(j, "burn_in", d.burn_in);
    d.error_sd = get_or(j, "error_sd", d.error_sd);
    d.xi = get_or(j, "xi", d.xi);
    d.covariates = get_or(j, "covariates", d.xi != 0.0);
    if (j.contains("family")) d.family = parse_outcome_family(j["family"].get<std::string>());
    d.poisson_kappa = get_or(j, "poisson_kappa", d.poisson_kappa);
    d.poisson_mean = get_or(j, "poisson_mean", d.poisson_mean);
    d.psi_sd = get_or(j, "psi_sd", d.psi_sd);
    d.seed = get_or<std::uint64_t>(j, "seed", d.seed);
  } catch (const json::type_error& e) {
    throw DataError(std::string("design value has the wrong type: ") + e.what());
  }
  d.validate();
  return d;
}

json design_to_json(const SimDesign& d) {
  return json{{"r", d.r},
              {"t0", d.t0},
              {"t1", d.t1},
              {"effect", to_string(d.effect)},
              {"tau", d.tau},
              {"gamma0", d.gamma0},
              {"gamma1", d.gamma1},
              {"error_law", to_string(d.error_law)},
              {"ar_coef", d.ar_coef},
              {"burn_in", d.burn_in},
              {"error_sd", d.error_sd},
              {"covariates", d.covariates},
              {"xi", d.xi},
              {"family", to_string(d.family)},
              {"poisson_kappa", d.poisson_kappa},
              {"poisson_mean", d.poisson_mean},
              {"psi_sd", d.psi_sd},
              {"seed", d.seed}};
}

std::vector<SimDesign> expand_designs(const json& j) {
  std::vector<SimDesign> out;
  if (j.contains("designs")) {
    for (const auto& item : j["designs"]) {
      auto more = expand_designs(item);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }
  std::vector<json> partial{json::object()};
  for (const auto& [key, v] : j.items()) {
    if (key == "estimators") continue;
    std::vector<json> next;
    const std::vector<json> values = v.is_array() ? v.get<std::vector<json>>() : std::vector<json>{v};
    for (const auto& p : partial)
      for (const auto& value : values) {
        json q = p;
        q[key] = value;
        next.push_back(q);
      }
    partial = std::move(next);
  }
  for (const auto& p : partial) out.push_back(design_from_json(p));
  return out;
}

int cmd_fit(const RunConfig& cfg, std::ostream& log) {
  const auto d = load_panel(cfg);
  const auto out = prepare_out(cfg);
  emit_fit(out, "", fit_summary(d, cfg), cfg, log);
  return 0;
}

int cmd_placebo(const RunConfig& cfg, std::ostream& log) {
  const auto d = load_panel(cfg);
  const auto out = prepare_out(cfg);
  FitSummary s;
  if (is_ols(cfg.estimator)) {
    if (*cfg.pseudo_t0 >= d.t0)
      throw DataError("placebo period " + std::to_string(*cfg.pseudo_t0) + " must precede the treatment period " +
                      std::to_string(d.t0));
    auto placebo = d.truncated(d.n_pre(), *cfg.pseudo_t0);
    placebo.validate();
    s = summarize_fit(placebo, fit_ols(placebo, cfg.estimator == "ols-constrained", ols_options(cfg)));
  } else {
    const auto opts = effect_options(cfg);
    const auto a = placebo_run(d, *cfg.pseudo_t0, opts);
    s = summarize_fit(d.truncated(d.n_pre(), *cfg.pseudo_t0), a, opts);
  }
  log << "placebo treatment start after " << *cfg.pseudo_t0 << "\n";
  emit_fit(out, "placebo_", s, cfg, log);
  return 0;
}

int cmd_conformal(const RunConfig& cfg, std::ostream& log) {
  const auto d = load_panel(cfg);
  const auto out = prepare_out(cfg);
  if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
  ConformalOptions opts;
  opts.level = cfg.level;
  opts.scheme = parse_conformal_scheme(cfg.scheme);
  opts.instruments = InstrumentSpec::parse(cfg.instruments);
  opts.grid_points = cfg.grid_points;
  opts.grid_scale = cfg.grid_scale;
  std::vector<long> periods = cfg.periods;
  if (periods.empty()) periods.assign(d.time_index.begin() + d.n_pre(), d.time_index.end());
  std::vector<ConformalResult> results;
  for (long p : periods) {
    results.push_back(cfg.grid.empty() ? conformal_interval_default(d, p, opts)
                                       : conformal_interval(d, p, parse_grid(cfg.grid), opts));
  }
  std::ostringstream table, grid;
  write_conformal_table(results, table);
  write_conformal_grid(results, grid);
  const json j = conformal_json(results);
  write_file(out / "conformal.tsv", table.str());
  write_file(out / "conformal_grid.tsv", grid.str());
  write_file(out / "conformal.json", j.dump(2) + "\n");
  write_file(out / "conformal_config.json", cfg.to_json().dump(2) + "\n");
  log << render_conformal(j);
  return 0;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  std::vector<SimDesign> designs{SimDesign{}};
  std::vector<std::string> names = cfg.mc_estimators;
  if (!cfg.design.empty()) {
    const json j = read_json(cfg.design);
    designs = expand_designs(j);
    if (names.empty() && j.contains("estimators")) names = j["estimators"].get<std::vector<std::string>>();
  }
  if (names.empty()) names = {"pi-joint", "ols"};

  McOptions opts;
  opts.reps = cfg.reps;
  opts.seed = cfg.seed;
  opts.workers = cfg.workers;
  if (cfg.bandwidth) opts.bandwidth = *cfg.bandwidth;
  opts.instruments = InstrumentSpec::parse(cfg.instruments);
  opts.conformal.level = cfg.level;
  opts.conformal.scheme = parse_conformal_scheme(cfg.scheme);
  opts.conformal.grid_points = cfg.grid_points;
  opts.conformal.grid_scale = cfg.grid_scale;

  std::vector<McResult> runs;
  std::ostringstream table;
  json summary = json::array();
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto& design = designs[i];
    McOptions o = opts;
    o.estimators.clear();
    for (const auto& n : names) {
      const auto e = parse_mc_estimator(n);
      // Covariate-adjusted estimators only apply to designs with covariates.
      if ((e == McEstimator::pi_covariates || e == McEstimator::pi_pooled) && !design.covariates) continue;
      o.estimators.push_back(e);
    }
    if (o.estimators.empty()) continue;
    auto r = run_monte_carlo(design, o);
    std::ostringstream one;
    write_mc_table(r, one);
    std::string text = one.str();
    if (i > 0) text = text.substr(text.find('\n') + 1);
    table << text;
    json rows = json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"estimator", to_string(row.cell.estimator)},
                      {"parameter", row.cell.parameter},
                      {"interval", to_string(row.cell.interval)},
                      {"truth", row.cell.truth},
                      {"bias", std::isfinite(row.bias) ? json(row.bias) : json(nullptr)},
                      {"mc_sd", std::isfinite(row.mc_sd) ? json(row.mc_sd) : json(nullptr)},
                      {"coverage", std::isfinite(row.coverage) ? json(row.coverage) : json(nullptr)},
                      {"failures", row.failures}});
    summary.push_back({{"design", design_to_json(design)}, {"rows", rows}});
    log << "design " << (i + 1) << "/" << designs.size() << ": T0=" << design.t0 << " T1=" << design.t1
        << " N=" << design.n_controls() << " xi=" << design.xi << " done\n";
    runs.push_back(std::move(r));
  }
  std::ostringstream t1;
  write_table1(runs, t1);
  write_file(out / "mc_results.tsv", table.str());
  write_file(out / "table1.tsv", t1.str());
  write_file(out / "simulate.json", json{{"reps", cfg.reps}, {"seed", cfg.seed}, {"runs", summary}}.dump(2) + "\n");
  write_file(out / "simulate_config.json", cfg.to_json().dump(2) + "\n");

  if (cfg.emit_data) {
    SimDesign first = designs.front();
    first.seed = replication_seed(cfg.seed, 0);
    const auto panel = generate(first);
    std::ostringstream csv;
    export_long(panel.data, csv);
    write_file(out / "simulated_panel.csv", csv.str());
    std::string roles = panel.data.treated_label + ":treated";
    for (const auto& u : panel.data.donor_labels) roles += "," + u + ":donor";
    for (const auto& u : panel.data.proxy_labels) roles += "," + u + ":proxy";
    write_file(out / "simulated_panel.json",
               json{{"roles", roles}, {"t0", panel.data.t0}, {"design", design_to_json(first)}}.dump(2) + "\n");
  }
  log << t1.str();
  return 0;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path out(cfg.out);
  bool any = false;
  for (const std::string prefix : {"", "placebo_"}) {
    const auto path = out / (prefix + "summary.json");
    if (!fs::exists(path)) continue;
    const auto text = render_summary(read_json(path));
    write_file(out / (prefix + "report.txt"), text);
    if (!prefix.empty()) log << "\nplacebo\n";
    log << text;
    any = true;
  }
  if (fs::exists(out / "conformal.json")) {
    const auto text = render_conformal(read_json(out / "conformal.json"));
    write_file(out / "conformal_report.txt", text);
    log << "\nconformal prediction intervals\n" << text;
    any = true;
  }
  if (fs::exists(out / "table1.tsv")) {
    log << "\nMonte Carlo coverage (table1.tsv)\n" << read_file(out / "table1.tsv");
    any = true;
  }
  if (!any) throw DataError("nothing to report in '" + cfg.out + "' (run fit, placebo, conformal or simulate first)");
  return 0;
}

int cmd_convert(const RunConfig& cfg, std::ostream& log) {
  std::ifstream in(cfg.input);
  if (!in) throw DataError("cannot open '" + cfg.input + "'");
  std::ostringstream out;
  wide_to_long(in, out);
  write_file(cfg.output, out.str());
  log << "wrote " << cfg.output << "\n";
  return 0;
}

namespace {

/// Option values parsed from the command line, applied over the config file
/// only when given.
struct Overrides {
  RunConfig staged;
  long t0 = 0, bandwidth = 0, pseudo_t0 = 0;
  std::string config;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T RunConfig::*member, const std::string& help) {
    auto* opt = app->add_option(flag, staged.*member, help);
    setters.emplace_back(opt, [this, member](RunConfig& c) { c.*member = staged.*member; });
    return opt;
  }
  void add_optional(CLI::App* app, const std::string& flag, long& slot, std::optional<long> RunConfig::*member,
                    const std::string& help) {
    auto* opt = app->add_option(flag, slot, help);
    setters.emplace_back(opt, [&slot, member](RunConfig& c) { c.*member = slot; });
  }
  void add_flag(CLI::App* app, const std::string& flag, bool RunConfig::*member, const std::string& help) {
    auto* opt = app->add_flag(flag, staged.*member, help);
    setters.emplace_back(opt, [this, member](RunConfig& c) { c.*member = staged.*member; });
  }
};

void add_data_options(CLI::App* app, Overrides& o) {
  o.add(app, "--data", &RunConfig::data, "Long-format panel file (unit, time, outcome, covariates...)");
  o.add(app, "--roles", &RunConfig::roles,
        "Unit roles, e.g. 'A:treated,B:donor,C:proxy'; unlisted units become proxies");
  o.add_optional(app, "--t0", o.t0, &RunConfig::t0, "Last pre-treatment period (time value)");
  o.add(app, "--unit-column", &RunConfig::unit_column, "Name of the unit column (default: first column)");
  o.add(app, "--time-column", &RunConfig::time_column, "Name of the time column (default: second column)");
  o.add(app, "--outcome-column", &RunConfig::outcome_column, "Name of the outcome column (default: third column)");
  o.add(app, "--covariate-names", &RunConfig::covariate_names, "Covariate columns to use (default: all others)")
      ->delimiter(',');
}

void add_model_options(CLI::App* app, Overrides& o) {
  o.add(app, "--estimator", &RunConfig::estimator, "pi-joint | pi-two-stage | ols | ols-constrained | bridge");
  o.add(app, "--effect", &RunConfig::effect, "Effect model: constant | linear | quadratic | piecewise:s1;s2");
  o.add(app, "--instruments", &RunConfig::instruments, "Proxy instruments g(Z): proxies | affine | affine+squares");
  o.add(app, "--covariates", &RunConfig::covariates,
        "Covariate adjustment: none | per-unit | pooled (OLS: any value other than none adds the treated unit's "
        "covariates)");
  o.add(app, "--link", &RunConfig::link, "Bridge link: exponential | identity");
  o.add(app, "--cov", &RunConfig::cov, "Standard errors to report: hc | hac | both");
  o.add_optional(app, "--bandwidth", o.bandwidth, &RunConfig::bandwidth,
                 "HAC lag truncation (default floor(4 (n/100)^(2/9)))");
  o.add_flag(app, "--two-step", &RunConfig::two_step, "Second GMM step with the inverse HC moment covariance");
}

void add_conformal_options(CLI::App* app, Overrides& o) {
  o.add(app, "--level", &RunConfig::level, "Test level; intervals have coverage 1 - level (default 0.10)");
  o.add(app, "--scheme", &RunConfig::scheme, "Permutation scheme: moving-block | iid");
  o.add(app, "--grid-points", &RunConfig::grid_points, "Points in the default grid (default 101)");
  o.add(app, "--grid-scale", &RunConfig::grid_scale,
        "Default grid half-width in pre-period RMSE units around the point prediction (default 6, doubled up to 4 times "
        "while an endpoint is accepted)");
}

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON config file; keys are option names with '-' replaced by '_'");
  o.add(app, "--out", &RunConfig::out, "Output directory (default pisc_out)");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Proximal synthetic control estimation, inference and simulation"};
  app.footer(
      "Every option can also be given in the --config JSON file under its long name with '-' replaced by '_' "
      "(e.g. \"t0\", \"covariate_names\", \"grid_points\"). Flags override the config file.\n"
      "Exit codes: 0 success, 2 input error, 3 identification failure, 4 numerical failure.");
  app.require_subcommand(1);
  Overrides o;

  auto* fit = app.add_subcommand("fit", "Estimate synthetic control weights and the treatment effect");
  add_run_options(fit, o);
  add_data_options(fit, o);
  add_model_options(fit, o);
  o.add(fit, "--seed", &RunConfig::seed, "Seed for ols-constrained random restarts");

  auto* placebo = app.add_subcommand("placebo", "Refit with a fictitious treatment start inside the pre-period");
  add_run_options(placebo, o);
  add_data_options(placebo, o);
  add_model_options(placebo, o);
  o.add(placebo, "--seed", &RunConfig::seed, "Seed for ols-constrained random restarts");
  o.add_optional(placebo, "--pseudo-t0", o.pseudo_t0, &RunConfig::pseudo_t0, "Placebo last pre-treatment period");

  auto* conformal = app.add_subcommand("conformal", "Conformal prediction intervals for per-period effects");
  add_run_options(conformal, o);
  add_data_options(conformal, o);
  add_conformal_options(conformal, o);
  o.add(conformal, "--instruments", &RunConfig::instruments, "Proxy instruments g(Z): proxies | affine | affine+squares");
  o.add(conformal, "--periods", &RunConfig::periods, "Post periods to test (default: all)")->delimiter(',');
  o.add(conformal, "--grid", &RunConfig::grid, "Explicit grid lo:hi:n used for every period");
  o.add(conformal, "--workers", &RunConfig::workers, "OpenMP threads for the grid (0 = runtime default)");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the estimators");
  add_run_options(simulate, o);
  o.add(simulate, "--design", &RunConfig::design,
        "Design JSON; list values expand to a grid of designs (keys: r, t0, t1, effect, tau, gamma0, gamma1, "
        "error_law, ar_coef, burn_in, error_sd, covariates, xi, family, poisson_kappa, poisson_mean, psi_sd, "
        "estimators)");
  o.add(simulate, "--mc-estimators", &RunConfig::mc_estimators,
        "pi-joint, pi-covariates, pi-pooled, pi-two-stage, ols, ols-constrained, bridge, conformal")
      ->delimiter(',');
  o.add(simulate, "--reps", &RunConfig::reps, "Replications per design (default 500)");
  o.add(simulate, "--seed", &RunConfig::seed, "Master seed");
  o.add(simulate, "--workers", &RunConfig::workers, "OpenMP threads (0 = runtime default)");
  o.add(simulate, "--instruments", &RunConfig::instruments, "Proxy instruments g(Z): proxies | affine | affine+squares");
  o.add_optional(simulate, "--bandwidth", o.bandwidth, &RunConfig::bandwidth, "HAC lag truncation");
  add_conformal_options(simulate, o);
  o.add_flag(simulate, "--emit-data", &RunConfig::emit_data,
             "Also write the first replication's panel as simulated_panel.csv");

  auto* report = app.add_subcommand("report", "Print the text report for an output directory");
  add_run_options(report, o);

  auto* convert = app.add_subcommand("convert", "Convert a wide panel (time column, one column per unit) to long");
  add_run_options(convert, o);
  o.add(convert, "--input", &RunConfig::input, "Wide input file");
  o.add(convert, "--output", &RunConfig::output, "Long output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  RunConfig cfg;
  try {
    if (!o.config.empty()) apply_config(cfg, read_json(o.config));
    for (auto& [opt, set] : o.setters)
      if (opt->count() > 0) set(cfg);
    cfg.subcommand = app.get_subcommands().front()->get_name();
    cfg.validate();
    std::ostream& log = std::cout;
    if (cfg.subcommand == "fit") return cmd_fit(cfg, log);
    if (cfg.subcommand == "placebo") return cmd_placebo(cfg, log);
    if (cfg.subcommand == "conformal") return cmd_conformal(cfg, log);
    if (cfg.subcommand == "simulate") return cmd_simulate(cfg, log);
    if (cfg.subcommand == "report") return cmd_report(cfg, log);
    if (cfg.subcommand == "convert") return cmd_convert(cfg, log);
  } catch (const IdentificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace pisc
