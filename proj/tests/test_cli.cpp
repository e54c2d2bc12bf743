#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "pisc/cli.hpp"
#include "pisc/simulate.hpp"

using namespace pisc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pisc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Runs the CLI with stdout and stderr captured.
struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pisc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Writes a simulated panel as CSV and returns its role string.
std::string write_panel(const PanelDataset& d, const fs::path& file) {
  std::ofstream f(file);
  export_long(d, f);
  std::string roles = d.treated_label + ":treated";
  for (const auto& u : d.donor_labels) roles += "," + u + ":donor";
  for (const auto& u : d.proxy_labels) roles += "," + u + ":proxy";
  return roles;
}

json tau_entry(const fs::path& summary) {
  const json s = json::parse(slurp(summary));
  for (const auto& p : s["parameters"])
    if (p["name"] == "tau") return p;
  return json();
}

const std::string kSource = PISC_SOURCE_DIR;

}  // namespace

TEST_CASE("config keys and precedence") {
  RunConfig cfg;
  apply_config(cfg, json{{"t0", 40}, {"estimator", "ols"}, {"covariate_names", {"a", "b"}}, {"grid_points", 51}});
  CHECK(*cfg.t0 == 40);
  CHECK(cfg.estimator == "ols");
  CHECK(cfg.covariate_names == std::vector<std::string>{"a", "b"});
  CHECK(cfg.grid_points == 51);
  CHECK_THROWS_WITH_AS(apply_config(cfg, json{{"tO", 3}}), doctest::Contains("unknown config key"), DataError);
  CHECK_THROWS_AS(apply_config(cfg, json{{"t0", "forty"}}), DataError);
  CHECK_THROWS_AS(apply_config(cfg, json::array()), DataError);

  // The config round-trips through its JSON form.
  RunConfig again;
  auto j = cfg.to_json();
  apply_config(again, j);
  CHECK(again.to_json() == j);

  SimDesign design;
  design.t0 = 30;
  design.seed = 3;
  const auto dir = scratch("precedence");
  const auto roles = write_panel(generate(design).data, dir / "panel.csv");
  std::ofstream(dir / "cfg.json") << json{{"data", (dir / "panel.csv").string()},
                                          {"roles", roles},
                                          {"t0", 30},
                                          {"estimator", "ols"},
                                          {"out", (dir / "a").string()}}
                                         .dump();
  REQUIRE(invoke({"fit", "--config", (dir / "cfg.json").string()}).code == 0);
  CHECK(json::parse(slurp(dir / "a" / "config.json"))["estimator"] == "ols");
  REQUIRE(invoke({"fit", "--config", (dir / "cfg.json").string(), "--estimator", "pi-joint", "--out",
                  (dir / "b").string()})
              .code == 0);
  const json used = json::parse(slurp(dir / "b" / "config.json"));
  CHECK(used["estimator"] == "pi-joint");
  CHECK(used["t0"] == 30);
  CHECK(json::parse(slurp(dir / "b" / "summary.json"))["estimator"] == "pi-joint");
}

TEST_CASE("fit recovers the effect on a simulated panel") {
  SimDesign design;
  design.seed = 2024;
  const auto dir = scratch("fit");
  const auto roles = write_panel(generate(design).data, dir / "panel.csv");
  const std::vector<std::string> args{"fit",   "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "100",
                                      "--out", (dir / "run1").string()};
  auto r = invoke(args);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("tau") != std::string::npos);
  for (const char* f : {"parameters.tsv", "series.tsv", "summary.json", "report.txt", "config.json"})
    CHECK(fs::exists(dir / "run1" / f));
  const json tau = tau_entry(dir / "run1" / "summary.json");
  CHECK(std::abs(tau["estimate"].get<double>() - 2.0) < 3.0 * tau["se_hc"].get<double>());

  auto second = args;
  second.back() = (dir / "run2").string();
  REQUIRE(invoke(second).code == 0);
  for (const char* f : {"parameters.tsv", "series.tsv", "summary.json", "report.txt"})
    CHECK(slurp(dir / "run1" / f) == slurp(dir / "run2" / f));

  REQUIRE(invoke({"report", "--out", (dir / "run1").string()}).code == 0);
}

TEST_CASE("exit codes") {
  SimDesign design;
  design.r = 2;
  design.seed = 5;
  auto d = generate(design).data;
  const auto dir = scratch("exit");
  // Two donors and a single proxy: the proxies alone cannot identify the weights.
  std::string roles = d.treated_label + ":treated," + d.donor_labels[0] + ":donor," + d.donor_labels[1] + ":donor," +
                      d.proxy_labels[0] + ":proxy," + d.proxy_labels[1] + ":excluded";
  write_panel(d, dir / "panel.csv");
  auto r = invoke({"fit", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "100", "--instruments",
                   "proxies", "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("under-identified: 1 instruments for 2 weights") != std::string::npos);

  CHECK(invoke({"fit", "--data", (dir / "missing.csv").string(), "--roles", roles, "--t0", "100", "--out",
                (dir / "o").string()})
            .code == 2);
  CHECK(invoke({"fit", "--roles", roles, "--t0", "100"}).code == 2);
  CHECK(invoke({"placebo", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "100"}).code == 2);
  CHECK(invoke({"fit", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "100", "--estimator",
                "magic"})
            .code == 2);
  CHECK(invoke({"report", "--out", (dir / "empty").string()}).code == 2);
  CHECK(invoke({"frobnicate"}).code != 0);
}

TEST_CASE("placebo and conformal write their outputs") {
  SimDesign design;
  design.t0 = 60;
  design.t1 = 3;
  design.seed = 8;
  const auto dir = scratch("placebo");
  const auto roles = write_panel(generate(design).data, dir / "panel.csv");
  const auto out = (dir / "o").string();
  auto p = invoke({"placebo", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "60", "--pseudo-t0",
                   "40", "--out", out});
  REQUIRE(p.code == 0);
  for (const char* f : {"placebo_parameters.tsv", "placebo_series.tsv", "placebo_summary.json", "placebo_report.txt"})
    CHECK(fs::exists(dir / "o" / f));
  CHECK(json::parse(slurp(dir / "o" / "placebo_summary.json"))["t0"] == 40);

  auto c = invoke({"conformal", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "60", "--periods",
                   "61,63", "--grid-points", "81", "--out", out});
  REQUIRE(c.code == 0);
  const json cj = json::parse(slurp(dir / "o" / "conformal.json"));
  REQUIRE(cj.size() == 2);
  CHECK(cj[0]["period"] == 61);
  CHECK(cj[1]["period"] == 63);
  CHECK(cj[0]["lower"].get<double>() < cj[0]["upper"].get<double>());
  const auto grid = slurp(dir / "o" / "conformal_grid.tsv");
  CHECK(static_cast<int>(std::count(grid.begin(), grid.end(), '\n')) == 1 + 2 * 81);
  CHECK(fs::exists(dir / "o" / "conformal.tsv"));
  CHECK(invoke({"conformal", "--data", (dir / "panel.csv").string(), "--roles", roles, "--t0", "60", "--grid",
                "1:0:5", "--out", out})
            .code == 2);
}

TEST_CASE("simulate expands designs") {
  const auto designs = expand_designs(json{{"t0", {30, 60}}, {"r", {1, 2}}, {"xi", 0}, {"estimators", {"ols"}}});
  REQUIRE(designs.size() == 4);
  CHECK(designs[0].t1 == designs[0].t0);
  int small = 0;
  for (const auto& d : designs) small += d.t0 == 30;
  CHECK(small == 2);
  const auto listed = expand_designs(json{{"designs", {json{{"t0", 20}}, json{{"t0", {40, 50}}, {"xi", 1}}}}});
  REQUIRE(listed.size() == 3);
  CHECK(listed[2].covariates);
  CHECK_FALSE(listed[0].covariates);
  CHECK_THROWS_AS(expand_designs(json{{"tee0", 30}}), DataError);
  CHECK_THROWS_AS(design_from_json(json{{"t0", 1}}), DataError);
  const auto back = design_from_json(design_to_json(designs[3]));
  CHECK(design_to_json(back) == design_to_json(designs[3]));

  const auto dir = scratch("simulate");
  std::ofstream(dir / "design.json") << json{{"t0", {30, 40}}, {"estimators", {"pi-joint", "ols"}}}.dump();
  auto r = invoke({"simulate", "--design", (dir / "design.json").string(), "--reps", "6", "--seed", "9", "--emit-data",
                   "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"mc_results.tsv", "table1.tsv", "simulate.json", "simulated_panel.csv", "simulated_panel.json"})
    CHECK(fs::exists(dir / "o" / f));
  const json sj = json::parse(slurp(dir / "o" / "simulate.json"));
  CHECK(sj["runs"].size() == 2);
  CHECK(sj["reps"] == 6);
  const auto table = slurp(dir / "o" / "table1.tsv");
  CHECK(table.rfind("N\tOLS_xi0_T30\tOLS_xi0_T40\tPI_xi0_T30\tPI_xi0_T40\n", 0) == 0);

  // Same seed, same numbers.
  REQUIRE(invoke({"simulate", "--design", (dir / "design.json").string(), "--reps", "6", "--seed", "9", "--workers",
                  "1", "--out", (dir / "p").string()})
              .code == 0);
  CHECK(slurp(dir / "o" / "mc_results.tsv") == slurp(dir / "p" / "mc_results.tsv"));

  // The emitted panel feeds back into fit.
  const json meta = json::parse(slurp(dir / "o" / "simulated_panel.json"));
  CHECK(invoke({"fit", "--data", (dir / "o" / "simulated_panel.csv").string(), "--roles",
                meta["roles"].get<std::string>(), "--t0", std::to_string(meta["t0"].get<long>()), "--out",
                (dir / "o" / "fit").string()})
            .code == 0);
}

TEST_CASE("named columns on the German panel") {
  const auto dir = scratch("german");
  auto r = invoke({"fit", "--config", kSource + "/configs/german_fit.json", "--data",
                   kSource + "/data/german_synthetic.csv", "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  const json s = json::parse(slurp(dir / "o" / "summary.json"));
  CHECK(s["converged"] == true);
  CHECK(s["n_pre"] == 31);
  CHECK(s["n_post"] == 13);
  const json tau = tau_entry(dir / "o" / "summary.json");
  CHECK(tau["estimate"].get<double>() < 0.0);
}

TEST_CASE("wide to long conversion") {
  const auto dir = scratch("convert");
  std::ofstream(dir / "wide.csv") << "time,A,B\n1,1.5,2\n2,3,4\n";
  REQUIRE(invoke({"convert", "--input", (dir / "wide.csv").string(), "--output", (dir / "long.csv").string()}).code ==
          0);
  const auto text = slurp(dir / "long.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(text.find("B,2,4") != std::string::npos);
  CHECK(invoke({"convert", "--input", (dir / "wide.csv").string()}).code == 2);
}
