// Writes a synthetic country panel laid out like the published reunification
// data: 17 countries, 1960-2003, per-capita GDP plus covariates with gaps.
// West Germany loads on the factors of five donor countries; the remaining
// eleven countries are noisy mixtures of the same factors. From 1991 on West
// Germany's GDP is lowered by 1200.

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : "german_synthetic.csv";
  constexpr int kFirst = 1960, kLast = 2003, kT = kLast - kFirst + 1, kFactors = 5;
  const std::vector<std::string> countries{
      "West Germany", "USA",    "UK",          "Austria",  "Belgium",  "Denmark",
      "France",       "Italy",  "Netherlands", "Norway",   "Switzerland", "Japan",
      "Greece",       "Portugal", "Spain",     "Australia", "New Zealand"};
  const std::vector<std::string> donors{"Austria", "Japan", "Netherlands", "Switzerland", "USA"};
  const std::array<double, kFactors> weights{0.42, 0.16, 0.10, 0.11, 0.22};

  std::mt19937_64 rng(19901003);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Factors: country-group growth paths with distinct cycles and persistent shocks.
  std::vector<std::array<double, kFactors>> lambda(kT);
  for (int k = 0; k < kFactors; ++k) {
    const double base = 2400.0 + 500.0 * k;
    const double growth = 0.048 + 0.004 * (k % 3) - 0.002 * k;
    const double period = 6.0 + 2.5 * k;
    const double phase = 1.3 * k;
    double shock = 0.0;
    for (int t = 0; t < kT; ++t) {
      shock = 0.6 * shock + 260.0 * normal(rng);
      lambda[t][k] = base * std::exp(growth * t) + 700.0 * std::sin(6.283185307179586 * t / period + phase) + shock;
    }
  }

  // Common covariate effects on GDP: inflation, trade openness, industry share.
  const std::array<double, 3> xi{-25.0, 8.0, 40.0};

  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return 1;
  }
  out << "index,country,year,gdp,infrate,trade,industry,schooling\n";
  int index = 0;
  for (const auto& country : countries) {
    ++index;
    std::array<double, kFactors> mu{};
    if (country == "West Germany") {
      mu = weights;
    } else {
      int donor = -1;
      for (int k = 0; k < kFactors; ++k)
        if (donors[static_cast<std::size_t>(k)] == country) donor = k;
      if (donor >= 0) {
        mu[static_cast<std::size_t>(donor)] = 1.0;
      } else {
        double sum = 0.0;
        for (auto& m : mu) sum += (m = 0.2 + unif(rng));
        for (auto& m : mu) m /= sum;
      }
    }
    double infl = 3.0 + 4.0 * unif(rng), trade = 30.0 + 60.0 * unif(rng), industry = 28.0 + 10.0 * unif(rng);
    const bool schooling_reported = unif(rng) < 0.5;
    for (int t = 0; t < kT; ++t) {
      const int year = kFirst + t;
      infl = std::max(-1.0, infl + 0.5 * (4.5 - infl) * 0.3 + 1.2 * normal(rng));
      trade += 0.6 + 1.5 * normal(rng);
      industry += -0.15 + 0.6 * normal(rng);
      double gdp = 0.0;
      for (int k = 0; k < kFactors; ++k) gdp += mu[static_cast<std::size_t>(k)] * lambda[t][k];
      gdp += xi[0] * infl + xi[1] * trade + xi[2] * industry + 120.0 * normal(rng);
      if (country == "West Germany" && year > 1990) gdp -= 1200.0;

      auto cell = [&](double v, bool keep) {
        if (!keep) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
      };
      const bool first = t == 0;
      out << index << ",\"" << country << "\"," << year << ',' << cell(gdp, true) << ','
          << cell(infl, first || unif(rng) > 0.06) << ',' << cell(trade, first || unif(rng) > 0.06) << ','
          << cell(industry, first || unif(rng) > 0.10) << ','
          << cell(60.0 + 0.5 * t, schooling_reported && year >= 1980 && year % 5 == 0) << '\n';
    }
  }
  return 0;
}
