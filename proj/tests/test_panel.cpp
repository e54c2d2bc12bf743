#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "pisc/panel.hpp"

using namespace pisc;

namespace {

const char* kSmall =
    "unit,time,outcome\n"
    "A,1,1.0\nA,2,2.0\nA,3,3.5\nA,4,4.0\n"
    "B,1,0.5\nB,2,1.5\nB,3,2.0\nB,4,2.5\n"
    "C,1,9\nC,2,8\nC,3,7\nC,4,6\n";

PanelDataset ingest_string(const std::string& text, const std::string& roles, long t0, const ColumnMap& cm = {}) {
  std::istringstream in(text);
  return ingest(in, RoleMap::parse(roles), t0, cm);
}

}  // namespace

TEST_CASE("smallest valid panel") {
  auto d = ingest_string(kSmall, "A:treated,B:donor,C:proxy", 2);
  CHECK(d.y.size() == 4);
  CHECK(d.donors.rows() == 4);
  CHECK(d.donors.cols() == 1);
  CHECK(d.proxies.rows() == 4);
  CHECK(d.proxies.cols() == 1);
  CHECK(d.y(2) == 3.5);
  CHECK(d.donors(3, 0) == 2.5);
  CHECK(d.proxies(0, 0) == 9.0);
}

TEST_CASE("unlisted units become proxies") {
  auto d = ingest_string(kSmall, "A:treated,B:donor", 2);
  REQUIRE(d.proxy_labels.size() == 1);
  CHECK(d.proxy_labels[0] == "C");
}

TEST_CASE("missing outcome is fatal") {
  std::string text = kSmall;
  text.replace(text.find("B,3,2.0"), 7, "B,3,");
  CHECK_THROWS_WITH_AS(ingest_string(text, "A:treated,B:donor,C:proxy", 2), doctest::Contains("missing outcome"),
                       DataError);
  std::string dropped = kSmall;
  dropped.erase(dropped.find("B,3,2.0\n"), 8);
  CHECK_THROWS_AS(ingest_string(dropped, "A:treated,B:donor,C:proxy", 2), DataError);
}

TEST_CASE("covariates are carried forward within unit") {
  std::ostringstream text;
  text << "unit,time,outcome,x\n";
  for (const char* u : {"A", "B", "C"})
    for (int t = 1; t <= 6; ++t) {
      text << u << ',' << t << ',' << t * 1.5 << ',';
      if (!(std::string(u) == "C" && t == 5)) text << 10 * t + (u[0] - 'A');
      text << '\n';
    }
  auto d = ingest_string(text.str(), "A:treated,B:donor,C:proxy", 3);
  const auto idx = d.covariate_indices(Role::proxy);
  REQUIRE(idx.size() == 1);
  CHECK(d.covariates(4, idx[0]) == d.covariates(3, idx[0]));
  CHECK(d.covariates(3, idx[0]) == 42.0);
  CHECK(d.covariates(5, idx[0]) == 62.0);
  CHECK(d.covariates.allFinite());
}

TEST_CASE("NA cells count as missing and leading gaps are an error") {
  const std::string text =
      "unit,time,outcome,x\nA,1,1,NA\nA,2,2,1\nA,3,3,1\nB,1,1,1\nB,2,2,1\nB,3,3,1\n";
  CHECK_THROWS_WITH_AS(ingest_string(text, "A:treated,B:donor", 2), doctest::Contains("leading missing covariate"),
                       DataError);
}

TEST_CASE("locf imputation is idempotent") {
  const std::string text =
      "unit,time,outcome,x\nA,1,1,5\nA,2,2,\nA,3,3,7\nA,4,5,\nB,1,1,1\nB,2,2,NA\nB,3,3,2\nB,4,4,\n"
      "C,1,0,3\nC,2,0,4\nC,3,1,\nC,4,2,6\n";
  auto d1 = ingest_string(text, "A:treated,B:donor,C:proxy", 3);
  std::ostringstream once;
  export_long(d1, once);
  auto d2 = ingest_string(once.str(), "A:treated,B:donor,C:proxy", 3);
  std::ostringstream twice;
  export_long(d2, twice);
  CHECK(once.str() == twice.str());
  CHECK(d1.covariates == d2.covariates);
}

TEST_CASE("export then ingest round-trips bit-exactly") {
  std::mt19937_64 rng(11);
  auto w = testing::random_matrix(9, 2, rng);
  auto z = testing::random_matrix(9, 3, rng);
  Eigen::VectorXd y = testing::random_matrix(9, 1, rng).col(0) * 1e3;
  y(0) = 0.1 + 0.2;
  auto d = testing::make_panel(y, w, z, 5);
  d.treated_label = "West Germany";
  d.donor_labels = {"a,b", "say \"hi\""};
  std::ostringstream out;
  export_long(d, out);
  auto back = ingest_string(out.str(), "West Germany:treated,\"a,b\":donor,\"say \"\"hi\"\"\":donor", 5);
  CHECK(back.y == d.y);
  CHECK(back.donors == d.donors);
  CHECK(back.proxies == d.proxies);
  CHECK(back.donor_labels == d.donor_labels);
  CHECK(back.treated_label == "West Germany");
}

TEST_CASE("named columns and quoted fields") {
  const std::string text =
      "index,country,year,gdp,infl\n"
      "1,\"West Germany\",1960,100,1\n1,\"West Germany\",1961,110,\n1,\"West Germany\",1962,120,3\n"
      "1,\"West Germany\",1963,125,3\n"
      "2,\"USA\",1960,90,2\n2,\"USA\",1961,95,2\n2,\"USA\",1962,99,2\n2,\"USA\",1963,99,2\n"
      "3,\"Japan\",1960,50,1\n3,\"Japan\",1961,60,1\n3,\"Japan\",1962,70,1\n3,\"Japan\",1963,70,1\n";
  ColumnMap cm{"country", "year", "gdp"};
  std::istringstream in(text);
  RoleMap roles = RoleMap::parse("West Germany:treated,USA:donor");
  roles.covariates = {"infl"};
  auto d = ingest(in, roles, 1962, cm);
  CHECK(d.treated_label == "West Germany");
  CHECK(d.time_index == std::vector<long>{1960, 1961, 1962, 1963});
  CHECK(d.y(1) == 110.0);
  CHECK(d.proxy_labels == std::vector<std::string>{"Japan"});
  REQUIRE(d.covariate_columns.size() == 3);
  CHECK(d.covariates(1, 0) == 1.0);

  std::istringstream bad(text);
  CHECK_THROWS_WITH_AS(ingest(bad, roles, 1962, ColumnMap{"nation", "year", "gdp"}),
                       doctest::Contains("column 'nation' not found"), DataError);
}

TEST_CASE("split partitions the rows") {
  SUBCASE("T=10, t0=5") {
    auto d = testing::noiseless_panel(10, 5, Eigen::VectorXd::Ones(1), 0.0);
    auto [pre, post] = split(d);
    CHECK(pre.count == 5);
    CHECK(post.count == 5);
    CHECK(pre.begin + pre.count == post.begin);
    CHECK(pre.count + post.count == d.n_periods());
  }
  SUBCASE("T=3, t0=2") {
    auto d = testing::noiseless_panel(3, 2, Eigen::VectorXd::Ones(1), 0.0);
    auto [pre, post] = split(d);
    CHECK(pre.times() == std::vector<long>{1, 2});
    CHECK(post.times() == std::vector<long>{3});
  }
  SUBCASE("German shape") {
    auto d = testing::noiseless_panel(44, 31, Eigen::VectorXd::Ones(5), 0.0);
    for (auto& t : d.time_index) t += 1959;
    d.t0 = 1990;
    auto [pre, post] = split(d);
    CHECK(pre.count == 31);
    CHECK(post.count == 13);
  }
}

TEST_CASE("validation rejects malformed panels") {
  auto d = testing::noiseless_panel(8, 4, Eigen::VectorXd::Ones(2), 0.0);
  CHECK_NOTHROW(d.validate());
  auto gaps = d;
  gaps.time_index[3] = 10;
  CHECK_THROWS_AS(gaps.validate(), DataError);
  auto nan = d;
  nan.donors(2, 1) = std::nan("");
  CHECK_THROWS_AS(nan.validate(), DataError);
  auto short_pre = d;
  short_pre.t0 = 2;
  CHECK_THROWS_WITH_AS(short_pre.validate(), doctest::Contains("too few pre-treatment periods"), DataError);
  auto late = d;
  late.t0 = 8;
  CHECK_THROWS_AS(late.validate(), DataError);
}

TEST_CASE("role parsing") {
  auto r = RoleMap::parse("A:treated, B:donor ,C:proxy,D:excluded");
  CHECK(r.role_of("A") == Role::treated);
  CHECK(r.role_of("D") == Role::excluded);
  CHECK(r.role_of("E") == Role::proxy);
  CHECK_THROWS_AS(RoleMap::parse("A:treated,A:donor"), DataError);
  CHECK_THROWS_AS(RoleMap::parse("A"), DataError);
  CHECK_THROWS_AS(RoleMap::parse("A:boss"), DataError);
  std::istringstream two(kSmall);
  CHECK_THROWS_WITH_AS(ingest(two, RoleMap::parse("A:treated,B:treated"), 2), doctest::Contains("more than one"),
                       DataError);
}

TEST_CASE("wide to long conversion") {
  std::istringstream wide("year\tA\tB\n1\t1.5\t2\n2\t3\t4\n3\t5\t6\n");
  std::ostringstream out;
  wide_to_long(wide, out);
  auto d = ingest_string(out.str(), "A:treated,B:donor", 2);
  CHECK(d.y(1) == 3.0);
  CHECK(d.donors(0, 0) == 2.0);
}
