#include "pisc/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace pisc {

namespace {

std::string trim(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Splits one record; double-quoted fields may contain the delimiter and
/// use "" for a literal quote.
std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" ||
         cell == ".";
}

double parse_double(const std::string& cell, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + " value '" + cell + "'");
  }
}

long parse_long(const std::string& cell, const std::string& what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw DataError("cannot parse " + what + " value '" + cell + "'");
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

char detect_delimiter(const std::string& header) {
  return header.find('\t') != std::string::npos ? '\t' : ',';
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

Role parse_role(const std::string& name) {
  auto n = lower(trim(name));
  if (n == "treated") return Role::treated;
  if (n == "donor") return Role::donor;
  if (n == "proxy") return Role::proxy;
  if (n == "excluded") return Role::excluded;
  throw DataError("unknown role '" + name + "'");
}

std::string to_string(Role role) {
  switch (role) {
    case Role::treated: return "treated";
    case Role::donor: return "donor";
    case Role::proxy: return "proxy";
    case Role::excluded: return "excluded";
  }
  return "?";
}

RoleMap RoleMap::parse(const std::string& spec) {
  RoleMap map;
  for (const auto& item : split_fields(spec, ',')) {
    if (item.empty()) continue;
    auto colon = item.rfind(':');
    if (colon == std::string::npos) throw DataError("role entry '" + item + "' lacks ':role'");
    auto unit = trim(item.substr(0, colon));
    if (!map.roles.emplace(unit, parse_role(item.substr(colon + 1))).second)
      throw DataError("unit '" + unit + "' assigned twice");
  }
  return map;
}

Role RoleMap::role_of(const std::string& unit) const {
  auto it = roles.find(unit);
  return it == roles.end() ? Role::proxy : it->second;
}

Eigen::Index PanelDataset::n_pre() const {
  return static_cast<Eigen::Index>(
      std::count_if(time_index.begin(), time_index.end(), [&](long t) { return t <= t0; }));
}

Eigen::VectorXd PanelDataset::normalized_times() const {
  Eigen::VectorXd s(n_periods());
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = normalized_time(i);
  return s;
}

std::vector<Eigen::Index> PanelDataset::covariate_indices(Role role) const {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < covariate_columns.size(); ++j)
    if (covariate_columns[j].role == role) idx.push_back(static_cast<Eigen::Index>(j));
  return idx;
}

Eigen::MatrixXd PanelDataset::covariate_block(Role role) const {
  auto idx = covariate_indices(role);
  Eigen::MatrixXd out(n_periods(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = covariates.col(idx[j]);
  return out;
}

Eigen::VectorXd PanelDataset::post_indicator() const {
  Eigen::VectorXd ind(n_periods());
  for (Eigen::Index i = 0; i < ind.size(); ++i) ind(i) = time_index[static_cast<std::size_t>(i)] > t0 ? 1.0 : 0.0;
  return ind;
}

Eigen::MatrixXd PanelDataset::controls() const {
  Eigen::MatrixXd out(n_periods(), n_donors() + n_proxies());
  out << donors, proxies;
  return out;
}

void PanelDataset::validate() const {
  const auto T = n_periods();
  if (static_cast<Eigen::Index>(time_index.size()) != T) throw DataError("time index length differs from outcome length");
  if (donors.rows() != T || proxies.rows() != T || (covariates.size() > 0 && covariates.rows() != T))
    throw DataError("panel blocks have inconsistent row counts");
  if (static_cast<Eigen::Index>(donor_labels.size()) != donors.cols() ||
      static_cast<Eigen::Index>(proxy_labels.size()) != proxies.cols() ||
      static_cast<Eigen::Index>(covariate_columns.size()) != covariates.cols())
    throw DataError("panel labels do not match column counts");
  for (std::size_t i = 1; i < time_index.size(); ++i)
    if (time_index[i] != time_index[i - 1] + 1) throw DataError("time index must be consecutive integers");
  if (T == 0 || t0 < time_index.front() || t0 >= time_index.back())
    throw DataError("t0 out of range: must satisfy first period <= t0 < last period");
  if (!y.allFinite() || !donors.allFinite() || !proxies.allFinite() || !covariates.allFinite())
    throw DataError("panel contains missing or non-finite values");
  if (donors.cols() == 0) throw DataError("donor pool is empty");

  std::set<std::string> names;
  for (const auto& c : covariate_columns) names.insert(c.name);
  const auto q = static_cast<Eigen::Index>(names.size());
  if (n_pre() < n_donors() + q + 1)
    throw DataError("too few pre-treatment periods: " + std::to_string(n_pre()) + " rows for " +
                    std::to_string(n_donors()) + " donors and " + std::to_string(q) + " covariates");
}

PanelDataset PanelDataset::truncated(Eigen::Index n_rows, long new_t0) const {
  PanelDataset out = *this;
  out.time_index.resize(static_cast<std::size_t>(n_rows));
  out.y = y.head(n_rows);
  out.donors = donors.topRows(n_rows);
  out.proxies = proxies.topRows(n_rows);
  out.covariates = covariates.topRows(n_rows);
  out.t0 = new_t0;
  return out;
}

std::vector<long> PanelRows::times() const {
  auto first = data->time_index.begin() + begin;
  return {first, first + count};
}

std::pair<PanelRows, PanelRows> split(const PanelDataset& d) {
  const auto n_pre = d.n_pre();
  return {PanelRows{&d, 0, n_pre}, PanelRows{&d, n_pre, d.n_periods() - n_pre}};
}

PanelDataset ingest(const std::filesystem::path& file, const RoleMap& roles, long t0, const ColumnMap& columns) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open data file '" + file.string() + "'");
  return ingest(in, roles, t0, columns);
}

PanelDataset ingest(std::istream& in, const RoleMap& roles, long t0, const ColumnMap& columns) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("data file is empty");
  const char delim = detect_delimiter(line);
  const auto raw_header = split_fields(line, delim);
  if (raw_header.size() < 3) throw DataError("header must start with unit, time, outcome columns");

  // Field order after moving the named unit/time/outcome columns to the front.
  std::vector<std::size_t> order;
  for (std::size_t pos = 0; pos < 3; ++pos) {
    const std::string& want = pos == 0 ? columns.unit : pos == 1 ? columns.time : columns.outcome;
    if (want.empty()) {
      order.push_back(pos);
      continue;
    }
    const auto it = std::find(raw_header.begin(), raw_header.end(), want);
    if (it == raw_header.end()) throw DataError("column '" + want + "' not found in header");
    order.push_back(static_cast<std::size_t>(it - raw_header.begin()));
  }
  for (std::size_t j = 0; j < raw_header.size(); ++j)
    if (std::find(order.begin(), order.end(), j) == order.end()) order.push_back(j);
  if (std::set<std::size_t>(order.begin(), order.end()).size() != raw_header.size())
    throw DataError("unit, time and outcome must be distinct columns");
  auto reorder = [&](std::vector<std::string> f) {
    if (f.size() < raw_header.size()) f.resize(raw_header.size());
    std::vector<std::string> out;
    out.reserve(order.size());
    for (auto j : order) out.push_back(std::move(f[j]));
    return out;
  };
  const auto header = reorder(raw_header);

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t j = 3; j < header.size(); ++j) {
    bool wanted = roles.covariates.empty() ||
                  std::find(roles.covariates.begin(), roles.covariates.end(), header[j]) != roles.covariates.end();
    if (wanted) {
      cov_cols.push_back(j);
      cov_names.push_back(header[j]);
    }
  }
  for (const auto& name : roles.covariates)
    if (std::find(cov_names.begin(), cov_names.end(), name) == cov_names.end())
      throw DataError("covariate '" + name + "' not found in header");

  struct Cell {
    std::optional<double> outcome;
    std::vector<std::optional<double>> covs;
  };
  std::vector<std::string> unit_order;
  std::map<std::string, std::map<long, Cell>> cells;
  std::set<long> times;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = reorder(split_fields(line, delim));
    const auto& unit = f[0];
    long t = parse_long(f[1], "time");
    if (!cells.count(unit)) unit_order.push_back(unit);
    auto& by_time = cells[unit];
    if (by_time.count(t))
      throw DataError("duplicate (unit, time) pair (" + unit + ", " + std::to_string(t) + ")");
    Cell cell;
    if (!is_missing(f[2])) cell.outcome = parse_double(f[2], "outcome");
    for (auto j : cov_cols)
      cell.covs.push_back(is_missing(f[j]) ? std::nullopt : std::optional<double>(parse_double(f[j], header[j])));
    by_time.emplace(t, std::move(cell));
    times.insert(t);
  }

  for (const auto& [unit, role] : roles.roles)
    if (!cells.count(unit)) throw DataError("unknown unit '" + unit + "' in roles");

  std::vector<long> time_index(times.begin(), times.end());
  if (time_index.empty()) throw DataError("data file has no rows");
  if (t0 < time_index.front() || t0 >= time_index.back())
    throw DataError("t0 out of range: " + std::to_string(t0) + " not in [" + std::to_string(time_index.front()) +
                    ", " + std::to_string(time_index.back()) + ")");

  std::string treated;
  std::vector<std::string> donors, proxies;
  for (const auto& unit : unit_order) {
    switch (roles.role_of(unit)) {
      case Role::treated:
        if (!treated.empty()) throw DataError("more than one treated unit");
        treated = unit;
        break;
      case Role::donor: donors.push_back(unit); break;
      case Role::proxy: proxies.push_back(unit); break;
      case Role::excluded: break;
    }
  }
  if (treated.empty()) throw DataError("no treated unit in roles");
  if (donors.empty()) throw DataError("no donor units in roles");

  const auto T = static_cast<Eigen::Index>(time_index.size());
  auto outcome_column = [&](const std::string& unit) {
    Eigen::VectorXd col(T);
    const auto& by_time = cells.at(unit);
    for (Eigen::Index i = 0; i < T; ++i) {
      auto t = time_index[static_cast<std::size_t>(i)];
      auto it = by_time.find(t);
      if (it == by_time.end() || !it->second.outcome)
        throw DataError("missing outcome for unit '" + unit + "' at time " + std::to_string(t));
      col(i) = *it->second.outcome;
    }
    return col;
  };

  PanelDataset d;
  d.time_index = time_index;
  d.t0 = t0;
  d.treated_label = treated;
  d.donor_labels = donors;
  d.proxy_labels = proxies;
  d.y = outcome_column(treated);
  d.donors.resize(T, static_cast<Eigen::Index>(donors.size()));
  for (std::size_t j = 0; j < donors.size(); ++j) d.donors.col(static_cast<Eigen::Index>(j)) = outcome_column(donors[j]);
  d.proxies.resize(T, static_cast<Eigen::Index>(proxies.size()));
  for (std::size_t j = 0; j < proxies.size(); ++j) d.proxies.col(static_cast<Eigen::Index>(j)) = outcome_column(proxies[j]);

  std::vector<std::pair<std::string, Role>> owners{{treated, Role::treated}};
  for (const auto& u : donors) owners.emplace_back(u, Role::donor);
  for (const auto& u : proxies) owners.emplace_back(u, Role::proxy);

  d.covariates.resize(T, static_cast<Eigen::Index>(owners.size() * cov_cols.size()));
  Eigen::Index col = 0;
  for (const auto& [unit, role] : owners) {
    const auto& by_time = cells.at(unit);
    for (std::size_t k = 0; k < cov_cols.size(); ++k, ++col) {
      std::optional<double> last;
      for (Eigen::Index i = 0; i < T; ++i) {
        auto t = time_index[static_cast<std::size_t>(i)];
        auto it = by_time.find(t);
        if (it != by_time.end() && it->second.covs[k]) last = it->second.covs[k];
        if (!last)
          throw DataError("leading missing covariate '" + cov_names[k] + "' for unit '" + unit + "' at time " +
                          std::to_string(t) + ": nothing to carry forward");
        d.covariates(i, col) = *last;
      }
      d.covariate_columns.push_back({unit, cov_names[k], role});
    }
  }

  d.validate();
  return d;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\t\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

}  // namespace

void export_long(const PanelDataset& d, std::ostream& out) {
  std::vector<std::string> cov_names;
  for (const auto& c : d.covariate_columns)
    if (std::find(cov_names.begin(), cov_names.end(), c.name) == cov_names.end()) cov_names.push_back(c.name);

  out << "unit,time,outcome";
  for (const auto& n : cov_names) out << ',' << n;
  out << '\n';

  auto write_unit = [&](const std::string& unit, const Eigen::VectorXd& outcome) {
    for (Eigen::Index i = 0; i < d.n_periods(); ++i) {
      out << csv_field(unit) << ',' << d.time_index[static_cast<std::size_t>(i)] << ',' << format_double(outcome(i));
      for (const auto& n : cov_names) {
        out << ',';
        for (std::size_t j = 0; j < d.covariate_columns.size(); ++j)
          if (d.covariate_columns[j].unit == unit && d.covariate_columns[j].name == n)
            out << format_double(d.covariates(i, static_cast<Eigen::Index>(j)));
      }
      out << '\n';
    }
  };
  write_unit(d.treated_label, d.y);
  for (Eigen::Index j = 0; j < d.n_donors(); ++j) write_unit(d.donor_labels[static_cast<std::size_t>(j)], d.donors.col(j));
  for (Eigen::Index j = 0; j < d.n_proxies(); ++j) write_unit(d.proxy_labels[static_cast<std::size_t>(j)], d.proxies.col(j));
}

void wide_to_long(std::istream& in, std::ostream& out) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("wide file is empty");
  const char delim = detect_delimiter(line);
  const auto header = split_fields(line, delim);
  if (header.size() < 2) throw DataError("wide file needs a time column and at least one unit column");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_fields(line, delim);
    f.resize(header.size());
    rows.push_back(std::move(f));
  }
  out << "unit,time,outcome\n";
  for (std::size_t u = 1; u < header.size(); ++u)
    for (const auto& r : rows) out << header[u] << ',' << r[0] << ',' << (is_missing(r[u]) ? "NA" : r[u]) << '\n';
}

}  // namespace pisc
