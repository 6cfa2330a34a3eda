#include "panelamm/panel.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace panelamm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ColumnRole parse_role(const std::string& s) {
  if (s == "unit") return ColumnRole::unit;
  if (s == "time") return ColumnRole::time;
  if (s == "response") return ColumnRole::response;
  if (s == "numeric") return ColumnRole::numeric;
  if (s == "categorical") return ColumnRole::categorical;
  throw SchemaError("unknown column role '" + s + "'");
}

const char* role_name(ColumnRole r) {
  switch (r) {
    case ColumnRole::unit: return "unit";
    case ColumnRole::time: return "time";
    case ColumnRole::response: return "response";
    case ColumnRole::numeric: return "numeric";
    case ColumnRole::categorical: return "categorical";
  }
  return "numeric";
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

// Strict decimal parse: the whole token must be consumed and finite.
bool parse_number(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_int(const std::string& tok, int& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

PanelSchema PanelSchema::from_json(const nlohmann::json& j) {
  const nlohmann::json* cols = &j;
  if (j.is_object()) {
    if (!j.contains("columns")) throw SchemaError("schema needs a 'columns' array");
    cols = &j.at("columns");
  }
  if (!cols->is_array()) throw SchemaError("schema columns must be an array");
  PanelSchema schema;
  std::set<std::string> seen;
  for (const auto& c : *cols) {
    if (!c.is_object() || !c.contains("column") || !c.contains("role"))
      throw SchemaError("schema entries need 'column' and 'role'");
    ColumnSchema cs;
    cs.column = c.at("column").get<std::string>();
    cs.role = parse_role(c.at("role").get<std::string>());
    if (c.contains("levels")) {
      if (cs.role != ColumnRole::categorical)
        throw SchemaError("levels declared on non-categorical column '" + cs.column + "'");
      cs.levels = c.at("levels").get<std::vector<std::string>>();
    }
    if (cs.role == ColumnRole::categorical && cs.levels.empty())
      throw SchemaError("categorical column '" + cs.column + "' declares no levels");
    if (!seen.insert(cs.column).second)
      throw SchemaError("column '" + cs.column + "' declared twice");
    schema.columns.push_back(std::move(cs));
  }
  for (ColumnRole r : {ColumnRole::unit, ColumnRole::time, ColumnRole::response}) {
    const auto n = std::count_if(schema.columns.begin(), schema.columns.end(),
                                 [r](const ColumnSchema& c) { return c.role == r; });
    if (n != 1)
      throw SchemaError(std::string("schema must declare exactly one '") + role_name(r) +
                        "' column");
  }
  return schema;
}

nlohmann::json PanelSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json e = {{"column", c.column}, {"role", role_name(c.role)}};
    if (c.role == ColumnRole::categorical) e["levels"] = c.levels;
    cols.push_back(e);
  }
  return {{"columns", cols}};
}

PanelSchema load_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("malformed schema JSON in " + path.string() + ": " + e.what());
  }
  return PanelSchema::from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset accessors
// ---------------------------------------------------------------------------

Eigen::Index Covariate::missing() const {
  if (categorical) return std::count(codes.begin(), codes.end(), -1);
  return (values.array() != values.array()).count();
}

const Covariate* PanelDataset::find(std::string_view name) const {
  for (const auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

const Covariate& PanelDataset::column(std::string_view name) const {
  const Covariate* c = find(name);
  if (!c) throw LookupError("panel has no column '" + std::string(name) + "'");
  return *c;
}

Eigen::VectorXd PanelDataset::numeric(std::string_view name) const {
  if (name == response_name) return response;
  const Covariate& c = column(name);
  if (c.categorical) throw LookupError("column '" + std::string(name) + "' is categorical");
  return c.values;
}

Eigen::VectorXd PanelDataset::time_index() const {
  Eigen::VectorXd t(rows());
  const int y0 = first_year();
  for (Eigen::Index r = 0; r < rows(); ++r) t(r) = year_of_row[r] - y0;
  return t;
}

std::map<std::string, Eigen::Index> PanelDataset::missing_counts() const {
  std::map<std::string, Eigen::Index> out;
  out[response_name] = (response.array() != response.array()).count();
  for (const auto& c : covariates) out[c.name] = c.missing();
  return out;
}

PanelSchema PanelDataset::schema() const {
  PanelSchema s;
  s.columns.push_back({unit_column, ColumnRole::unit, {}});
  s.columns.push_back({time_column, ColumnRole::time, {}});
  s.columns.push_back({response_name, ColumnRole::response, {}});
  for (const auto& c : covariates)
    s.columns.push_back({c.name, c.categorical ? ColumnRole::categorical : ColumnRole::numeric,
                         c.categorical ? c.levels : std::vector<std::string>{}});
  return s;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_started = false;
  char c;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted CSV field", static_cast<long>(rows.size()));
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

PanelDataset load_panel(std::istream& source, const PanelSchema& schema) {
  auto table = read_csv(source);
  if (table.empty()) throw ParseError("CSV input has no header row", 0);
  const auto header = [&] {
    std::vector<std::string> h;
    for (auto& s : table.front()) h.push_back(trim(s));
    return h;
  }();
  auto locate = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("declared column '" + name + "' missing from CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };

  PanelDataset panel;
  std::size_t unit_col = 0, time_col = 0, resp_col = 0;
  std::vector<std::pair<std::size_t, const ColumnSchema*>> cov_cols;
  for (const auto& cs : schema.columns) {
    const std::size_t idx = locate(cs.column);
    switch (cs.role) {
      case ColumnRole::unit: unit_col = idx; panel.unit_column = cs.column; break;
      case ColumnRole::time: time_col = idx; panel.time_column = cs.column; break;
      case ColumnRole::response: resp_col = idx; panel.response_name = cs.column; break;
      default: cov_cols.emplace_back(idx, &cs);
    }
  }

  // Parse raw records first, then sort by (unit, time).
  struct Record {
    std::string unit;
    int year;
    long line;
    std::size_t src;
  };
  std::vector<Record> records;
  const std::size_t n_in = table.size() - 1;
  records.reserve(n_in);
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    const long line = static_cast<long>(r);
    if (row.size() != header.size())
      throw ParseError("row " + std::to_string(line) + " has " + std::to_string(row.size()) +
                       " fields, header has " + std::to_string(header.size()), line);
    Record rec{trim(row[unit_col]), 0, line, r};
    if (rec.unit.empty()) throw ParseError("empty unit label at row " + std::to_string(line), line);
    if (!parse_int(trim(row[time_col]), rec.year))
      throw ParseError("non-integer time value '" + row[time_col] + "' at row " +
                       std::to_string(line), line);
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    return a.unit != b.unit ? a.unit < b.unit : a.year < b.year;
  });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].unit == records[i - 1].unit && records[i].year == records[i - 1].year)
      throw StructuralError("duplicate observation for unit \"" + records[i].unit + "\", time " +
                            std::to_string(records[i].year));

  std::set<int> year_set;
  for (const auto& rec : records) {
    if (panel.units.empty() || panel.units.back() != rec.unit) panel.units.push_back(rec.unit);
    year_set.insert(rec.year);
  }
  panel.years.assign(year_set.begin(), year_set.end());
  if (records.size() != panel.units.size() * panel.years.size())
    throw StructuralError("panel is not rectangular: " + std::to_string(panel.units.size()) +
                          " units x " + std::to_string(panel.years.size()) + " time points but " +
                          std::to_string(records.size()) + " rows");

  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  panel.response.resize(n);
  panel.unit_of_row.resize(n);
  panel.year_of_row.resize(n);
  for (const auto& [idx, cs] : cov_cols) {
    Covariate c;
    c.name = cs->column;
    c.categorical = cs->role == ColumnRole::categorical;
    if (c.categorical) {
      c.levels = cs->levels;
      c.codes.assign(n, -1);
    } else {
      c.values = Eigen::VectorXd::Constant(n, kNaN);
    }
    panel.covariates.push_back(std::move(c));
  }

  int unit_idx = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Record& rec = records[i];
    if (i == 0 || records[i - 1].unit != rec.unit) ++unit_idx;
    panel.unit_of_row[i] = unit_idx;
    panel.year_of_row[i] = rec.year;
    const auto& row = table[rec.src];
    const std::string resp = trim(row[resp_col]);
    if (resp.empty())
      throw ParseError("missing response at row " + std::to_string(rec.line) + " (rows with a "
                       "missing response are rejected)", rec.line);
    if (!parse_number(resp, panel.response(i)))
      throw ParseError("non-numeric response '" + resp + "' at row " + std::to_string(rec.line),
                       rec.line);
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      Covariate& cov = panel.covariates[c];
      const std::string tok = trim(row[cov_cols[c].first]);
      if (tok.empty()) continue;
      if (cov.categorical) {
        auto it = std::find(cov.levels.begin(), cov.levels.end(), tok);
        if (it == cov.levels.end())
          throw SchemaError("undeclared level '" + tok + "' in column '" + cov.name +
                            "' at row " + std::to_string(rec.line));
        cov.codes[i] = static_cast<int>(it - cov.levels.begin());
      } else if (!parse_number(tok, cov.values(i))) {
        throw ParseError("non-numeric token '" + tok + "' in column '" + cov.name + "' at row " +
                         std::to_string(rec.line), rec.line);
      }
    }
  }
  for (const auto& [name, count] : panel.missing_counts())
    if (count > 0)
      panel.annotations.push_back("column '" + name + "' has " + std::to_string(count) +
                                  " missing values");
  return panel;
}

PanelDataset load_panel_file(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open panel file " + path.string());
  return load_panel(in, schema);
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel) {
  out << quote_if_needed(panel.unit_column) << ',' << quote_if_needed(panel.time_column) << ','
      << quote_if_needed(panel.response_name);
  for (const auto& c : panel.covariates) out << ',' << quote_if_needed(c.name);
  out << '\n';
  for (Eigen::Index i = 0; i < panel.rows(); ++i) {
    out << quote_if_needed(panel.units[panel.unit_of_row[i]]) << ',' << panel.year_of_row[i]
        << ',' << format_double(panel.response(i));
    for (const auto& c : panel.covariates) {
      out << ',';
      if (c.categorical) {
        if (c.codes[i] >= 0) out << quote_if_needed(c.levels[c.codes[i]]);
      } else {
        out << format_double(c.values(i));
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subsets
// ---------------------------------------------------------------------------

std::string SubsampleFilter::id() const {
  if (empty()) return "full";
  std::ostringstream os;
  if (!units.empty()) {
    os << "units:";
    for (std::size_t i = 0; i < units.size(); ++i) os << (i ? "+" : "") << units[i];
  }
  if (first_year || last_year) {
    if (!units.empty()) os << ";";
    os << "years:" << (first_year ? std::to_string(*first_year) : "") << "-"
       << (last_year ? std::to_string(*last_year) : "");
  }
  return os.str();
}

SubsampleFilter SubsampleFilter::from_json(const nlohmann::json& j) {
  SubsampleFilter f;
  if (j.is_null()) return f;
  if (!j.is_object()) throw ConfigError("subsample filter must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "units" || key == "countries") {
      f.units = value.get<std::vector<std::string>>();
    } else if (key == "years") {
      const auto yr = value.get<std::vector<int>>();
      if (yr.size() != 2) throw ConfigError("subsample 'years' must be [first, last]");
      f.first_year = yr[0];
      f.last_year = yr[1];
    } else {
      throw ConfigError("unknown subsample key '" + key + "'");
    }
  }
  return f;
}

nlohmann::json SubsampleFilter::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (!units.empty()) j["units"] = units;
  if (first_year || last_year)
    j["years"] = {first_year.value_or(std::numeric_limits<int>::min()),
                  last_year.value_or(std::numeric_limits<int>::max())};
  return j;
}

PanelDataset select_rows(const PanelDataset& panel, const std::vector<Eigen::Index>& rows) {
  PanelDataset out;
  out.unit_column = panel.unit_column;
  out.time_column = panel.time_column;
  out.response_name = panel.response_name;
  out.annotations = panel.annotations;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  out.response.resize(n);
  std::vector<int> unit_map(panel.units.size(), -1);
  std::set<int> years;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[i];
    const int u = panel.unit_of_row[r];
    if (unit_map[u] < 0) {
      unit_map[u] = static_cast<int>(out.units.size());
      out.units.push_back(panel.units[u]);
    }
    out.unit_of_row.push_back(unit_map[u]);
    out.year_of_row.push_back(panel.year_of_row[r]);
    out.response(i) = panel.response(r);
    years.insert(panel.year_of_row[r]);
  }
  out.years.assign(years.begin(), years.end());
  if (out.units.empty()) throw PreconditionError("row selection is empty");
  if (static_cast<std::size_t>(n) != out.units.size() * out.years.size())
    throw StructuralError("row selection is not rectangular");
  for (const auto& c : panel.covariates) {
    Covariate nc;
    nc.name = c.name;
    nc.categorical = c.categorical;
    nc.levels = c.levels;
    if (c.categorical) {
      nc.codes.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) nc.codes[i] = c.codes[rows[i]];
    } else {
      nc.values.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) nc.values(i) = c.values(rows[i]);
    }
    out.covariates.push_back(std::move(nc));
  }
  return out;
}

PanelDataset subsample(const PanelDataset& panel, const SubsampleFilter& filter) {
  if (filter.empty()) return panel;
  std::set<std::string> keep(filter.units.begin(), filter.units.end());
  for (const auto& u : keep)
    if (std::find(panel.units.begin(), panel.units.end(), u) == panel.units.end())
      throw LookupError("subsample names unknown unit '" + u + "'");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < panel.rows(); ++r) {
    const int year = panel.year_of_row[r];
    if (!keep.empty() && !keep.count(panel.units[panel.unit_of_row[r]])) continue;
    if (filter.first_year && year < *filter.first_year) continue;
    if (filter.last_year && year > *filter.last_year) continue;
    rows.push_back(r);
  }
  if (rows.empty()) throw PreconditionError("subsample '" + filter.id() + "' selects no rows");
  return select_rows(panel, rows);
}

}  // namespace panelamm
