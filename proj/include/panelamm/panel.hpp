#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "panelamm/errors.hpp"

namespace panelamm {

enum class ColumnRole { unit, time, response, numeric, categorical };

struct ColumnSchema {
  std::string column;
  ColumnRole role = ColumnRole::numeric;
  std::vector<std::string> levels;  // categorical only
};

// Column-role declarations for a CSV file. JSON form:
//   {"columns": [{"column": "gdp", "role": "numeric"},
//                {"column": "era", "role": "categorical", "levels": ["a","b"]}]}
// A bare array of column objects is accepted as well.
struct PanelSchema {
  std::vector<ColumnSchema> columns;

  static PanelSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

PanelSchema load_schema_file(const std::filesystem::path& path);

// One covariate column. Missing cells are NaN (numeric) or code -1
// (categorical).
struct Covariate {
  std::string name;
  bool categorical = false;
  Eigen::VectorXd values;
  std::vector<std::string> levels;
  std::vector<int> codes;

  Eigen::Index missing() const;
  bool complete() const { return missing() == 0; }
};

// Rectangular unit x time panel, rows sorted by (unit label, year).
struct PanelDataset {
  std::string unit_column = "unit";
  std::string time_column = "year";
  std::string response_name = "y";

  std::vector<std::string> units;  // sorted labels
  std::vector<int> years;          // sorted time points
  std::vector<int> unit_of_row;    // index into units
  std::vector<int> year_of_row;    // calendar time point
  Eigen::VectorXd response;
  std::vector<Covariate> covariates;
  std::vector<std::string> annotations;

  Eigen::Index rows() const { return response.size(); }
  Eigen::Index n_units() const { return static_cast<Eigen::Index>(units.size()); }
  int first_year() const { return years.front(); }

  const Covariate* find(std::string_view name) const;
  const Covariate& column(std::string_view name) const;  // LookupError
  bool has_column(std::string_view name) const { return find(name) != nullptr; }

  // Numeric view of a covariate or of the response; LookupError if absent.
  Eigen::VectorXd numeric(std::string_view name) const;

  // t = year - first_year, as a real column.
  Eigen::VectorXd time_index() const;

  // Per-column missing counts, response first.
  std::map<std::string, Eigen::Index> missing_counts() const;

  PanelSchema schema() const;
};

PanelDataset load_panel(std::istream& source, const PanelSchema& schema);
PanelDataset load_panel_file(const std::filesystem::path& path, const PanelSchema& schema);

// Writes unit, time, response and covariates in load order with
// round-trip precision; missing cells are written empty.
void write_panel_csv(std::ostream& out, const PanelDataset& panel);

// Keeps the given units (all when empty) and years in [first, last].
struct SubsampleFilter {
  std::vector<std::string> units;
  std::optional<int> first_year;
  std::optional<int> last_year;

  bool empty() const { return units.empty() && !first_year && !last_year; }
  std::string id() const;
  static SubsampleFilter from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

PanelDataset subsample(const PanelDataset& panel, const SubsampleFilter& filter);

// Keeps only the listed rows (sorted ascending); the result must stay
// rectangular.
PanelDataset select_rows(const PanelDataset& panel, const std::vector<Eigen::Index>& rows);

// Small CSV reader shared by the loader and the report tools. Handles
// double-quoted fields with "" escapes.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

std::string format_double(double v);

}  // namespace panelamm
