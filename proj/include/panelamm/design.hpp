#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "panelamm/model_spec.hpp"
#include "panelamm/panel.hpp"
#include "panelamm/spline.hpp"

namespace panelamm {

enum class TermKind { intercept, linear, mundlak_mean, smooth, tensor, unit_fixed, unit_random };
enum class Period { all, pre, post };

std::string to_string(TermKind k);

// One factor of a linear column: a numeric column (level < 0) or the
// indicator of one categorical level.
struct LinearFactor {
  std::string column;
  int level = -1;
};

// A linear design column is the product of its factors.
struct LinearColumn {
  std::string name;
  std::vector<LinearFactor> factors;
};

struct TermDesign {
  std::string name;
  TermKind kind = TermKind::linear;
  Period period = Period::all;
  Index first = 0;  // first model column
  Index cols = 0;
  std::vector<Eigen::MatrixXd> penalties;  // cols x cols, empty when unpenalized
  std::vector<LinearColumn> linear;        // linear and mundlak_mean terms
  std::optional<BasisBlock<double>> basis;
  std::optional<TensorBlock<double>> tensor;
  std::vector<std::string> source;  // columns read by a smooth or tensor
  std::vector<Eigen::VectorXd> observed;  // source values on the term's rows
  int null_dim = 0;                 // penalty null space dimension

  bool penalized() const { return !penalties.empty() || kind == TermKind::unit_random; }
};

// Model matrix and bookkeeping for one spec on one panel. Column order:
// intercept, linear terms, Mundlak averages, smooths, tensors, unit part.
struct DesignBundle {
  ModelSpec spec;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd t;  // year - first year
  std::vector<int> unit_of_row;
  std::vector<int> year_of_row;
  std::vector<std::string> units;
  int first_year = 0;
  std::vector<TermDesign> terms;
  std::vector<std::string> annotations;

  Index rows() const { return X.rows(); }
  Index cols() const { return X.cols(); }
  Index n_units() const { return static_cast<Index>(units.size()); }
  const TermDesign* find_term(const std::string& name) const;
  const TermDesign& term(const std::string& name) const;  // LookupError
  const TermDesign* unit_term() const;

  // Number of averaged-regressor columns appended for the Mundlak device.
  Index mundlak_columns() const;
};

// Values of a numeric column; the time column maps to t = year - first year.
Eigen::VectorXd column_values(const PanelDataset& panel, const std::string& name);

DesignBundle build_design(const PanelDataset& panel, const ModelSpec& spec);

// Design rows of `design` evaluated on other data. Unit columns are filled
// for units seen in training when `with_units` is set, else zero.
Eigen::MatrixXd design_rows(const DesignBundle& design, const PanelDataset& data, bool with_units);

}  // namespace panelamm
