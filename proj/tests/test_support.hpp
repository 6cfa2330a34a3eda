#pragma once

// Shared helpers for the test binaries: seeded generators, simulated panels,
// and small dense oracles that deliberately avoid the library code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "panelamm/panel.hpp"

namespace panelamm::testing {

inline Eigen::VectorXd uniform_vector(std::mt19937_64& rng, Eigen::Index n,
                                      double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Eigen::VectorXd normal_vector(std::mt19937_64& rng, Eigen::Index n,
                                     double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// Recursive Cox-de Boor definition, independent of the library's
// triangular evaluation.
inline double cox_de_boor(const Eigen::VectorXd& t, int i, int p, double x) {
  if (p == 0) return (t(i) <= x && x < t(i + 1)) ? 1.0 : 0.0;
  double a = 0.0, b = 0.0;
  const double d1 = t(i + p) - t(i);
  const double d2 = t(i + p + 1) - t(i + 1);
  if (d1 > 0) a = (x - t(i)) / d1 * cox_de_boor(t, i, p - 1, x);
  if (d2 > 0) b = (t(i + p + 1) - x) / d2 * cox_de_boor(t, i + 1, p - 1, x);
  return a + b;
}

// Penalized least squares by a dense normal-equation solve.
inline Eigen::VectorXd penalized_fit(const Eigen::MatrixXd& B, const Eigen::VectorXd& y,
                                     const Eigen::MatrixXd& P, double lambda) {
  Eigen::MatrixXd A = B.transpose() * B + lambda * P;
  Eigen::VectorXd a = A.completeOrthogonalDecomposition().solve(B.transpose() * y);
  return B * a;
}

// Column-oriented description of a simulated panel used to build CSV text.
struct SimPanel {
  std::vector<std::string> units;
  std::vector<int> years;
  Eigen::VectorXd y;
  std::vector<std::pair<std::string, Eigen::VectorXd>> numeric;
  std::vector<std::pair<std::string, std::vector<std::string>>> categorical;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(units.size() * years.size()); }
};

inline SimPanel make_grid(int n_units, int n_years, int first_year = 2000) {
  SimPanel s;
  for (int i = 0; i < n_units; ++i) {
    std::ostringstream os;
    os << "U" << (i < 10 ? "00" : (i < 100 ? "0" : "")) << i;
    s.units.push_back(os.str());
  }
  for (int t = 0; t < n_years; ++t) s.years.push_back(first_year + t);
  s.y = Eigen::VectorXd::Zero(s.rows());
  return s;
}

inline PanelSchema sim_schema(const SimPanel& s) {
  PanelSchema schema;
  schema.columns.push_back({"unit", ColumnRole::unit, {}});
  schema.columns.push_back({"year", ColumnRole::time, {}});
  schema.columns.push_back({"y", ColumnRole::response, {}});
  for (const auto& [name, v] : s.numeric) schema.columns.push_back({name, ColumnRole::numeric, {}});
  for (const auto& [name, v] : s.categorical) {
    std::vector<std::string> levels;
    for (const auto& l : v)
      if (std::find(levels.begin(), levels.end(), l) == levels.end()) levels.push_back(l);
    std::sort(levels.begin(), levels.end());
    schema.columns.push_back({name, ColumnRole::categorical, levels});
  }
  return schema;
}

inline std::string sim_csv(const SimPanel& s) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "unit,year,y";
  for (const auto& [name, v] : s.numeric) csv << "," << name;
  for (const auto& [name, v] : s.categorical) csv << "," << name;
  csv << "\n";
  Eigen::Index r = 0;
  for (const auto& u : s.units)
    for (int year : s.years) {
      csv << u << "," << year << "," << s.y(r);
      for (const auto& [name, v] : s.numeric) {
        csv << ",";
        if (!std::isnan(v(r))) csv << v(r);
      }
      for (const auto& [name, v] : s.categorical) {
        const bool quote = v[r].find_first_of(",\"") != std::string::npos;
        csv << ",";
        if (quote) {
          csv << '"';
          for (char ch : v[r]) csv << (ch == '"' ? "\"\"" : std::string(1, ch));
          csv << '"';
        } else {
          csv << v[r];
        }
      }
      csv << "\n";
      ++r;
    }
  return csv.str();
}

inline PanelDataset to_panel(const SimPanel& s) {
  std::istringstream in(sim_csv(s));
  return load_panel(in, sim_schema(s));
}

}  // namespace panelamm::testing
