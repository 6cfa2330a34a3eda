#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <string>
#include <vector>

#include <json.hpp>

#include "panelamm/errors.hpp"
#include "panelamm/panel.hpp"

namespace panelamm {

// ln(x + shift), elementwise. Missing entries (NaN) stay missing.
Eigen::VectorXd log_shift(const Eigen::VectorXd& series, double shift);

template <typename Scalar>
struct HpResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> trend;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gap;
};

// Hodrick-Prescott filter: the trend solves (I + lambda D'D) tau = y with D
// the second-difference operator, via a sparse LDL' factorization of the
// pentadiagonal system.
template <typename Derived>
HpResult<typename Derived::Scalar> hp_gap(const Eigen::MatrixBase<Derived>& series,
                                          typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = series.size();
  if (n < 4) throw LengthError("HP filter needs at least 4 observations");
  if (!(lambda >= Scalar(0))) throw DomainError("HP smoothing constant must be non-negative");
  if (!series.allFinite()) throw DomainError("HP filter input contains missing values");

  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(5 * n);
  const Scalar stencil[3] = {Scalar(1), Scalar(-2), Scalar(1)};
  for (Eigen::Index i = 0; i < n; ++i) trips.emplace_back(i, i, Scalar(1));
  for (Eigen::Index r = 0; r + 2 < n; ++r)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trips.emplace_back(r + a, r + b, lambda * stencil[a] * stencil[b]);
  Eigen::SparseMatrix<Scalar> A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw NumericError("HP system factorization failed");
  HpResult<Scalar> out;
  const Vec y = series;
  out.trend = ldlt.solve(y);
  out.gap = y - out.trend;
  return out;
}

enum class TransformKind { log_shift, growth_rate, rolling_geometric_mean, hp_gap };

struct TransformRecipe {
  TransformKind kind = TransformKind::log_shift;
  std::string source_column;
  std::string target_column;
  double shift = 10.86;  // log_shift
  int window = 3;        // rolling_geometric_mean
  double lambda = 6.25;  // hp_gap

  static TransformRecipe from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

// Recipe file: {"transforms": [recipe, ...]} or a bare array.
std::vector<TransformRecipe> parse_recipes(const nlohmann::json& j);

// Adds recipe.target_column to the panel. Series are computed per unit.
// growth_rate drops the first time point and rolling_geometric_mean the
// first window - 1 points from every unit, keeping the grid rectangular.
PanelDataset derive_series(const TransformRecipe& recipe, const PanelDataset& panel);

PanelDataset apply_recipes(const std::vector<TransformRecipe>& recipes, PanelDataset panel);

}  // namespace panelamm
