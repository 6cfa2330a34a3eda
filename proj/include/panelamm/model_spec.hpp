#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "panelamm/errors.hpp"
#include "panelamm/panel.hpp"

namespace panelamm {

// random: correlated unit intercept and slope on (1, t) with covariance G.
// fixed: unit dummies times (1, t), no global intercept.
// mundlak: random plus per-unit time averages of every regressor.
// none: global intercept only, no unit part.
enum class EffectsMode { random, fixed, mundlak, none };

std::string to_string(EffectsMode m);
EffectsMode parse_effects(const std::string& s);

struct SmoothTerm {
  std::string column;
  int k = 10;
};

struct TensorTerm {
  std::string column1;
  std::string column2;
  int k1 = 5;
  int k2 = 5;
};

// JSON form:
//   {"label": "M1", "response": "y", "linear": ["a"],
//    "smooth": [{"col": "x", "k": 10}], "linear_pairs": [["a", "b"]],
//    "tensor_pairs": [{"col1": "u", "col2": "v", "k1": 5, "k2": 5}],
//    "effects": "random", "heteroscedastic": true,
//    "year_smooth": false, "break_year": 2007}
// "response" defaults to the panel response; "break_year" turns every term
// into a pair of pre/post period terms.
struct ModelSpec {
  std::string label;
  std::optional<std::string> response;
  std::vector<std::string> linear;
  std::vector<SmoothTerm> smooth;
  std::vector<std::pair<std::string, std::string>> linear_pairs;
  std::vector<TensorTerm> tensor_pairs;
  EffectsMode effects = EffectsMode::random;
  bool heteroscedastic = false;
  bool include_year_smooth = false;
  int year_smooth_k = 10;
  std::optional<int> break_year;

  static ModelSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Every column the spec reads (deduplicated, first-use order).
  std::vector<std::string> columns() const;

  // Checks term-set disjointness and column presence/types against a panel.
  void validate(const PanelDataset& panel) const;

  // Columns referenced by the spec that have missing values in the panel.
  std::vector<std::string> incomplete_columns(const PanelDataset& panel) const;
};

ModelSpec load_spec_file(const std::filesystem::path& path);

}  // namespace panelamm
