#include "panelamm/transforms.hpp"

#include <cmath>
#include <limits>

namespace panelamm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::log_shift: return "log_shift";
    case TransformKind::growth_rate: return "growth_rate";
    case TransformKind::rolling_geometric_mean: return "rolling_geometric_mean";
    case TransformKind::hp_gap: return "hp_gap";
  }
  return "log_shift";
}

// Row indices of each unit, in time order.
std::vector<std::vector<Eigen::Index>> rows_by_unit(const PanelDataset& panel) {
  std::vector<std::vector<Eigen::Index>> out(panel.units.size());
  for (Eigen::Index r = 0; r < panel.rows(); ++r) out[panel.unit_of_row[r]].push_back(r);
  return out;
}

PanelDataset drop_leading_years(const PanelDataset& panel, std::size_t count) {
  if (count == 0) return panel;
  if (count >= panel.years.size())
    throw LengthError("derived series leaves no time points");
  const int cutoff = panel.years[count];
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < panel.rows(); ++r)
    if (panel.year_of_row[r] >= cutoff) keep.push_back(r);
  return select_rows(panel, keep);
}

}  // namespace

Eigen::VectorXd log_shift(const Eigen::VectorXd& series, double shift) {
  Eigen::VectorXd out(series.size());
  for (Eigen::Index i = 0; i < series.size(); ++i) {
    const double v = series(i);
    if (std::isnan(v)) {
      out(i) = kNaN;
      continue;
    }
    if (!(v + shift >= 1.0))
      throw DomainError("log_shift: value " + format_double(v) + " + shift " +
                        format_double(shift) + " is below 1");
    out(i) = std::log(v + shift);
  }
  return out;
}

TransformRecipe TransformRecipe::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("transform recipe must be an object");
  TransformRecipe r;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "log_shift") r.kind = TransformKind::log_shift;
    else if (kind == "growth_rate") r.kind = TransformKind::growth_rate;
    else if (kind == "rolling_geometric_mean") r.kind = TransformKind::rolling_geometric_mean;
    else if (kind == "hp_gap") r.kind = TransformKind::hp_gap;
    else throw ConfigError("unknown transform kind '" + kind + "'");
    r.source_column = j.at("source").get<std::string>();
    r.target_column = j.at("target").get<std::string>();
    for (const auto& [key, value] : j.items()) {
      if (key == "kind" || key == "source" || key == "target") continue;
      if (key == "shift") r.shift = value.get<double>();
      else if (key == "window") r.window = value.get<int>();
      else if (key == "lambda") r.lambda = value.get<double>();
      else throw ConfigError("unknown transform key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed transform recipe: ") + e.what());
  }
  r.validate();
  return r;
}

nlohmann::json TransformRecipe::to_json() const {
  nlohmann::json j = {{"kind", kind_name(kind)}, {"source", source_column}, {"target", target_column}};
  switch (kind) {
    case TransformKind::log_shift: j["shift"] = shift; break;
    case TransformKind::rolling_geometric_mean: j["window"] = window; break;
    case TransformKind::hp_gap: j["lambda"] = lambda; break;
    case TransformKind::growth_rate: break;
  }
  return j;
}

void TransformRecipe::validate() const {
  if (source_column.empty() || target_column.empty())
    throw ConfigError("transform needs source and target columns");
  if (window < 1) throw ConfigError("rolling window must be at least 1");
  if (!(lambda >= 0.0)) throw ConfigError("HP smoothing constant must be non-negative");
  if (!std::isfinite(shift)) throw ConfigError("log shift must be finite");
}

std::vector<TransformRecipe> parse_recipes(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    if (!j.contains("transforms")) throw ConfigError("recipe file needs a 'transforms' array");
    list = &j.at("transforms");
  }
  if (!list->is_array()) throw ConfigError("transforms must be an array");
  std::vector<TransformRecipe> out;
  for (const auto& r : *list) out.push_back(TransformRecipe::from_json(r));
  return out;
}

PanelDataset derive_series(const TransformRecipe& recipe, const PanelDataset& panel) {
  recipe.validate();
  if (panel.has_column(recipe.target_column) || recipe.target_column == panel.response_name ||
      recipe.target_column == panel.unit_column || recipe.target_column == panel.time_column)
    throw ConfigError("transform target '" + recipe.target_column + "' already exists");
  const Eigen::VectorXd x = panel.numeric(recipe.source_column);
  const auto groups = rows_by_unit(panel);
  const std::size_t n_years = panel.years.size();

  Eigen::VectorXd out = Eigen::VectorXd::Constant(panel.rows(), kNaN);
  std::size_t drop = 0;
  std::size_t flagged = 0;
  switch (recipe.kind) {
    case TransformKind::log_shift:
      out = log_shift(x, recipe.shift);
      break;
    case TransformKind::growth_rate:
      if (n_years < 2) throw LengthError("growth rate needs at least 2 time points");
      drop = 1;
      for (const auto& rows : groups)
        for (std::size_t t = 1; t < rows.size(); ++t) {
          const double prev = x(rows[t - 1]);
          const double v = 100.0 * (x(rows[t]) - prev) / prev;
          if (!std::isfinite(v) && !std::isnan(x(rows[t])) && !std::isnan(prev)) ++flagged;
          out(rows[t]) = std::isfinite(v) ? v : kNaN;
        }
      break;
    case TransformKind::rolling_geometric_mean: {
      const std::size_t w = static_cast<std::size_t>(recipe.window);
      if (w > n_years)
        throw LengthError("rolling window " + std::to_string(w) + " exceeds series length " +
                          std::to_string(n_years));
      drop = w - 1;
      for (const auto& rows : groups)
        for (std::size_t t = w - 1; t < rows.size(); ++t) {
          double log_sum = 0.0;
          bool ok = true;
          for (std::size_t s = 0; s < w; ++s) {
            const double factor = 1.0 + x(rows[t - s]) / 100.0;
            if (!(factor > 0.0)) ok = false;
            else log_sum += std::log(factor);
          }
          if (ok) {
            out(rows[t]) = 100.0 * std::expm1(log_sum / static_cast<double>(w));
          } else {
            ++flagged;
          }
        }
      break;
    }
    case TransformKind::hp_gap:
      for (const auto& rows : groups) {
        Eigen::VectorXd series(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) series(t) = x(rows[t]);
        const auto hp = hp_gap(series, recipe.lambda);
        for (std::size_t t = 0; t < rows.size(); ++t) out(rows[t]) = hp.gap(t);
      }
      break;
  }

  PanelDataset result = panel;
  Covariate c;
  c.name = recipe.target_column;
  c.values = out;
  result.covariates.push_back(std::move(c));
  if (flagged > 0)
    result.annotations.push_back("transform '" + recipe.target_column + "': " +
                                 std::to_string(flagged) + " non-finite values set missing");
  return drop_leading_years(result, drop);
}

PanelDataset apply_recipes(const std::vector<TransformRecipe>& recipes, PanelDataset panel) {
  for (const auto& r : recipes) panel = derive_series(r, panel);
  return panel;
}

}  // namespace panelamm
