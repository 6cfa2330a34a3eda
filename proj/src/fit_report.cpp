#include "panelamm/fit_report.hpp"

#include <cmath>

namespace panelamm {

namespace {

std::string cell(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

const char* period_name(Period p) {
  switch (p) {
    case Period::pre: return "pre";
    case Period::post: return "post";
    case Period::all: return "all";
  }
  return "all";
}

bool testable(TermKind k) { return k != TermKind::unit_fixed && k != TermKind::unit_random; }

}  // namespace

Table term_table(const FittedAMM& fit) {
  Table t;
  t.header = {"term", "kind", "period", "columns", "edf", "statistic", "df", "p_value", "code"};
  for (const auto& term : fit.design.terms) {
    double edf = std::numeric_limits<double>::quiet_NaN();
    for (const auto& e : fit.edf)
      if (e.term == term.name) edf = e.edf;
    std::vector<std::string> row = {term.name, to_string(term.kind), period_name(term.period),
                                    std::to_string(term.cols), cell(edf)};
    if (testable(term.kind)) {
      const TermTest test = term_significance(fit, term.name);
      row.insert(row.end(), {cell(test.statistic), cell(test.df), cell(test.p_value), test.code});
    } else {
      row.insert(row.end(), {"", "", "", ""});
    }
    t.add_row(std::move(row));
  }
  return t;
}

Table curve_table(const EffectCurve& curve) {
  Table t;
  t.header = {"x", "effect", "se", "lower", "upper"};
  for (Index i = 0; i < curve.grid.size(); ++i)
    t.add_row({cell(curve.grid(i)), cell(curve.effect(i)), cell(curve.se(i)), cell(curve.lower(i)),
               cell(curve.upper(i))});
  return t;
}

Table surface_table(const EffectSurface& surface) {
  Table t;
  t.header = {"x", "z", "effect", "se"};
  for (Index i = 0; i < surface.x.size(); ++i)
    t.add_row({cell(surface.x(i)), cell(surface.z(i)), cell(surface.effect(i)), cell(surface.se(i))});
  return t;
}

void add_fit_report(ReportBundle& bundle, const FittedAMM& fit, const CaicReport& caic,
                    const std::optional<MundlakResult>& mundlak, const std::string& prefix,
                    Index curve_points, Index surface_points) {
  nlohmann::json summary = fit.summary();
  summary["caic"] = caic.to_json();
  if (mundlak) summary["mundlak"] = mundlak->to_json();
  bundle.add_json(prefix + "fit_summary.json", summary);
  bundle.add_table(prefix + "terms.csv", term_table(fit));
  for (const auto& term : fit.design.terms) {
    if (term.kind == TermKind::smooth) {
      const auto curve = smooth_effect_curve(fit, term.name, support_grid(fit, term.name, curve_points));
      bundle.add_table(prefix + "curves/" + slug(term.name) + ".csv", curve_table(curve));
    } else if (term.kind == TermKind::tensor) {
      bundle.add_table(prefix + "surfaces/" + slug(term.name) + ".csv",
                       surface_table(tensor_effect_surface(fit, term.name, surface_points)));
    }
  }
}

void add_selection_report(ReportBundle& bundle, const SelectionOutcome& outcome, const std::string& prefix) {
  bundle.add_table(prefix + "selection.csv", outcome.table());
  bundle.add_json(prefix + "audit.json", outcome.audit());
}

}  // namespace panelamm
