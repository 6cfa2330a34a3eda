#pragma once

#include <optional>
#include <string>

#include "panelamm/amm.hpp"
#include "panelamm/caic.hpp"
#include "panelamm/report.hpp"
#include "panelamm/selection.hpp"

namespace panelamm {

// One row per model term: kind, period, columns, EDF and Wald test.
Table term_table(const FittedAMM& fit);

Table curve_table(const EffectCurve& curve);
Table surface_table(const EffectSurface& surface);

// Adds <prefix>fit_summary.json, <prefix>terms.csv, one
// <prefix>curves/<term>.csv per smooth and <prefix>surfaces/<term>.csv per
// tensor term.
void add_fit_report(ReportBundle& bundle, const FittedAMM& fit, const CaicReport& caic,
                    const std::optional<MundlakResult>& mundlak = std::nullopt, const std::string& prefix = "",
                    Index curve_points = 100, Index surface_points = 25);

// selection.csv and audit.json.
void add_selection_report(ReportBundle& bundle, const SelectionOutcome& outcome, const std::string& prefix = "");

}  // namespace panelamm
