#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "panelamm/amm.hpp"
#include "panelamm/report.hpp"

namespace panelamm {

// Estimates of one base-spec term in one period.
struct PeriodTerm {
  std::string base;  // term name without the period suffix
  std::string name;  // fitted term name, e.g. "s(x):pre"
  Period period = Period::pre;
  TermKind kind = TermKind::linear;
  double edf = 0.0;
  TermTest test;
  Eigen::VectorXd estimates;  // coefficients of the term's columns
  Eigen::VectorXd se;
};

struct VaryingCoefFit {
  int break_year = 0;
  Index pre_rows = 0;
  Index post_rows = 0;
  int pre_years = 0;
  int post_years = 0;
  FittedAMM fit;
  std::vector<PeriodTerm> terms;  // pre then post for each base term
  std::vector<std::string> annotations;  // includes terms dropped for lack of variation

  const PeriodTerm& term(const std::string& base, Period period) const;  // LookupError
  // term, period, kind, edf, statistic, df, p_value, code, estimates
  Table table() const;
  nlohmann::json to_json() const;
};

// Refits `winner` with every linear, smooth, interaction and tensor term split
// into a pre (year <= break_year) and post copy. Unit effects, variance
// structure and all other settings are those of `winner`.
// PreconditionError if either period is empty.
VaryingCoefFit fit_varying_coefficients(const ModelSpec& winner, const PanelDataset& panel, int break_year,
                                        const FitSettings& settings = {});

}  // namespace panelamm
