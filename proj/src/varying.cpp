#include "panelamm/varying.hpp"

#include <algorithm>
#include <cmath>

namespace panelamm {

namespace {

std::string base_name(const std::string& name) {
  for (const char* suffix : {":pre", ":post"}) {
    const std::string s = suffix;
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0)
      return name.substr(0, name.size() - s.size());
  }
  return name;
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : ""; }

}  // namespace

const PeriodTerm& VaryingCoefFit::term(const std::string& base, Period period) const {
  for (const auto& t : terms)
    if (t.base == base && t.period == period) return t;
  throw LookupError("no " + std::string(period == Period::pre ? "pre" : "post") + "-period term '" + base + "'");
}

Table VaryingCoefFit::table() const {
  Table t;
  t.header = {"term", "period", "kind", "edf", "statistic", "df", "p_value", "code", "estimates"};
  for (const auto& p : terms) {
    std::string est;
    for (Index i = 0; i < p.estimates.size(); ++i) est += (i ? ";" : "") + format_double(p.estimates(i));
    t.add_row({p.base, p.period == Period::pre ? "pre" : "post", to_string(p.kind), cell(p.edf),
               cell(p.test.statistic), cell(p.test.df), cell(p.test.p_value), p.test.code, est});
  }
  return t;
}

nlohmann::json VaryingCoefFit::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& p : terms)
    ts.push_back({{"term", p.base},
                  {"period", p.period == Period::pre ? "pre" : "post"},
                  {"kind", to_string(p.kind)},
                  {"edf", p.edf},
                  {"statistic", p.test.statistic},
                  {"df", p.test.df},
                  {"p_value", p.test.p_value},
                  {"estimates", std::vector<double>(p.estimates.data(), p.estimates.data() + p.estimates.size())},
                  {"se", std::vector<double>(p.se.data(), p.se.data() + p.se.size())}});
  return {{"break_year", break_year}, {"pre_rows", pre_rows},   {"post_rows", post_rows},
          {"pre_years", pre_years},   {"post_years", post_years}, {"terms", ts},
          {"annotations", annotations}, {"fit", fit.summary()}};
}

VaryingCoefFit fit_varying_coefficients(const ModelSpec& winner, const PanelDataset& panel, int break_year,
                                        const FitSettings& settings) {
  ModelSpec spec = winner;
  spec.break_year = break_year;

  VaryingCoefFit out;
  out.break_year = break_year;
  out.pre_years = static_cast<int>(std::count_if(panel.years.begin(), panel.years.end(),
                                                 [&](int y) { return y <= break_year; }));
  out.post_years = static_cast<int>(panel.years.size()) - out.pre_years;
  if (out.pre_years == 0 || out.post_years == 0)
    throw PreconditionError("break year " + std::to_string(break_year) + " leaves an empty period");
  out.pre_rows = static_cast<Index>(std::count_if(panel.year_of_row.begin(), panel.year_of_row.end(),
                                                  [&](int y) { return y <= break_year; }));
  out.post_rows = panel.rows() - out.pre_rows;

  out.fit = fit_model(panel, spec, settings);
  out.annotations = out.fit.design.annotations;
  for (const auto& t : out.fit.design.terms) {
    if (t.period == Period::all) continue;
    PeriodTerm p;
    p.base = base_name(t.name);
    p.name = t.name;
    p.period = t.period;
    p.kind = t.kind;
    for (const auto& e : out.fit.edf)
      if (e.term == t.name) p.edf = e.edf;
    p.test = term_significance(out.fit, t.name);
    p.estimates = out.fit.coefficients.segment(t.first, t.cols);
    p.se = out.fit.covariance.diagonal().segment(t.first, t.cols).cwiseMax(0.0).cwiseSqrt();
    out.terms.push_back(std::move(p));
  }
  return out;
}

}  // namespace panelamm
