#include "panelamm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "panelamm/stats.hpp"
#include "parallel.hpp"

namespace panelamm {

namespace {

constexpr double kTieResolution = 1e-9;
constexpr double kLrtTolerance = -1e-6;

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string cell(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

// Index of the best candidate; earliest wins ties.
std::optional<std::size_t> argbest(const std::vector<const Candidate*>& cs) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (!best || better(*cs[i], *cs[*best])) best = i;
  return best;
}

Comparison compare(const std::string& stage, const std::string& data_id,
                   const std::vector<const Candidate*>& cs) {
  Comparison c;
  c.stage = stage;
  c.data_id = data_id;
  for (const auto* x : cs) {
    c.labels.push_back(x->label);
    c.caics.push_back(x->failed() ? std::numeric_limits<double>::infinity() : x->caic.caic);
  }
  if (const auto b = argbest(cs)) c.winner = cs[*b]->failed() ? "" : cs[*b]->label;
  return c;
}

bool columns_complete(const PanelDataset& panel, const ModelSpec& spec) {
  for (const auto& c : spec.columns()) {
    if (c == panel.time_column || c == panel.response_name) continue;
    const Covariate* cov = panel.find(c);
    if (!cov || !cov->complete()) return false;
  }
  return true;
}

}  // namespace

std::string to_string(LrtLikelihood l) { return l == LrtLikelihood::marginal ? "marginal" : "conditional"; }

LrtLikelihood parse_lrt_likelihood(const std::string& s) {
  if (s == "marginal") return LrtLikelihood::marginal;
  if (s == "conditional") return LrtLikelihood::conditional;
  throw ConfigError("unknown likelihood '" + s + "' for the Mundlak test");
}

nlohmann::json MundlakResult::to_json() const {
  return {{"statistic", finite_or_null(statistic)},
          {"df", df},
          {"p_value", finite_or_null(p_value)},
          {"decision", to_string(decision)},
          {"inconclusive", inconclusive},
          {"annotations", annotations}};
}

double lrt_statistic(const FittedAMM& null_fit, const FittedAMM& alt_fit, LrtLikelihood kind,
                     std::vector<std::string>* notes) {
  const double l0 = kind == LrtLikelihood::marginal ? null_fit.marginal_loglik() : null_fit.cond_loglik;
  const double l1 = kind == LrtLikelihood::marginal ? alt_fit.marginal_loglik() : alt_fit.cond_loglik;
  const double t = 2.0 * (l1 - l0);
  if (t >= 0.0) return t;
  if (t >= kLrtTolerance) {
    if (notes) notes->push_back("slightly negative LRT statistic " + format_double(t) + " floored at 0");
    return 0.0;
  }
  if (notes) notes->push_back("negative LRT statistic " + format_double(t) + " (augmented fit worse)");
  return t;
}

MundlakResult mundlak_lrt(const PanelDataset& panel, const ModelSpec& spec, LrtLikelihood kind,
                          const FitSettings& settings) {
  if (spec.effects != EffectsMode::random)
    throw PreconditionError("the Mundlak test starts from a random-effects spec");
  FitSettings ml = settings;
  ml.criterion = Criterion::ml;
  ml.fixed_parameters.reset();
  ml.fixed_unit_weights.reset();
  ml.start.reset();
  ModelSpec augmented = spec;
  augmented.effects = EffectsMode::mundlak;

  MundlakResult out;
  const FittedAMM null_fit = fit_model(panel, spec, ml);
  const FittedAMM alt_fit = fit_model(panel, augmented, ml);
  out.df = static_cast<int>(alt_fit.design.mundlak_columns() - alt_fit.dropped_mundlak);
  if (alt_fit.dropped_mundlak > 0)
    out.annotations.push_back(std::to_string(alt_fit.dropped_mundlak) +
                              " unit-average columns were collinear and dropped");
  if (!null_fit.converged || !alt_fit.converged) {
    out.inconclusive = true;
    out.decision = EffectsMode::fixed;
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = std::numeric_limits<double>::quiet_NaN();
    out.annotations.push_back("a Mundlak fit did not converge; defaulting to fixed effects");
    return out;
  }
  if (out.df == 0) {
    out.annotations.push_back("no identifiable unit averages; keeping random effects");
    return out;
  }
  out.statistic = lrt_statistic(null_fit, alt_fit, kind, &out.annotations);
  out.p_value = chi_square_sf(std::max(out.statistic, 0.0), out.df);
  out.decision = out.p_value < 0.05 ? EffectsMode::fixed : EffectsMode::random;
  return out;
}

std::vector<TheoryGroup> parse_tournament(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("groups") || !j.at("groups").is_array())
    throw ConfigError("tournament config needs a 'groups' array");
  std::vector<TheoryGroup> groups;
  std::set<std::string> labels;
  for (const auto& g : j.at("groups")) {
    if (!g.is_object()) throw ConfigError("tournament group must be an object");
    for (const auto& [key, value] : g.items())
      if (key != "label" && key != "specs" && key != "subsample")
        throw ConfigError("unknown tournament group key '" + key + "'");
    TheoryGroup group;
    group.label = g.value("label", "group" + std::to_string(groups.size() + 1));
    if (!g.contains("specs") || !g.at("specs").is_array() || g.at("specs").empty())
      throw ConfigError("group '" + group.label + "' needs a non-empty 'specs' array");
    for (const auto& s : g.at("specs")) {
      ModelSpec spec;
      if (s.is_string()) {
        std::filesystem::path p = s.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        spec = load_spec_file(p);
      } else {
        spec = ModelSpec::from_json(s);
      }
      if (s.is_object() && !s.contains("label"))
        spec.label = group.label + "#" + std::to_string(group.specs.size() + 1);
      else if (s.is_string() && spec.label == "model")
        spec.label = std::filesystem::path(s.get<std::string>()).stem().string();
      if (!labels.insert(spec.label).second) throw ConfigError("duplicate spec label '" + spec.label + "'");
      group.specs.push_back(std::move(spec));
    }
    if (g.contains("subsample")) group.subsample = SubsampleFilter::from_json(g.at("subsample"));
    groups.push_back(std::move(group));
  }
  if (groups.empty()) throw ConfigError("tournament config has no groups");
  return groups;
}

std::vector<TheoryGroup> load_tournament_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tournament config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed tournament JSON in " + path.string() + ": " + e.what());
  }
  return parse_tournament(j, path.parent_path());
}

nlohmann::json Candidate::to_json() const {
  nlohmann::json j = {{"group", group},       {"label", label},
                      {"data", data_id},      {"order", order},
                      {"effects", to_string(spec.effects)},
                      {"n_obs", n_obs},       {"caic", caic.to_json()},
                      {"spec", spec.to_json()}};
  if (mundlak) j["mundlak"] = mundlak->to_json();
  if (!error.empty()) j["error"] = error;
  return j;
}

bool better(const Candidate& a, const Candidate& b) {
  if (a.failed() != b.failed()) return !a.failed();
  if (a.failed()) return false;
  return a.caic.caic < b.caic.caic - kTieResolution;
}

nlohmann::json Comparison::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (double c : caics) cs.push_back(finite_or_null(c));
  return {{"stage", stage}, {"data", data_id}, {"labels", labels}, {"caic", cs}, {"winner", winner}};
}

Candidate evaluate_candidate(const PanelDataset& panel, const ModelSpec& spec, const std::string& group,
                             const std::string& data_id, int order, const TournamentOptions& options) {
  Candidate c;
  c.group = group;
  c.label = spec.label;
  c.data_id = data_id;
  c.order = order;
  c.spec = spec;
  c.n_obs = panel.rows();
  try {
    if (options.mundlak && spec.effects == EffectsMode::random) {
      c.mundlak = mundlak_lrt(panel, spec, options.lrt, options.fit);
      c.spec.effects = c.mundlak->decision;
    }
    const FittedAMM fit = fit_model(panel, c.spec, options.fit);
    c.caic = conditional_aic(fit, options.caic);
    c.fit_summary = fit.summary();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    c.error = e.what();
    c.caic = failed_caic(e.what());
  }
  return c;
}

SelectionOutcome run_first_stage(const std::vector<TheoryGroup>& groups, const PanelDataset& panel,
                                 const TournamentOptions& options) {
  SelectionOutcome out;
  std::vector<PanelDataset> data;
  struct Job {
    std::size_t group;
    std::size_t spec;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].specs.empty()) throw ConfigError("group '" + groups[g].label + "' has no specs");
    data.push_back(groups[g].subsample.empty() ? panel : subsample(panel, groups[g].subsample));
    for (std::size_t s = 0; s < groups[g].specs.size(); ++s) jobs.push_back({g, s});
  }
  out.candidates.resize(jobs.size());
  detail::parallel_for(jobs.size(), options.jobs, [&](std::size_t i) {
    const auto& [g, s] = jobs[i];
    out.candidates[i] = evaluate_candidate(data[g], groups[g].specs[s], groups[g].label,
                                           groups[g].subsample.id(), static_cast<int>(s), options);
  });

  std::size_t offset = 0;
  for (const auto& group : groups) {
    std::vector<const Candidate*> members;
    for (std::size_t s = 0; s < group.specs.size(); ++s) members.push_back(&out.candidates[offset + s]);
    GroupOutcome go{group.label, group.subsample.id(), std::nullopt};
    const auto best = argbest(members);
    if (best && !members[*best]->failed()) go.winner = offset + *best;
    else out.annotations.push_back("group '" + group.label + "': all specs failed");
    out.comparisons.push_back(compare("first:" + group.label, go.data_id, members));
    out.groups.push_back(go);
    offset += group.specs.size();
  }
  return out;
}

SelectionOutcome run_second_stage(SelectionOutcome outcome, const std::optional<ModelSpec>& boosted,
                                  const std::vector<TheoryGroup>& groups, const PanelDataset& panel,
                                  const TournamentOptions& options) {
  std::map<std::string, ModelSpec> original;
  std::map<std::string, const TheoryGroup*> group_of;
  for (const auto& g : groups) {
    group_of[g.label] = &g;
    for (const auto& s : g.specs) original[s.label] = s;
  }

  // Pool: theory winners available on the full panel, refitted there.
  std::vector<std::pair<std::size_t, bool>> plan;  // (candidate index, refit needed)
  for (const auto& go : outcome.groups) {
    if (!go.winner) continue;
    const Candidate& w = outcome.candidates[*go.winner];
    if (go.data_id == "full") {
      plan.push_back({*go.winner, false});
    } else if (columns_complete(panel, original.at(w.label))) {
      plan.push_back({*go.winner, true});
    } else {
      outcome.deferred.push_back(w);
    }
  }
  std::vector<Candidate> pool(plan.size());
  detail::parallel_for(plan.size(), options.jobs, [&](std::size_t i) {
    const Candidate& w = outcome.candidates[plan[i].first];
    if (!plan[i].second) {
      pool[i] = w;
      return;
    }
    pool[i] = evaluate_candidate(panel, original.at(w.label), w.group, "full", w.order, options);
  });
  if (boosted) {
    ModelSpec b = *boosted;
    if (b.label.empty()) b.label = "M_B";
    original[b.label] = b;
    pool.push_back(evaluate_candidate(panel, b, "boosting", "full", 0, options));
  }
  outcome.pool = std::move(pool);

  std::vector<const Candidate*> members;
  for (const auto& c : outcome.pool) members.push_back(&c);
  std::optional<Candidate> champion;
  if (!members.empty()) {
    outcome.comparisons.push_back(compare("pool", "full", members));
    const auto best = argbest(members);
    if (!outcome.pool[*best].failed()) {
      champion = outcome.pool[*best];
      outcome.pool_winner = champion->label;
    } else {
      outcome.annotations.push_back("every pooled model failed on the full panel");
    }
  }

  // Sequential comparisons on each deferred member's own subsample.
  for (const auto& d : outcome.deferred) {
    if (!champion) {
      champion = d;
      outcome.annotations.push_back("no pooled winner; '" + d.label + "' taken as the current best");
      continue;
    }
    const TheoryGroup& g = *group_of.at(d.group);
    const PanelDataset sub = subsample(panel, g.subsample);
    Candidate refit = evaluate_candidate(sub, original.at(champion->label), champion->group, d.data_id,
                                         champion->order, options);
    outcome.comparisons.push_back(compare("deferred:" + d.group, d.data_id, {&refit, &d}));
    const bool challenger_wins = better(d, refit);
    outcome.challenges.push_back(std::move(refit));
    if (challenger_wins) champion = d;
  }
  if (champion) {
    outcome.overall_winner = champion->label;
    outcome.overall_data = champion->data_id;
  } else outcome.annotations.push_back("no model could be fitted");
  return outcome;
}

Table SelectionOutcome::table() const {
  struct Row {
    const Candidate* c;
    std::string stage;
  };
  std::vector<Row> rows;
  for (const auto& c : candidates) rows.push_back({&c, "first"});
  for (const auto& c : pool) {
    const bool copy = std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& x) {
      return x.label == c.label && x.data_id == c.data_id;
    });
    if (!copy) rows.push_back({&c, "pool"});
  }
  for (const auto& c : challenges) rows.push_back({&c, "deferred"});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.c->failed() != b.c->failed()) return !a.c->failed();
    return !a.c->failed() && a.c->caic.caic < b.c->caic.caic;
  });

  std::set<std::pair<std::string, std::string>> group_winners;
  for (const auto& g : groups)
    if (g.winner) group_winners.insert({candidates[*g.winner].label, candidates[*g.winner].data_id});

  Table t;
  t.header = {"label", "group", "stage", "data", "n_obs", "effects_mode", "cond_loglik", "trace", "r",
              "caic", "group_winner", "pool_winner", "overall_winner", "status"};
  for (const auto& [c, stage] : rows) {
    const bool gw = stage == "first" && group_winners.count({c->label, c->data_id}) > 0;
    const bool pw = stage != "deferred" && c->data_id == "full" && c->label == pool_winner;
    const bool ow = stage != "deferred" && c->label == overall_winner && c->data_id == overall_data;
    t.add_row({c->label, c->group, stage, c->data_id, std::to_string(c->n_obs), to_string(c->spec.effects),
               c->failed() ? "" : cell(c->caic.cond_loglik), c->failed() ? "" : cell(c->caic.trace),
               c->failed() ? "" : cell(c->caic.r), cell(c->failed() ? std::numeric_limits<double>::infinity()
                                                                    : c->caic.caic),
               gw ? "1" : "0", pw ? "1" : "0", ow ? "1" : "0", c->failed() ? "failed: " + c->error : "ok"});
  }
  return t;
}

nlohmann::json SelectionOutcome::audit() const {
  nlohmann::json j;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) j["candidates"].push_back(c.to_json());
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups)
    j["groups"].push_back({{"group", g.group},
                           {"data", g.data_id},
                           {"winner", g.winner ? nlohmann::json(candidates[*g.winner].label) : nlohmann::json(nullptr)}});
  j["pool"] = nlohmann::json::array();
  for (const auto& c : pool) j["pool"].push_back(c.to_json());
  j["deferred"] = nlohmann::json::array();
  for (const auto& c : deferred) j["deferred"].push_back({{"label", c.label}, {"data", c.data_id}});
  j["challenges"] = nlohmann::json::array();
  for (const auto& c : challenges) j["challenges"].push_back(c.to_json());
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : comparisons) j["comparisons"].push_back(c.to_json());
  j["pool_winner"] = pool_winner;
  j["overall_winner"] = overall_winner;
  j["overall_data"] = overall_data;
  j["annotations"] = annotations;
  return j;
}

}  // namespace panelamm
