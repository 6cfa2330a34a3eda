#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "panelamm/boosting.hpp"
#include "panelamm/caic.hpp"
#include "panelamm/fit_report.hpp"
#include "panelamm/panel.hpp"
#include "panelamm/report.hpp"
#include "panelamm/selection.hpp"
#include "panelamm/transforms.hpp"
#include "panelamm/varying.hpp"

namespace panelamm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Inputs and settings that determine a run's outputs. Paths enter the
// manifest by file name only so that relocated inputs give the same tree.
class RunContext {
 public:
  explicit RunContext(const RunOptions& options)
      : options_(options), start_(std::chrono::steady_clock::now()) {
    metadata_["command"] = options.command;
    metadata_["version"] = PANELAMM_VERSION;
    metadata_["inputs"] = json::object();
    metadata_["settings"] = json::object();
  }

  void add_input(const std::string& role, const fs::path& path) {
    metadata_["inputs"][role] = {{"file", path.filename().string()}, {"sha256", sha256_file(path)}};
  }
  void set(const std::string& key, json value) { metadata_["settings"][key] = std::move(value); }
  void record(const std::string& key, json value) { metadata_[key] = std::move(value); }

  void write(const ReportBundle& bundle) {
    json meta = metadata_;
    if (options_.timing)
      meta["wall_clock_seconds"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    bundle.write(options_.out_dir, std::move(meta));
  }

 private:
  const RunOptions& options_;
  std::chrono::steady_clock::time_point start_;
  json metadata_;
};

void require_config_file(const fs::path& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError("cannot read " + flag + " file " + path.string());
}

void require_data_file(const fs::path& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::is_regular_file(path)) throw DataError("cannot read " + flag + " file " + path.string());
}

void check_out_dir(const RunOptions& options) {
  if (options.out_dir.empty()) throw ConfigError("--out-dir is required");
  if (!options.force && fs::exists(options.out_dir) && !fs::is_empty(options.out_dir))
    throw ConfigError("output directory " + options.out_dir.string() + " is not empty (use --force)");
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed " + what + " JSON in " + path.string() + ": " + e.what());
  }
}

PanelDataset load_inputs(const RunOptions& options, RunContext& context) {
  require_data_file(options.panel, "--panel");
  require_config_file(options.schema, "--schema");
  const PanelSchema schema = load_schema_file(options.schema);
  context.add_input("panel", options.panel);
  context.add_input("schema", options.schema);
  return load_panel_file(options.panel, schema);
}

FitSettings fit_settings(const RunOptions& options) {
  FitSettings s;
  if (options.criterion == "reml") {
    s.criterion = Criterion::reml;
  } else if (options.criterion == "ml") {
    s.criterion = Criterion::ml;
  } else {
    throw ConfigError("unknown criterion '" + options.criterion + "'");
  }
  return s;
}

CaicOptions caic_options(const RunOptions& options) {
  CaicOptions c;
  c.backend = parse_backend(options.backend);
  return c;
}

BoostOptions boost_options(const RunOptions& options, RunContext& context) {
  BoostOptions b;
  if (!options.boost_config.empty()) {
    require_config_file(options.boost_config, "--boost-config");
    b = BoostOptions::from_json(read_json_file(options.boost_config, "boost config"));
    context.add_input("boost_config", options.boost_config);
  }
  b.seed = options.seed;
  b.jobs = options.jobs;
  b.validate();
  return b;
}

Table learner_table(const std::vector<BaseLearner>& learners) {
  Table t;
  t.header = {"learner", "kind", "columns", "parameters", "lambda", "df"};
  for (const auto& l : learners) {
    std::string cols;
    for (const auto& c : l.columns) cols += (cols.empty() ? "" : ";") + c;
    t.add_row({l.id, to_string(l.kind), cols, std::to_string(l.design.cols()), format_double(l.lambda),
               format_double(l.df)});
  }
  return t;
}

void add_boosting_report(ReportBundle& bundle, const BoostingRun& run, const BoostOptions& options,
                         const std::string& prefix) {
  bundle.add_table(prefix + "learners.csv", learner_table(run.learners.learners));
  bundle.add_table(prefix + "path.csv", run.path.path_table());
  bundle.add_table(prefix + "fold_risk.csv", run.path.fold_risk_table());
  json summary = {{"options", options.to_json()},
                  {"m_stop", run.path.m_stop},
                  {"offset", run.path.offset},
                  {"learners", run.path.learner_ids.size()},
                  {"annotations", run.annotations}};
  if (run.distilled) {
    bundle.add_table(prefix + "frequencies.csv", run.distilled->frequency_table(run.path.learner_ids));
    bundle.add_json(prefix + "distilled_spec.json", run.distilled->spec.to_json());
    summary["kept"] = run.distilled->kept;
    summary["distill_annotations"] = run.distilled->annotations;
  } else {
    summary["kept"] = json::array();
  }
  bundle.add_json(prefix + "boosting.json", summary);
}

const Candidate* find_winner(const SelectionOutcome& outcome) {
  const auto match = [&](const std::vector<Candidate>& list) -> const Candidate* {
    for (const auto& c : list)
      if (c.label == outcome.overall_winner && c.data_id == outcome.overall_data && !c.failed()) return &c;
    return nullptr;
  };
  if (outcome.overall_winner.empty()) return nullptr;
  for (const auto* list : {&outcome.pool, &outcome.challenges, &outcome.deferred, &outcome.candidates})
    if (const Candidate* c = match(*list)) return c;
  return nullptr;
}

}  // namespace

int run_transform(const RunOptions& options) {
  RunContext context(options);
  require_config_file(options.recipes, "--recipes");
  const auto recipes = parse_recipes(read_json_file(options.recipes, "recipe file"));
  check_out_dir(options);
  PanelDataset panel = load_inputs(options, context);
  context.add_input("recipes", options.recipes);
  panel = apply_recipes(recipes, std::move(panel));

  ReportBundle bundle;
  std::ostringstream csv;
  write_panel_csv(csv, panel);
  bundle.add_file("panel.csv", csv.str());
  bundle.add_json("schema.json", panel.schema().to_json());
  bundle.add_json("transform.json", {{"rows", panel.rows()},
                                     {"units", panel.n_units()},
                                     {"years", panel.years.size()},
                                     {"annotations", panel.annotations}});
  context.write(bundle);
  return exit_ok;
}

int run_fit(const RunOptions& options) {
  RunContext context(options);
  require_config_file(options.spec, "--spec");
  ModelSpec spec = load_spec_file(options.spec);
  const FitSettings settings = fit_settings(options);
  const CaicOptions caic = caic_options(options);
  const LrtLikelihood lrt = parse_lrt_likelihood(options.lrt);
  if (options.effects) spec.effects = parse_effects(*options.effects);
  check_out_dir(options);
  const PanelDataset panel = load_inputs(options, context);
  context.add_input("spec", options.spec);
  context.set("criterion", options.criterion);
  context.set("backend", to_string(caic.backend));
  context.set("lrt", to_string(lrt));
  spec.validate(panel);

  std::optional<MundlakResult> mundlak;
  if (options.effects) {
    context.record("effects_decision", {{"effects", to_string(spec.effects)}, {"source", "forced"}});
  } else if (spec.effects == EffectsMode::random) {
    mundlak = mundlak_lrt(panel, spec, lrt, settings);
    spec.effects = mundlak->decision;
    context.record("effects_decision",
                   {{"effects", to_string(spec.effects)}, {"source", "mundlak"}, {"mundlak", mundlak->to_json()}});
  } else {
    context.record("effects_decision", {{"effects", to_string(spec.effects)}, {"source", "spec"}});
  }

  const FittedAMM fit = fit_model(panel, spec, settings);
  const CaicReport report = fit.converged ? conditional_aic(fit, caic) : failed_caic("fit did not converge");
  ReportBundle bundle;
  bundle.add_json("spec.json", spec.to_json());
  add_fit_report(bundle, fit, report, mundlak);
  context.record("converged", fit.converged);
  context.write(bundle);
  if (!fit.converged) {
    std::cerr << "error: the fit did not converge; partial outputs written to " << options.out_dir.string() << "\n";
    return exit_not_converged;
  }
  return exit_ok;
}

int run_boost(const RunOptions& options) {
  RunContext context(options);
  const BoostOptions boost = boost_options(options, context);
  check_out_dir(options);
  const PanelDataset panel = load_inputs(options, context);
  context.record("seed", options.seed);

  const BoostingRun run = run_boosting(panel, boost);
  ReportBundle bundle;
  add_boosting_report(bundle, run, boost, "");
  context.write(bundle);
  return exit_ok;
}

int run_tournament(const RunOptions& options) {
  RunContext context(options);
  require_config_file(options.groups, "--groups");
  auto groups = load_tournament_file(options.groups);
  TournamentOptions topts;
  topts.jobs = options.jobs;
  topts.lrt = parse_lrt_likelihood(options.lrt);
  topts.caic = caic_options(options);
  topts.fit = fit_settings(options);
  if (options.effects) {
    const EffectsMode forced = parse_effects(*options.effects);
    topts.mundlak = false;
    for (auto& g : groups)
      for (auto& s : g.specs) s.effects = forced;
  }
  std::optional<BoostOptions> boost;
  if (!options.skip_boost) boost = boost_options(options, context);
  check_out_dir(options);
  const PanelDataset panel = load_inputs(options, context);
  context.add_input("groups", options.groups);
  context.record("seed", options.seed);
  context.set("criterion", options.criterion);
  context.set("backend", to_string(topts.caic.backend));
  context.set("lrt", to_string(topts.lrt));
  context.set("effects", options.effects ? json(*options.effects) : json("mundlak_test"));
  context.set("skip_boost", options.skip_boost);

  ReportBundle bundle;
  SelectionOutcome outcome = run_first_stage(groups, panel, topts);
  std::optional<ModelSpec> boosted;
  if (boost) {
    const BoostingRun run = run_boosting(panel, *boost);
    add_boosting_report(bundle, run, *boost, "boosting/");
    if (run.distilled) {
      boosted = run.distilled->spec;
      if (options.effects) boosted->effects = parse_effects(*options.effects);
    }
  }
  outcome = run_second_stage(std::move(outcome), boosted, groups, panel, topts);
  add_selection_report(bundle, outcome);

  const Candidate* winner = find_winner(outcome);
  if (winner) {
    bundle.add_json("winner_spec.json", winner->spec.to_json());
    context.record("winner", {{"label", winner->label}, {"data", winner->data_id}, {"caic", winner->caic.caic}});
  } else {
    context.record("winner", nullptr);
  }
  context.write(bundle);
  if (!winner) {
    std::cerr << "error: every candidate failed; audit written to " << options.out_dir.string() << "\n";
    return exit_not_converged;
  }
  return exit_ok;
}

int run_break(const RunOptions& options) {
  RunContext context(options);
  require_config_file(options.spec, "--spec");
  const ModelSpec spec = load_spec_file(options.spec);
  const FitSettings settings = fit_settings(options);
  const CaicOptions caic = caic_options(options);
  check_out_dir(options);
  const PanelDataset panel = load_inputs(options, context);
  context.add_input("spec", options.spec);
  context.set("break_year", options.break_year);
  context.set("criterion", options.criterion);
  spec.validate(panel);

  const VaryingCoefFit v = fit_varying_coefficients(spec, panel, options.break_year, settings);
  const CaicReport report = v.fit.converged ? conditional_aic(v.fit, caic) : failed_caic("fit did not converge");
  ReportBundle bundle;
  bundle.add_table("periods.csv", v.table());
  bundle.add_json("varying.json", v.to_json());
  add_fit_report(bundle, v.fit, report, std::nullopt, "fit/");
  context.record("converged", v.fit.converged);
  context.write(bundle);
  if (!v.fit.converged) {
    std::cerr << "error: the fit did not converge; partial outputs written to " << options.out_dir.string() << "\n";
    return exit_not_converged;
  }
  return exit_ok;
}

// Verifies every file listed in a run's manifest and prints the listing.
int run_report(const RunOptions& options) {
  if (options.run_dir.empty()) throw ConfigError("--run-dir is required");
  const fs::path manifest_path = options.run_dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) throw ConfigError("no manifest.json in " + options.run_dir.string());
  const json manifest = read_json_file(manifest_path, "manifest");
  if (!manifest.contains("outputs") || !manifest["outputs"].is_array())
    throw ConfigError("manifest has no outputs list");

  int bad = 0;
  std::cout << "command: " << manifest.value("command", std::string("?"))
            << "  version: " << manifest.value("version", std::string("?")) << "\n";
  for (const auto& entry : manifest["outputs"]) {
    const std::string rel = entry.at("path").get<std::string>();
    const fs::path file = options.run_dir / rel;
    std::string status = "ok";
    if (!fs::is_regular_file(file)) {
      status = "missing";
    } else if (sha256_file(file) != entry.at("sha256").get<std::string>()) {
      status = "modified";
    }
    if (status != "ok") ++bad;
    std::cout << status << "  " << rel << "\n";
  }
  if (bad > 0) {
    std::cerr << "error: " << bad << " listed output(s) missing or modified\n";
    return exit_data;
  }
  return exit_ok;
}

int guarded(const std::function<int()>& command) {
  try {
    return command();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return exit_data;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_not_converged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

}  // namespace panelamm::cli
