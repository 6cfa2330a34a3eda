#include <CLI11.hpp>

#include <string>

#include "commands.hpp"

using panelamm::cli::RunOptions;

namespace {

void add_inputs(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--panel", o.panel, "Panel CSV file")->required();
  cmd.add_option("--schema", o.schema, "Column-role schema JSON")->required();
  cmd.add_option("--out-dir", o.out_dir, "Output directory")->required();
  cmd.add_flag("--force", o.force, "Write into a non-empty output directory");
  cmd.add_flag("--timing", o.timing, "Record wall-clock time in the manifest");
}

void add_model_flags(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--criterion", o.criterion, "Variance-parameter criterion: reml or ml")->capture_default_str();
  cmd.add_option("--backend", o.backend, "cAIC trace backend: plugin_hat or finite_difference")
      ->capture_default_str();
}

void add_effects_flags(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--effects", o.effects, "Force the unit-effects mode (random, fixed, mundlak, none)");
  cmd.add_option("--lrt", o.lrt, "Mundlak likelihood: marginal or conditional")->capture_default_str();
}

void add_boost_flags(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--boost-config", o.boost_config, "Boosting options JSON");
  cmd.add_option("--seed", o.seed, "Seed for the bootstrap folds")->capture_default_str();
  cmd.add_option("--jobs", o.jobs, "Concurrent fits")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Additive mixed models for panel data: fitting, cAIC selection and boosting"};
  app.set_version_flag("--version", PANELAMM_VERSION);
  app.require_subcommand(1);
  RunOptions o;

  auto* transform = app.add_subcommand("transform", "Derive transformed columns and write a new panel");
  add_inputs(*transform, o);
  transform->add_option("--recipes", o.recipes, "Transform recipe JSON")->required();

  auto* fit = app.add_subcommand("fit", "Fit one model spec and report cAIC, EDFs, tests and curves");
  add_inputs(*fit, o);
  fit->add_option("--spec", o.spec, "Model spec JSON")->required();
  add_model_flags(*fit, o);
  add_effects_flags(*fit, o);

  auto* tournament = app.add_subcommand("tournament", "Two-stage cAIC selection over theory groups");
  add_inputs(*tournament, o);
  tournament->add_option("--groups", o.groups, "Tournament config JSON")->required();
  tournament->add_flag("--skip-boost", o.skip_boost, "Leave the boosted model out of the pool");
  add_model_flags(*tournament, o);
  add_effects_flags(*tournament, o);
  add_boost_flags(*tournament, o);

  auto* boost = app.add_subcommand("boost", "Component-wise Huber boosting with bootstrap early stopping");
  add_inputs(*boost, o);
  add_boost_flags(*boost, o);

  auto* brk = app.add_subcommand("break", "Refit a spec with pre/post period coefficients");
  add_inputs(*brk, o);
  brk->add_option("--spec", o.spec, "Model spec JSON")->required();
  brk->add_option("--break-year", o.break_year, "Last year of the pre period")->capture_default_str();
  add_model_flags(*brk, o);

  auto* report = app.add_subcommand("report", "Verify and list the outputs of a run");
  report->add_option("--run-dir", o.run_dir, "Directory holding manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return panelamm::cli::exit_config;
  }

  using namespace panelamm::cli;
  if (*transform) o.command = "transform";
  if (*fit) o.command = "fit";
  if (*tournament) o.command = "tournament";
  if (*boost) o.command = "boost";
  if (*brk) o.command = "break";
  if (*report) o.command = "report";
  return guarded([&] {
    if (o.command == "transform") return run_transform(o);
    if (o.command == "fit") return run_fit(o);
    if (o.command == "tournament") return run_tournament(o);
    if (o.command == "boost") return run_boost(o);
    if (o.command == "break") return run_break(o);
    return run_report(o);
  });
}
