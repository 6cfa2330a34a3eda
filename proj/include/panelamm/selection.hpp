#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelamm/amm.hpp"
#include "panelamm/caic.hpp"
#include "panelamm/model_spec.hpp"
#include "panelamm/panel.hpp"
#include "panelamm/report.hpp"

namespace panelamm {

// Likelihood entering the Mundlak statistic. The maximized marginal
// likelihood is the default; the conditional likelihood of the two fits is
// available for comparison.
enum class LrtLikelihood { marginal, conditional };

std::string to_string(LrtLikelihood l);
LrtLikelihood parse_lrt_likelihood(const std::string& s);

struct MundlakResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  EffectsMode decision = EffectsMode::random;
  bool inconclusive = false;
  std::vector<std::string> annotations;

  nlohmann::json to_json() const;
};

// 2 (l_alt - l_null), floored at zero when above -1e-6 (annotated); a more
// negative value is reported as is and noted.
double lrt_statistic(const FittedAMM& null_fit, const FittedAMM& alt_fit, LrtLikelihood kind,
                     std::vector<std::string>* notes = nullptr);

// Random-effects spec against its Mundlak augmentation; both fitted by ML.
MundlakResult mundlak_lrt(const PanelDataset& panel, const ModelSpec& spec,
                          LrtLikelihood kind = LrtLikelihood::marginal, const FitSettings& settings = {});

struct TheoryGroup {
  std::string label;
  std::vector<ModelSpec> specs;
  SubsampleFilter subsample;
};

// {"groups": [{"label": ..., "specs": [path | inline spec, ...], "subsample": {...}}]}
// Relative spec paths resolve against base_dir.
std::vector<TheoryGroup> parse_tournament(const nlohmann::json& j, const std::filesystem::path& base_dir);
std::vector<TheoryGroup> load_tournament_file(const std::filesystem::path& path);

struct TournamentOptions {
  int jobs = 1;
  bool mundlak = true;  // choose the effects mode of random-mode specs by the Mundlak test
  LrtLikelihood lrt = LrtLikelihood::marginal;
  CaicOptions caic;
  FitSettings fit;
};

// One fitted candidate on one data set.
struct Candidate {
  std::string group;
  std::string label;
  std::string data_id;  // subsample id, "full" for the whole panel
  int order = 0;        // declaration order within the group
  ModelSpec spec;       // effects mode as fitted
  Index n_obs = 0;
  CaicReport caic;
  std::optional<MundlakResult> mundlak;
  nlohmann::json fit_summary;  // null when the fit failed
  std::string error;

  bool failed() const { return caic.failed; }
  nlohmann::json to_json() const;
};

// Strictly better: successful before failed, then lower cAIC by more than
// 1e-9. Callers keep the earlier candidate on ties.
bool better(const Candidate& a, const Candidate& b);

struct Comparison {
  std::string stage;
  std::string data_id;
  std::vector<std::string> labels;
  std::vector<double> caics;  // +inf for failures
  std::string winner;
  nlohmann::json to_json() const;
};

struct GroupOutcome {
  std::string group;
  std::string data_id;
  std::optional<std::size_t> winner;  // index into candidates; empty when all failed
};

struct SelectionOutcome {
  std::vector<Candidate> candidates;  // first stage, in declaration order
  std::vector<GroupOutcome> groups;
  std::vector<Candidate> pool;        // full-panel fits (theory winners and the boosted model)
  std::vector<Candidate> deferred;    // subsample-only winners
  std::vector<Candidate> challenges;  // pool winner refitted on deferred subsamples
  std::vector<Comparison> comparisons;
  std::string pool_winner;
  std::string overall_winner;
  std::string overall_data;  // data set on which the overall winner was scored
  std::vector<std::string> annotations;

  // All fitted candidates sorted ascending by cAIC, with winner flags.
  Table table() const;
  nlohmann::json audit() const;
};

// Fits one spec on one panel and scores it; never throws for model
// failures, which become +inf candidates.
Candidate evaluate_candidate(const PanelDataset& panel, const ModelSpec& spec, const std::string& group,
                             const std::string& data_id, int order, const TournamentOptions& options);

SelectionOutcome run_first_stage(const std::vector<TheoryGroup>& groups, const PanelDataset& panel,
                                 const TournamentOptions& options = {});

SelectionOutcome run_second_stage(SelectionOutcome outcome, const std::optional<ModelSpec>& boosted,
                                  const std::vector<TheoryGroup>& groups, const PanelDataset& panel,
                                  const TournamentOptions& options = {});

}  // namespace panelamm
