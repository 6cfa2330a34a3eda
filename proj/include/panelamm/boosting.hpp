#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "panelamm/model_spec.hpp"
#include "panelamm/panel.hpp"
#include "panelamm/report.hpp"
#include "panelamm/stats.hpp"

namespace panelamm {

enum class LearnerKind { ridge_categorical, pspline, tensor_pspline, random_intercept, random_slope };

std::string to_string(LearnerKind k);

// A penalized least-squares component: fit(g) = X (X'WX + lambda P)^{-1} X'W g.
struct BaseLearner {
  std::string id;
  LearnerKind kind = LearnerKind::pspline;
  std::vector<std::string> columns;
  Eigen::MatrixXd design;   // rows x p
  Eigen::MatrixXd penalty;  // p x p
  double lambda = 0.0;
  double df = 0.0;          // hat trace at lambda under unit weights
  int k1 = 0;               // basis dimension (per margin for tensors)
  int k2 = 0;
};

// Hat trace tr(X (X'X + lambda P)^{-1} X').
double learner_trace(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty, double lambda);

struct LearnerOptions {
  double df_target = 4.0;
  int spline_k = 10;
  int tensor_k = 5;
  std::vector<std::pair<std::string, std::string>> tensor_pairs;
  std::vector<std::string> exclude;  // covariates that get no learner
  bool unit_learners = true;         // unit intercept and unit slope learners
};

struct LearnerSet {
  std::vector<BaseLearner> learners;
  std::vector<std::string> annotations;  // skipped columns, unreachable df targets
};

// One learner per categorical covariate (ridge on all level dummies), per
// numeric covariate (cubic P-spline), per tensor pair (penalized part of a
// bivariate P-spline), plus unit intercepts and unit slopes on t unless
// unit_learners is off. Constant
// or incomplete columns are skipped with an annotation. Penalties are
// calibrated so that each hat trace equals df_target; when a learner cannot
// reach it the closest attainable trace is used and annotated.
LearnerSet make_base_learners(const PanelDataset& panel, const LearnerOptions& options = {});

// Huber loss and its negative gradient at threshold delta.
double huber_loss(double residual, double delta);

struct HuberGradient {
  Eigen::VectorXd gradient;
  double delta = 0.0;
};

// delta = median |y - f| over rows with positive weight (weighted median
// when weights are given); gradient is the residual clipped to [-delta, delta].
HuberGradient huber_gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& f);
HuberGradient huber_gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Eigen::VectorXd& weights);

struct BoostOptions {
  double nu = 0.1;
  int m_max = 1500;
  int folds = 10;
  double threshold = 0.01;
  std::uint64_t seed = 1;
  int jobs = 1;                      // folds fitted concurrently
  std::optional<double> fixed_delta; // +inf gives the squared-error regime
  LearnerOptions learners;

  // {nu, m_max, folds, df_target, threshold, seed, tensor_pairs, spline_k,
  //  tensor_k, exclude, unit_learners}; unknown keys are a ConfigError.
  static BoostOptions from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct BoostStep {
  int iteration = 0;  // from 1
  std::size_t learner = 0;
  double delta = 0.0;
  double risk_before = 0.0;  // in-sample risk before the update, at this step's delta
  double risk = 0.0;         // in-sample risk after the update, at this step's delta
  Eigen::VectorXd coefficients;  // nu times the selected learner's fit coefficients
};

struct BoostPath {
  std::vector<std::string> learner_ids;
  double offset = 0.0;
  double nu = 0.1;
  double initial_risk = 0.0;  // offset only, at the first step's delta
  std::vector<BoostStep> steps;
  int m_stop = 0;
  std::vector<std::vector<double>> fold_risks;  // [fold][m], m = 0..m_max
  std::vector<double> mean_fold_risk;

  // Selections of each learner over iterations 1..m.
  std::vector<int> selection_counts(int m) const;
  // Accumulated coefficients of each learner after m iterations.
  std::vector<Eigen::VectorXd> coefficients(const std::vector<BaseLearner>& learners, int m) const;
  Eigen::VectorXd fitted(const std::vector<BaseLearner>& learners, int m) const;
  // Drops iterations after m.
  void truncate(int m);

  Table path_table() const;        // iteration, learner, delta, risk_before, risk
  Table fold_risk_table() const;   // iteration, mean, fold_1..fold_F
};

// Component-wise boosting of y on the learners for m_max iterations from the
// weighted-median offset. Rows with zero weight do not enter the fits.
BoostPath boost(const std::vector<BaseLearner>& learners, const Eigen::VectorXd& y, const BoostOptions& options,
                const std::optional<Eigen::VectorXd>& weights = std::nullopt);

// Bootstrap weights drawn within each unit: unit i with n_i rows receives n_i
// draws. Fold f uses mt19937_64 seeded with seed_seq{seed, f}. A fold whose
// out-of-bag set is empty is redrawn from the next stream (up to 100 times).
std::vector<Eigen::VectorXd> bootstrap_folds(const PanelDataset& panel, int folds, std::uint64_t seed);

struct MstopChoice {
  int m_stop = 0;
  std::vector<std::vector<double>> fold_risks;
  std::vector<double> mean_risk;
};

// Out-of-bag Huber risk for m = 0..m_max on every fold, with delta the
// median absolute out-of-bag residual at m; m_stop is the argmin of the
// across-fold mean (earliest on ties).
MstopChoice choose_mstop(const std::vector<BaseLearner>& learners, const Eigen::VectorXd& y,
                         const std::vector<Eigen::VectorXd>& folds, const BoostOptions& options);

struct DistilledSpec {
  double threshold = 0.0;
  int m_stop = 0;
  std::vector<std::string> kept;  // learner ids
  std::vector<double> frequencies;  // all learners, over iterations 1..m_stop
  ModelSpec spec;                 // fixed unit effects
  std::vector<std::string> annotations;

  Table frequency_table(const std::vector<std::string>& learner_ids) const;
};

// Keeps learners selected in at least `threshold` of iterations 1..m_stop
// (and at least once). PreconditionError if none survive.
DistilledSpec distill(const BoostPath& path, const std::vector<BaseLearner>& learners, double threshold,
                      const std::string& label = "M_B");

struct BoostingRun {
  LearnerSet learners;
  BoostPath path;
  std::optional<DistilledSpec> distilled;  // empty when nothing was selected
  std::vector<std::string> annotations;
};

// Learners, bootstrap m_stop, the full-data path truncated at m_stop, and
// the distilled spec.
BoostingRun run_boosting(const PanelDataset& panel, const BoostOptions& options);

}  // namespace panelamm
