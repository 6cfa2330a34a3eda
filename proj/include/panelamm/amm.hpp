#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelamm/design.hpp"

namespace panelamm {

enum class Criterion { reml, ml };

struct FitSettings {
  Criterion criterion = Criterion::reml;
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  int max_weight_cycles = 100;
  double weight_tolerance = 1e-8;
  double variance_floor = 1e-8;  // unit variances >= floor * sigma^2
  // Holds the outer parameters (and/or unit weights) at these values
  // instead of estimating them.
  std::optional<Eigen::VectorXd> fixed_parameters;
  std::optional<Eigen::VectorXd> fixed_unit_weights;
  std::optional<Eigen::VectorXd> start;
};

struct TermEdf {
  std::string term;
  TermKind kind;
  double edf;
  Index columns;
};

struct FittedAMM {
  DesignBundle design;
  FitSettings settings;

  Eigen::VectorXd coefficients;  // model coordinates, zero on dropped columns
  Eigen::MatrixXd covariance;    // sigma^2 H^{-1} in model coordinates
  Eigen::VectorXd parameters;    // log smoothing parameters, then log-Cholesky of G / sigma^2
  std::vector<std::string> parameter_names;
  std::vector<double> lambdas;   // smoothing parameters relative to sigma^2, in model units
  Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
  double sigma2 = 0.0;
  Eigen::VectorXd unit_sigma2;   // per unit
  Eigen::VectorXd unit_weights;  // w_i = sigma^2 / sigma_i^2
  Eigen::VectorXd row_weights;

  Eigen::VectorXd fitted;        // conditional fitted values
  Eigen::VectorXd residuals;
  Eigen::VectorXd hat_diagonal;
  std::vector<TermEdf> edf;
  double total_edf = 0.0;
  double cond_loglik = 0.0;
  double criterion_value = 0.0;  // minimized -log restricted (or marginal) likelihood
  Index unpenalized_rank = 0;
  std::vector<std::string> dropped_columns;
  Index dropped_mundlak = 0;

  bool converged = false;
  int iterations = 0;
  int weight_cycles = 0;
  double gradient_norm = 0.0;
  Eigen::VectorXd gradient;  // of criterion_value at the final parameters
  std::vector<double> objective_trace;
  std::vector<std::string> annotations;

  Index rows() const { return design.rows(); }
  double marginal_loglik() const { return -criterion_value; }
  nlohmann::json summary() const;
};

FittedAMM fit_amm(const DesignBundle& design, const FitSettings& settings = {});
FittedAMM fit_model(const PanelDataset& panel, const ModelSpec& spec, const FitSettings& settings = {});

// Gaussian log density of y given the predicted unit effects and the
// per-unit variances in unit_sigma2 (floored at 1e-10).
double conditional_loglik(const FittedAMM& fit);

Eigen::VectorXd predict(const FittedAMM& fit, const PanelDataset& newdata, bool conditional);

std::vector<TermEdf> effective_dof(const FittedAMM& fit);

struct TermTest {
  std::string term;
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  std::string code;
  bool rank_deficient = false;
};

// Wald test of all coefficients of a term being zero.
TermTest term_significance(const FittedAMM& fit, const std::string& term);

struct EffectCurve {
  std::string term;
  Eigen::VectorXd grid;
  Eigen::VectorXd effect;
  Eigen::VectorXd se;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd rug;  // observed covariate values of the term's rows, sorted
};

EffectCurve smooth_effect_curve(const FittedAMM& fit, const std::string& term,
                                const Eigen::VectorXd& grid);

// Equally spaced grid over the term's data support.
Eigen::VectorXd support_grid(const FittedAMM& fit, const std::string& term, Index points = 100);

struct EffectSurface {
  std::string term;
  Eigen::VectorXd x;  // grid points, flattened with x major
  Eigen::VectorXd z;
  Eigen::VectorXd effect;
  Eigen::VectorXd se;
};

EffectSurface tensor_effect_surface(const FittedAMM& fit, const std::string& term, Index points = 25);

}  // namespace panelamm
