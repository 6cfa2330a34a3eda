#pragma once

#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelamm/amm.hpp"

namespace panelamm {

enum class TraceBackend { plugin_hat, finite_difference };

std::string to_string(TraceBackend b);
TraceBackend parse_backend(const std::string& s);

struct CaicOptions {
  TraceBackend backend = TraceBackend::plugin_hat;
  // Finite differences either re-estimate all variance and smoothing
  // parameters at each perturbed response, or hold them at the fitted
  // values (known-variance mode, where the smoother is exactly linear).
  bool reestimate = true;
  double relative_step = 1e-4;  // step = relative_step * sd(y)
};

struct CaicReport {
  double cond_loglik = 0.0;
  double trace = 0.0;
  double r = 0.0;
  double caic = std::numeric_limits<double>::infinity();
  TraceBackend backend = TraceBackend::plugin_hat;
  bool failed = false;
  std::vector<std::string> annotations;

  // -2 loglik + 2 (trace + r), or +inf for a failed fit.
  double recompute() const;
  nlohmann::json to_json() const;
};

// Number of error-covariance parameters: one per unit when heteroscedastic.
double error_parameters(const FittedAMM& fit);

CaicReport conditional_aic(const FittedAMM& fit, const CaicOptions& options = {});

// A failed fit: compares worse than every successful one.
CaicReport failed_caic(const std::string& reason);

}  // namespace panelamm
