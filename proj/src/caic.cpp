#include "panelamm/caic.hpp"

#include <cmath>

#include "panelamm/panel.hpp"

namespace panelamm {

std::string to_string(TraceBackend b) {
  return b == TraceBackend::plugin_hat ? "plugin_hat" : "finite_difference";
}

TraceBackend parse_backend(const std::string& s) {
  if (s == "plugin_hat" || s == "plugin") return TraceBackend::plugin_hat;
  if (s == "finite_difference" || s == "fd") return TraceBackend::finite_difference;
  throw ConfigError("unknown cAIC backend '" + s + "'");
}

double CaicReport::recompute() const {
  if (failed) return std::numeric_limits<double>::infinity();
  return -2.0 * cond_loglik + 2.0 * (trace + r);
}

nlohmann::json CaicReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"cond_loglik", num(cond_loglik)}, {"trace", num(trace)},   {"r", r},
          {"caic", num(caic)},               {"backend", to_string(backend)},
          {"failed", failed},                {"annotations", annotations}};
}

double error_parameters(const FittedAMM& fit) {
  return fit.design.spec.heteroscedastic ? static_cast<double>(fit.design.n_units()) : 1.0;
}

CaicReport failed_caic(const std::string& reason) {
  CaicReport out;
  out.failed = true;
  out.annotations.push_back(reason);
  return out;
}

namespace {

double finite_difference_trace(const FittedAMM& fit, const CaicOptions& options) {
  const DesignBundle& base = fit.design;
  const Index n = base.rows();
  const double mean = base.y.mean();
  const double sd = std::sqrt((base.y.array() - mean).square().sum() / std::max<Index>(n - 1, 1));
  const double h = options.relative_step * (sd > 0.0 ? sd : 1.0);

  FitSettings settings = fit.settings;
  if (options.reestimate) {
    settings.start = fit.parameters;
  } else {
    settings.fixed_parameters = fit.parameters;
    if (base.spec.heteroscedastic) settings.fixed_unit_weights = fit.unit_weights;
  }
  DesignBundle work = base;
  double trace = 0.0;
  for (Index i = 0; i < n; ++i) {
    work.y(i) = base.y(i) + h;
    const double up = fit_amm(work, settings).fitted(i);
    work.y(i) = base.y(i) - h;
    const double down = fit_amm(work, settings).fitted(i);
    work.y(i) = base.y(i);
    trace += (up - down) / (2.0 * h);
  }
  return trace;
}

}  // namespace

CaicReport conditional_aic(const FittedAMM& fit, const CaicOptions& options) {
  if (!fit.converged) {
    CaicReport out = failed_caic("fit did not converge; assigned the worst cAIC");
    out.backend = options.backend;
    return out;
  }
  CaicReport out;
  out.backend = options.backend;
  out.cond_loglik = fit.cond_loglik;
  out.r = error_parameters(fit);
  out.trace = options.backend == TraceBackend::plugin_hat ? fit.total_edf
                                                          : finite_difference_trace(fit, options);
  out.caic = out.recompute();
  return out;
}

}  // namespace panelamm
