#include "panelamm/boosting.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "panelamm/spline.hpp"
#include "parallel.hpp"

namespace panelamm {

namespace {

constexpr int kMaxFoldRedraws = 100;
constexpr double kDfTolerance = 1e-6;

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const auto d = ldlt.vectorD();
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && d.minCoeff() > 1e-12 * d.cwiseAbs().maxCoeff())
    return ldlt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  return M.completeOrthogonalDecomposition().pseudoInverse();
}

// Sets lambda so that the trace hits the target, or the closest attainable
// value. Returns a note when the target is out of reach.
std::optional<std::string> calibrate(BaseLearner& l, double target) {
  const double scale = std::max(l.design.squaredNorm() / std::max(l.penalty.trace(), 1e-300), 1e-300);
  const double lo = std::log(scale * 1e-10), hi = std::log(scale * 1e12);
  auto trace_at = [&](double log_lambda) { return learner_trace(l.design, l.penalty, std::exp(log_lambda)); };
  const double t_lo = trace_at(lo), t_hi = trace_at(hi);
  if (t_lo <= target) {
    l.lambda = 0.0;
    l.df = learner_trace(l.design, l.penalty, 0.0);
    if (std::abs(l.df - target) <= kDfTolerance) return std::nullopt;
    return "learner '" + l.id + "' reaches at most " + format_double(l.df) + " degrees of freedom";
  }
  if (t_hi >= target) {
    l.lambda = std::exp(hi);
    l.df = t_hi;
    if (std::abs(l.df - target) <= kDfTolerance) return std::nullopt;
    return "learner '" + l.id + "' has at least " + format_double(l.df) + " degrees of freedom";
  }
  boost::uintmax_t iterations = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      [&](double x) { return trace_at(x) - target; }, lo, hi, t_lo - target, t_hi - target,
      boost::math::tools::eps_tolerance<double>(50), iterations);
  l.lambda = std::exp(0.5 * (a + b));
  l.df = learner_trace(l.design, l.penalty, l.lambda);
  return std::nullopt;
}

Eigen::MatrixXd unit_block(const PanelDataset& panel, const Eigen::VectorXd& values) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(panel.rows(), panel.n_units());
  for (Index r = 0; r < panel.rows(); ++r) X(r, panel.unit_of_row[r]) = values(r);
  return X;
}

// Penalized fit of one learner under fixed row weights.
struct LearnerSolver {
  const BaseLearner* learner = nullptr;
  Eigen::MatrixXd inverse;  // (X'WX + lambda P)^{-1}

  LearnerSolver(const BaseLearner& l, const Eigen::VectorXd& w) : learner(&l) {
    const Eigen::MatrixXd XtW = l.design.transpose() * w.asDiagonal();
    inverse = pseudo_inverse(XtW * l.design + l.lambda * l.penalty);
  }

  Eigen::VectorXd coefficients(const Eigen::VectorXd& wg) const {
    return inverse * (learner->design.transpose() * wg);
  }
};

// Boosting loop; `observe(m, f, delta)` is called after every iteration.
BoostPath boost_impl(const std::vector<BaseLearner>& learners, const Eigen::VectorXd& y, const BoostOptions& options,
                     const Eigen::VectorXd& w,
                     const std::function<void(int, const Eigen::VectorXd&, double)>& observe = {}) {
  options.validate();
  if (learners.empty()) throw PreconditionError("boosting needs at least one base learner");
  if (w.size() != y.size()) throw DimensionError("weights and response differ in length");
  for (const auto& l : learners)
    if (l.design.rows() != y.size()) throw DimensionError("learner '" + l.id + "' has the wrong row count");

  std::vector<LearnerSolver> solvers;
  solvers.reserve(learners.size());
  for (const auto& l : learners) solvers.emplace_back(l, w);

  BoostPath path;
  path.nu = options.nu;
  for (const auto& l : learners) path.learner_ids.push_back(l.id);
  path.offset = weighted_median(y, w);
  const double wsum = w.sum();
  auto risk = [&](const Eigen::VectorXd& f, double delta) {
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i)
      if (w(i) > 0) s += w(i) * huber_loss(y(i) - f(i), delta);
    return s / wsum;
  };

  Eigen::VectorXd f = Eigen::VectorXd::Constant(y.size(), path.offset);
  for (int m = 1; m <= options.m_max; ++m) {
    HuberGradient hg;
    if (options.fixed_delta) {
      hg.delta = *options.fixed_delta;
      hg.gradient = y - f;
      if (std::isfinite(hg.delta)) hg.gradient = hg.gradient.cwiseMax(-hg.delta).cwiseMin(hg.delta);
    } else {
      hg = huber_gradient(y, f, w);
    }
    const double before = risk(f, hg.delta);
    if (m == 1) path.initial_risk = before;
    const Eigen::VectorXd wg = w.cwiseProduct(hg.gradient);

    std::size_t best = 0;
    double best_sse = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_coef, best_fit;
    for (std::size_t j = 0; j < solvers.size(); ++j) {
      Eigen::VectorXd c = solvers[j].coefficients(wg);
      Eigen::VectorXd fit = learners[j].design * c;
      const double sse = (hg.gradient - fit).cwiseAbs2().dot(w);
      if (sse < best_sse) {
        best = j;
        best_sse = sse;
        best_coef = std::move(c);
        best_fit = std::move(fit);
      }
    }
    f += options.nu * best_fit;
    BoostStep step;
    step.iteration = m;
    step.learner = best;
    step.delta = hg.delta;
    step.risk_before = before;
    step.risk = risk(f, hg.delta);
    step.coefficients = options.nu * best_coef;
    path.steps.push_back(std::move(step));
    if (observe) observe(m, f, hg.delta);
  }
  path.m_stop = options.m_max;
  return path;
}

std::string learner_id(LearnerKind kind, const std::vector<std::string>& cols) {
  switch (kind) {
    case LearnerKind::ridge_categorical: return "ridge(" + cols[0] + ")";
    case LearnerKind::pspline: return "pspline(" + cols[0] + ")";
    case LearnerKind::tensor_pspline: return "tensor(" + cols[0] + "," + cols[1] + ")";
    case LearnerKind::random_intercept: return "unit_intercept";
    case LearnerKind::random_slope: return "unit_slope";
  }
  return "learner";
}

}  // namespace

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::ridge_categorical: return "ridge_categorical";
    case LearnerKind::pspline: return "pspline";
    case LearnerKind::tensor_pspline: return "tensor_pspline";
    case LearnerKind::random_intercept: return "random_intercept";
    case LearnerKind::random_slope: return "random_slope";
  }
  return "unknown";
}

double learner_trace(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty, double lambda) {
  const Eigen::MatrixXd XtX = design.transpose() * design;
  return (pseudo_inverse(XtX + lambda * penalty) * XtX).trace();
}

LearnerSet make_base_learners(const PanelDataset& panel, const LearnerOptions& options) {
  if (!(options.df_target > 0.0)) throw ConfigError("df_target must be positive");
  LearnerSet out;
  const std::set<std::string> excluded(options.exclude.begin(), options.exclude.end());
  auto add = [&](BaseLearner l) {
    if (auto note = calibrate(l, options.df_target)) out.annotations.push_back(*note);
    out.learners.push_back(std::move(l));
  };
  auto usable = [&](const Covariate& c) {
    if (!c.complete()) {
      out.annotations.push_back("column '" + c.name + "' has missing values; no learner");
      return false;
    }
    return true;
  };

  for (const auto& c : panel.covariates) {
    if (excluded.count(c.name) || !usable(c)) continue;
    BaseLearner l;
    l.columns = {c.name};
    if (c.categorical) {
      l.kind = LearnerKind::ridge_categorical;
      l.design = Eigen::MatrixXd::Zero(panel.rows(), static_cast<Index>(c.levels.size()));
      for (Index r = 0; r < panel.rows(); ++r) l.design(r, c.codes[r]) = 1.0;
      std::vector<Index> used;
      for (Index j = 0; j < l.design.cols(); ++j)
        if (l.design.col(j).sum() > 0) used.push_back(j);
      if (used.size() < 2) {
        out.annotations.push_back("column '" + c.name + "' is constant; no learner");
        continue;
      }
      l.design = Eigen::MatrixXd(l.design(Eigen::all, used));
      l.penalty = Eigen::MatrixXd::Identity(l.design.cols(), l.design.cols());
    } else {
      l.kind = LearnerKind::pspline;
      try {
        auto block = make_pspline(c.values, options.spline_k);
        l.design = std::move(block.design);
        l.penalty = std::move(block.penalty);
      } catch (const DomainError&) {
        out.annotations.push_back("column '" + c.name + "' is constant; no learner");
        continue;
      }
      l.k1 = options.spline_k;
    }
    l.id = learner_id(l.kind, l.columns);
    add(std::move(l));
  }

  for (const auto& [a, b] : options.tensor_pairs) {
    const Covariate& ca = panel.column(a);
    const Covariate& cb = panel.column(b);
    if (ca.categorical || cb.categorical)
      throw ConfigError("tensor pair (" + a + ", " + b + ") needs numeric columns");
    if (!usable(ca) || !usable(cb)) continue;
    BaseLearner l;
    l.kind = LearnerKind::tensor_pspline;
    l.columns = {a, b};
    l.id = learner_id(l.kind, l.columns);
    l.k1 = l.k2 = options.tensor_k;
    try {
      const auto t = tensor_product(make_pspline(ca.values, options.tensor_k), make_pspline(cb.values, options.tensor_k));
      // Keep the penalized part: the null space (bilinear functions) would
      // otherwise hold the trace above small targets.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t.penalties[0] + t.penalties[1]);
      const auto& ev = eig.eigenvalues();
      std::vector<Index> keep;
      for (Index j = 0; j < ev.size(); ++j)
        if (ev(j) > kNullSpaceCutoff * ev.maxCoeff()) keep.push_back(j);
      const Eigen::MatrixXd U = eig.eigenvectors()(Eigen::all, keep);
      l.design = t.design * U;
      l.penalty = ev(keep).asDiagonal();
    } catch (const DomainError&) {
      out.annotations.push_back("tensor pair (" + a + ", " + b + ") has a constant margin; no learner");
      continue;
    }
    add(std::move(l));
  }

  if (options.unit_learners && panel.n_units() >= 2) {
    BaseLearner icpt;
    icpt.kind = LearnerKind::random_intercept;
    icpt.id = learner_id(icpt.kind, {});
    icpt.design = unit_block(panel, Eigen::VectorXd::Ones(panel.rows()));
    icpt.penalty = Eigen::MatrixXd::Identity(panel.n_units(), panel.n_units());
    add(std::move(icpt));
    if (panel.years.size() >= 2) {
      BaseLearner slope;
      slope.kind = LearnerKind::random_slope;
      slope.id = learner_id(slope.kind, {});
      slope.design = unit_block(panel, panel.time_index());
      slope.penalty = Eigen::MatrixXd::Identity(panel.n_units(), panel.n_units());
      add(std::move(slope));
    }
  }
  return out;
}

double huber_loss(double residual, double delta) {
  const double a = std::abs(residual);
  if (a <= delta) return 0.5 * residual * residual;
  return delta * (a - 0.5 * delta);
}

HuberGradient huber_gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& f) {
  return huber_gradient(y, f, Eigen::VectorXd::Ones(y.size()));
}

HuberGradient huber_gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Eigen::VectorXd& weights) {
  if (y.size() != f.size()) throw DimensionError("response and fit differ in length");
  const Eigen::VectorXd r = y - f;
  HuberGradient out;
  out.delta = weighted_median(r.cwiseAbs(), weights);
  out.gradient = r.cwiseMax(-out.delta).cwiseMin(out.delta);
  return out;
}

BoostOptions BoostOptions::from_json(const nlohmann::json& j) {
  BoostOptions o;
  if (!j.is_object()) throw ConfigError("boost config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "nu") o.nu = value.get<double>();
      else if (key == "m_max") o.m_max = value.get<int>();
      else if (key == "folds") o.folds = value.get<int>();
      else if (key == "df_target") o.learners.df_target = value.get<double>();
      else if (key == "threshold") o.threshold = value.get<double>();
      else if (key == "seed") o.seed = value.get<std::uint64_t>();
      else if (key == "spline_k") o.learners.spline_k = value.get<int>();
      else if (key == "tensor_k") o.learners.tensor_k = value.get<int>();
      else if (key == "exclude") o.learners.exclude = value.get<std::vector<std::string>>();
      else if (key == "unit_learners") o.learners.unit_learners = value.get<bool>();
      else if (key == "tensor_pairs") {
        for (const auto& p : value) {
          if (p.is_array() && p.size() == 2) o.learners.tensor_pairs.emplace_back(p[0], p[1]);
          else if (p.is_object()) o.learners.tensor_pairs.emplace_back(p.at("col1"), p.at("col2"));
          else throw ConfigError("tensor pair must be [col1, col2] or {col1, col2}");
        }
      } else {
        throw ConfigError("unknown boost config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed boost config: ") + e.what());
  }
  o.validate();
  return o;
}

nlohmann::json BoostOptions::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : learners.tensor_pairs) pairs.push_back({a, b});
  return {{"nu", nu},
          {"m_max", m_max},
          {"folds", folds},
          {"df_target", learners.df_target},
          {"threshold", threshold},
          {"seed", seed},
          {"spline_k", learners.spline_k},
          {"tensor_k", learners.tensor_k},
          {"exclude", learners.exclude},
          {"unit_learners", learners.unit_learners},
          {"tensor_pairs", pairs}};
}

void BoostOptions::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
  if (m_max <= 0) throw ConfigError("m_max must be positive");
  if (folds < 1) throw ConfigError("folds must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (!(learners.df_target > 0.0)) throw ConfigError("df_target must be positive");
  if (learners.spline_k < 4 || learners.tensor_k < 4) throw ConfigError("basis dimensions must be at least 4");
  if (fixed_delta && !(*fixed_delta > 0.0)) throw ConfigError("fixed delta must be positive");
}

std::vector<int> BoostPath::selection_counts(int m) const {
  std::vector<int> counts(learner_ids.size(), 0);
  for (const auto& s : steps)
    if (s.iteration <= m) ++counts[s.learner];
  return counts;
}

std::vector<Eigen::VectorXd> BoostPath::coefficients(const std::vector<BaseLearner>& learners, int m) const {
  std::vector<Eigen::VectorXd> out;
  for (const auto& l : learners) out.push_back(Eigen::VectorXd::Zero(l.design.cols()));
  for (const auto& s : steps)
    if (s.iteration <= m) out[s.learner] += s.coefficients;
  return out;
}

Eigen::VectorXd BoostPath::fitted(const std::vector<BaseLearner>& learners, int m) const {
  const auto coefs = coefficients(learners, m);
  Eigen::VectorXd f = Eigen::VectorXd::Constant(learners.front().design.rows(), offset);
  for (std::size_t j = 0; j < learners.size(); ++j) f += learners[j].design * coefs[j];
  return f;
}

void BoostPath::truncate(int m) {
  if (m < 0 || m > static_cast<int>(steps.size()))
    throw PreconditionError("cannot truncate a path of " + std::to_string(steps.size()) + " steps at " +
                            std::to_string(m));
  steps.resize(static_cast<std::size_t>(m));
  m_stop = m;
}

Table BoostPath::path_table() const {
  Table t;
  t.header = {"iteration", "learner", "delta", "risk_before", "risk"};
  t.add_row({"0", "offset", "", "", format_double(initial_risk)});
  for (const auto& s : steps)
    t.add_row({std::to_string(s.iteration), learner_ids[s.learner], format_double(s.delta),
               format_double(s.risk_before), format_double(s.risk)});
  return t;
}

Table BoostPath::fold_risk_table() const {
  Table t;
  t.header = {"iteration", "mean"};
  for (std::size_t f = 0; f < fold_risks.size(); ++f) t.header.push_back("fold_" + std::to_string(f + 1));
  for (std::size_t m = 0; m < mean_fold_risk.size(); ++m) {
    std::vector<std::string> row = {std::to_string(m), format_double(mean_fold_risk[m])};
    for (const auto& fr : fold_risks) row.push_back(format_double(fr[m]));
    t.add_row(std::move(row));
  }
  return t;
}

BoostPath boost(const std::vector<BaseLearner>& learners, const Eigen::VectorXd& y, const BoostOptions& options,
                const std::optional<Eigen::VectorXd>& weights) {
  return boost_impl(learners, y, options, weights ? *weights : Eigen::VectorXd::Ones(y.size()));
}

std::vector<Eigen::VectorXd> bootstrap_folds(const PanelDataset& panel, int folds, std::uint64_t seed) {
  if (folds < 1) throw ConfigError("folds must be at least 1");
  std::vector<std::vector<Index>> rows_of(panel.units.size());
  for (Index r = 0; r < panel.rows(); ++r) rows_of[panel.unit_of_row[r]].push_back(r);
  for (const auto& rows : rows_of)
    if (rows.size() < 2) throw PreconditionError("bootstrap folds need at least two observations per unit");

  std::vector<Eigen::VectorXd> out;
  for (int f = 0; f < folds; ++f) {
    bool drawn = false;
    for (int attempt = 0; attempt <= kMaxFoldRedraws && !drawn; ++attempt) {
      std::vector<std::uint64_t> key = {seed, static_cast<std::uint64_t>(f)};
      if (attempt > 0) key.push_back(static_cast<std::uint64_t>(attempt));
      std::seed_seq seq(key.begin(), key.end());
      std::mt19937_64 rng(seq);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(panel.rows());
      for (const auto& rows : rows_of) {
        std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
        for (std::size_t d = 0; d < rows.size(); ++d) w(rows[pick(rng)]) += 1.0;
      }
      if ((w.array() == 0.0).any()) {
        out.push_back(std::move(w));
        drawn = true;
      }
    }
    if (!drawn) throw NumericError("could not draw a bootstrap fold with out-of-bag rows");
  }
  return out;
}

MstopChoice choose_mstop(const std::vector<BaseLearner>& learners, const Eigen::VectorXd& y,
                         const std::vector<Eigen::VectorXd>& folds, const BoostOptions& options) {
  if (folds.empty()) throw PreconditionError("no bootstrap folds");
  MstopChoice out;
  out.fold_risks.assign(folds.size(), std::vector<double>(static_cast<std::size_t>(options.m_max) + 1, 0.0));
  detail::parallel_for(folds.size(), options.jobs, [&](std::size_t k) {
    const Eigen::VectorXd& w = folds[k];
    std::vector<Index> oob;
    for (Index i = 0; i < w.size(); ++i)
      if (w(i) == 0.0) oob.push_back(i);
    if (oob.empty()) throw PreconditionError("fold " + std::to_string(k + 1) + " has no out-of-bag rows");
    // Huber risk of the out-of-bag residuals at their own median absolute
    // residual, so that risks at different m share one scale rule.
    auto oob_risk = [&](const Eigen::VectorXd& f) {
      Eigen::VectorXd r(static_cast<Index>(oob.size()));
      for (std::size_t j = 0; j < oob.size(); ++j) r(static_cast<Index>(j)) = y(oob[j]) - f(oob[j]);
      const double delta = weighted_median(r.cwiseAbs(), Eigen::VectorXd::Ones(r.size()));
      double s = 0.0;
      for (Index j = 0; j < r.size(); ++j) s += huber_loss(r(j), delta);
      return s / static_cast<double>(r.size());
    };
    auto& risks = out.fold_risks[k];
    risks[0] = oob_risk(Eigen::VectorXd::Constant(y.size(), weighted_median(y, w)));
    boost_impl(learners, y, options, w, [&](int m, const Eigen::VectorXd& f, double) {
      risks[static_cast<std::size_t>(m)] = oob_risk(f);
    });
  });
  out.mean_risk.assign(static_cast<std::size_t>(options.m_max) + 1, 0.0);
  for (const auto& r : out.fold_risks)
    for (std::size_t m = 0; m < r.size(); ++m) out.mean_risk[m] += r[m] / static_cast<double>(folds.size());
  out.m_stop = static_cast<int>(std::min_element(out.mean_risk.begin(), out.mean_risk.end()) - out.mean_risk.begin());
  return out;
}

Table DistilledSpec::frequency_table(const std::vector<std::string>& learner_ids) const {
  Table t;
  t.header = {"learner", "frequency", "kept"};
  for (std::size_t j = 0; j < learner_ids.size(); ++j) {
    const bool k = std::find(kept.begin(), kept.end(), learner_ids[j]) != kept.end();
    t.add_row({learner_ids[j], format_double(frequencies[j]), k ? "1" : "0"});
  }
  return t;
}

DistilledSpec distill(const BoostPath& path, const std::vector<BaseLearner>& learners, double threshold,
                      const std::string& label) {
  if (learners.size() != path.learner_ids.size()) throw DimensionError("path and learner set differ");
  if (path.m_stop <= 0) throw PreconditionError("m_stop is 0: no learner was selected");
  if (path.m_stop > static_cast<int>(path.steps.size()))
    throw PreconditionError("path records fewer iterations than m_stop");
  DistilledSpec out;
  out.threshold = threshold;
  out.m_stop = path.m_stop;
  out.spec.label = label;
  out.spec.effects = EffectsMode::fixed;
  const auto counts = path.selection_counts(path.m_stop);
  for (std::size_t j = 0; j < learners.size(); ++j) {
    const double freq = static_cast<double>(counts[j]) / path.m_stop;
    out.frequencies.push_back(freq);
    if (counts[j] == 0 || freq < threshold) continue;
    const auto& l = learners[j];
    out.kept.push_back(l.id);
    switch (l.kind) {
      case LearnerKind::ridge_categorical: out.spec.linear.push_back(l.columns[0]); break;
      case LearnerKind::pspline: out.spec.smooth.push_back({l.columns[0], l.k1}); break;
      case LearnerKind::tensor_pspline:
        out.spec.tensor_pairs.push_back({l.columns[0], l.columns[1], l.k1, l.k2});
        break;
      case LearnerKind::random_intercept:
      case LearnerKind::random_slope: out.annotations.push_back("'" + l.id + "' selected: unit effects kept"); break;
    }
  }
  if (out.kept.empty()) throw PreconditionError("no learner reaches the selection threshold");
  return out;
}

BoostingRun run_boosting(const PanelDataset& panel, const BoostOptions& options) {
  options.validate();
  BoostingRun run;
  run.learners = make_base_learners(panel, options.learners);
  run.annotations = run.learners.annotations;
  const auto& learners = run.learners.learners;
  if (learners.empty()) throw PreconditionError("no base learners could be built");

  const auto folds = bootstrap_folds(panel, options.folds, options.seed);
  MstopChoice choice = choose_mstop(learners, panel.response, folds, options);

  BoostOptions full = options;
  full.m_max = std::max(choice.m_stop, 1);
  run.path = boost(learners, panel.response, full);
  run.path.truncate(choice.m_stop);
  run.path.fold_risks = std::move(choice.fold_risks);
  run.path.mean_fold_risk = std::move(choice.mean_risk);
  try {
    run.distilled = distill(run.path, learners, options.threshold);
  } catch (const PreconditionError& e) {
    run.annotations.push_back(std::string("boosting selected no model: ") + e.what());
  }
  return run;
}

}  // namespace panelamm
