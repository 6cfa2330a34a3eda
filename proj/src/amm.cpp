#include "panelamm/amm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "panelamm/stats.hpp"

namespace panelamm {

namespace {

constexpr double kLogLambdaLower = -15.0;
constexpr double kLogLambdaUpper = 20.0;
constexpr double kLogSdLower = -8.0;  // relative to the intercept sd and the time span
constexpr double kLogSdUpper = 10.0;
constexpr double kOffDiagonalBound = 100.0;
constexpr double kDependenceTolerance = 1e-9;
constexpr double kStallGradient = 1e-4;
constexpr double kLog2Pi = 1.8378770664093454836;

// One smoothing parameter: a penalty on a contiguous engine block.
struct SmoothingParameter {
  Index offset = 0;   // engine column
  Index size = 0;
  Eigen::MatrixXd S;  // scaled penalty in engine coordinates
  double scale = 1.0; // model lambda = exp(rho) * scale
  int block = 0;
  std::string name;
};

struct PenaltyBlock {
  Index offset = 0;
  Index size = 0;
  std::vector<int> parameters;
};

struct Evaluation {
  double f = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd c;       // engine coefficients
  Eigen::MatrixXd H_inv;   // filled on request
  double sigma2 = 0.0;
  bool jittered = false;
};

Eigen::Matrix2d lower_factor(const Eigen::Vector3d& th) {
  Eigen::Matrix2d L;
  L << std::exp(th(0)), 0.0, th(1), std::exp(th(2));
  return L;
}

// Penalized weighted least squares and the profiled REML / ML criterion in a
// basis where the unpenalized columns come first and are linearly
// independent.
class Engine {
 public:
  Engine(const DesignBundle& d, Criterion criterion, FittedAMM& fit) : criterion_(criterion) {
    n_ = d.rows();
    y_ = d.y;
    build_basis(d, fit);
  }

  Index n_params() const {
    return static_cast<Index>(params_.size()) + (random_ ? 3 : 0);
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p.name);
    if (random_) {
      out.push_back("log_psi_intercept");
      out.push_back("psi_cross");
      out.push_back("log_psi_slope");
    }
    return out;
  }

  Eigen::VectorXd lower_bounds() const {
    Eigen::VectorXd lo(n_params());
    for (std::size_t k = 0; k < params_.size(); ++k) lo(k) = kLogLambdaLower;
    if (random_) lo.tail(3) << kLogSdLower, -kOffDiagonalBound, kLogSdLower - log_span_;
    return lo;
  }

  Eigen::VectorXd upper_bounds() const {
    Eigen::VectorXd hi(n_params());
    for (std::size_t k = 0; k < params_.size(); ++k) hi(k) = kLogLambdaUpper;
    if (random_) hi.tail(3) << kLogSdUpper, kOffDiagonalBound, kLogSdUpper;
    return hi;
  }

  void set_time_span(double t_span) { log_span_ = std::log(std::max(1.0, t_span)); }

  Eigen::VectorXd initial() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_params());
    if (random_) x.tail(3) << 0.0, 0.0, -log_span_;
    return x;
  }

  void set_row_weights(const Eigen::VectorXd& w) {
    w_ = w;
    const Eigen::MatrixXd WX = w.asDiagonal() * Xe_;
    XtWX_ = Xe_.transpose() * WX;
    XtWX_ = 0.5 * (XtWX_ + XtWX_.transpose()).eval();
    XtWy_ = WX.transpose() * y_;
    sum_log_w_ = w.array().log().sum();
  }

  // Unit effects enter as b_u = L v_u with v_u ~ N(0, sigma^2 I), Psi = L L',
  // which keeps the system well conditioned as Psi approaches singularity.
  // Returned coefficients and inverse are in the b coordinates.
  Evaluation evaluate(const Eigen::VectorXd& x, bool gradient, bool full_inverse) const {
    Evaluation ev;
    const Index pe = Xe_.cols();
    const Index pr = pe - mp_;
    const Index nb = 2 * n_units_;
    const Index uo = unit_offset_;

    Eigen::Matrix2d L = Eigen::Matrix2d::Identity();
    Eigen::MatrixXd B = XtWX_;  // D' XtWX
    Eigen::VectorXd rhs = XtWy_;
    if (random_) {
      L = lower_factor(x.tail<3>());
      for (Index u = 0; u < n_units_; ++u) {
        B.middleRows(uo + 2 * u, 2) = (L.transpose() * B.middleRows(uo + 2 * u, 2)).eval();
        rhs.segment<2>(uo + 2 * u) = L.transpose() * rhs.segment<2>(uo + 2 * u);
      }
    }
    Eigen::MatrixXd H = B;  // D' XtWX D + penalties
    if (random_)
      for (Index u = 0; u < n_units_; ++u) H.middleCols(uo + 2 * u, 2) = (H.middleCols(uo + 2 * u, 2) * L).eval();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(pe, pe);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k];
      S.block(p.offset, p.offset, p.size, p.size) += std::exp(x(k)) * p.S;
    }
    H += S;
    H.diagonal().segment(uo, nb).array() += 1.0;
    H = 0.5 * (H + H.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(H);
    double jitter = 1e-10 * std::max(1.0, H.diagonal().mean());
    for (int attempt = 0; llt.info() != Eigen::Success && attempt < 12; ++attempt) {
      H.diagonal().array() += jitter;
      jitter *= 10.0;
      llt.compute(H);
      ev.jittered = true;
    }
    if (llt.info() != Eigen::Success) throw NumericError("penalized normal equations are singular");

    const Eigen::VectorXd cv = llt.solve(rhs);
    ev.c = cv;
    for (Index u = 0; u < n_units_; ++u) ev.c.segment<2>(uo + 2 * u) = L * cv.segment<2>(uo + 2 * u);
    const Eigen::VectorXd resid = y_ - Xe_ * ev.c;
    const double rss = resid.cwiseAbs2().dot(w_);
    const double pen = cv.dot(S * cv) + cv.segment(uo, nb).squaredNorm();
    const double Dp = std::max(rss + pen, std::numeric_limits<double>::min());
    const double nu = criterion_ == Criterion::reml ? static_cast<double>(n_ - mp_) : static_cast<double>(n_);
    ev.sigma2 = Dp / nu;

    double log_det_H = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_rr;
    if (criterion_ == Criterion::reml) {
      log_det_H = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    } else if (pr > 0) {
      llt_rr.compute(H.bottomRightCorner(pr, pr));
      if (llt_rr.info() != Eigen::Success) throw NumericError("penalized block is singular");
      log_det_H = 2.0 * Eigen::MatrixXd(llt_rr.matrixL()).diagonal().array().log().sum();
    }

    double log_det_S = 0.0;
    std::vector<Eigen::MatrixXd> block_inv(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& blk = blocks_[b];
      Eigen::LLT<Eigen::MatrixXd> sl(S.block(blk.offset, blk.offset, blk.size, blk.size));
      if (sl.info() != Eigen::Success) throw NumericError("penalty block is not positive definite");
      log_det_S += 2.0 * Eigen::MatrixXd(sl.matrixL()).diagonal().array().log().sum();
      if (gradient) block_inv[b] = sl.solve(Eigen::MatrixXd::Identity(blk.size, blk.size));
    }

    ev.f = 0.5 * (nu * (kLog2Pi + std::log(ev.sigma2)) + nu + log_det_H - log_det_S - sum_log_w_);

    Eigen::MatrixXd Hv_inv;
    if (full_inverse || (gradient && criterion_ == Criterion::reml))
      Hv_inv = llt.solve(Eigen::MatrixXd::Identity(pe, pe));
    if (full_inverse) {
      ev.H_inv = Hv_inv;
      for (Index u = 0; u < n_units_; ++u) {
        ev.H_inv.middleRows(uo + 2 * u, 2) = (L * ev.H_inv.middleRows(uo + 2 * u, 2)).eval();
        ev.H_inv.middleCols(uo + 2 * u, 2) = (ev.H_inv.middleCols(uo + 2 * u, 2) * L.transpose()).eval();
      }
    }
    if (!gradient) return ev;

    // Traces use the inverse of H restricted to the penalized block: for REML
    // the corresponding block of H^{-1}, for ML the inverse of H_rr.
    Eigen::MatrixXd M;
    if (criterion_ == Criterion::reml) M = Hv_inv.bottomRightCorner(pr, pr);
    else M = llt_rr.solve(Eigen::MatrixXd::Identity(pr, pr));

    ev.gradient.resize(n_params());
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k];
      const double lam = std::exp(x(k));
      const auto cb = cv.segment(p.offset, p.size);
      const auto& blk = blocks_[p.block];
      const Eigen::MatrixXd& Sinv = block_inv[p.block];
      const Index within = p.offset - blk.offset;
      const double tr_H = M.block(p.offset - mp_, p.offset - mp_, p.size, p.size).cwiseProduct(p.S).sum();
      const double tr_S = Sinv.block(within, within, p.size, p.size).cwiseProduct(p.S).sum();
      ev.gradient(k) = 0.5 * lam * (cb.dot(p.S * cb) / ev.sigma2 + tr_H - tr_S);
    }
    if (random_) {
      // d log|H| = 2 sum_u tr(K_uu dL) with K = M D' XtWX over the unit
      // columns; dD_p = -2 sum_u g_u' dL v_u with g = Z' W r.
      const Eigen::MatrixXd Bu = B.middleCols(uo, nb);
      const Eigen::MatrixXd K = criterion_ == Criterion::reml
                                    ? Eigen::MatrixXd(Hv_inv.middleRows(uo, nb) * Bu)
                                    : Eigen::MatrixXd(M.middleRows(uo - mp_, nb) * Bu.bottomRows(pr));
      const Eigen::VectorXd g = Xe_.middleCols(uo, nb).transpose() * w_.cwiseProduct(resid);
      const Eigen::Index base = static_cast<Index>(params_.size());
      for (int i = 0; i < 3; ++i) {
        Eigen::Matrix2d dL = Eigen::Matrix2d::Zero();
        if (i == 0) dL(0, 0) = L(0, 0);
        if (i == 1) dL(1, 0) = 1.0;
        if (i == 2) dL(1, 1) = L(1, 1);
        double dDp = 0.0, dlogdet = 0.0;
        for (Index u = 0; u < n_units_; ++u) {
          const Index o = 2 * u;
          dDp += -2.0 * g.segment<2>(o).dot(dL * cv.segment<2>(uo + o));
          dlogdet += 2.0 * K.block<2, 2>(o, o).transpose().cwiseProduct(dL).sum();
        }
        ev.gradient(base + i) = 0.5 * (nu * dDp / Dp + dlogdet);
      }
    }
    return ev;
  }

  const Eigen::MatrixXd& Xe() const { return Xe_; }
  const Eigen::MatrixXd& T() const { return T_; }
  const Eigen::MatrixXd& XtWX() const { return XtWX_; }
  const std::vector<int>& term_of_column() const { return term_of_col_; }
  Index unpenalized() const { return mp_; }
  bool random() const { return random_; }
  const std::vector<SmoothingParameter>& smoothing() const { return params_; }

 private:
  void build_basis(const DesignBundle& d, FittedAMM& fit) {
    struct Piece {
      int term;
      Eigen::VectorXd v;  // term-local coordinates
      std::string name;
    };
    std::vector<Piece> candidates;
    std::vector<std::vector<Piece>> penalized(d.terms.size());
    std::vector<Eigen::MatrixXd> ranges(d.terms.size());

    auto unit_vec = [](Index n, Index j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e(j) = 1.0;
      return e;
    };

    // Unit fixed effects enter the dependence scan first so that
    // time-invariant regressors, not unit dummies, are the ones dropped.
    for (std::size_t j = 0; j < d.terms.size(); ++j) {
      const auto& t = d.terms[j];
      if (t.kind != TermKind::unit_fixed) continue;
      for (Index c = 0; c < t.cols; ++c)
        candidates.push_back({static_cast<int>(j), unit_vec(t.cols, c),
                              d.units[c / 2] + (c % 2 ? ":t" : ":(1)")});
    }
    for (std::size_t j = 0; j < d.terms.size(); ++j) {
      const auto& t = d.terms[j];
      switch (t.kind) {
        case TermKind::unit_fixed:
          break;
        case TermKind::intercept:
        case TermKind::linear:
        case TermKind::mundlak_mean:
          for (Index c = 0; c < t.cols; ++c)
            candidates.push_back({static_cast<int>(j), unit_vec(t.cols, c),
                                  t.kind == TermKind::intercept ? t.name : t.linear[c].name});
          break;
        case TermKind::smooth:
        case TermKind::tensor: {
          Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(t.cols, t.cols);
          for (const auto& P : t.penalties) sum += P / P.norm();
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sum);
          const double top = eig.eigenvalues().maxCoeff();
          Index nd = 0;
          while (nd < t.cols && eig.eigenvalues()(nd) < kNullSpaceCutoff * top) ++nd;
          for (Index c = 0; c < nd; ++c)
            candidates.push_back({static_cast<int>(j), eig.eigenvectors().col(c),
                                  t.name + "[null " + std::to_string(c + 1) + "]"});
          ranges[j] = eig.eigenvectors().rightCols(t.cols - nd);
          break;
        }
        case TermKind::unit_random:
          random_ = true;
          n_units_ = t.cols / 2;
          break;
      }
    }

    // Order-respecting dependence scan (modified Gram-Schmidt, twice).
    std::vector<Piece> kept;
    Eigen::MatrixXd Q(n_, 0);
    for (auto& cand : candidates) {
      const auto& t = d.terms[cand.term];
      Eigen::VectorXd v = d.X.middleCols(t.first, t.cols) * cand.v;
      const double norm = v.norm();
      bool keep = norm > 0.0;
      if (keep) {
        v /= norm;
        for (int pass = 0; pass < 2 && Q.cols() > 0; ++pass) v -= Q * (Q.transpose() * v);
        keep = v.norm() > kDependenceTolerance;
      }
      if (!keep) {
        fit.dropped_columns.push_back(cand.name);
        if (t.kind == TermKind::mundlak_mean) ++fit.dropped_mundlak;
        continue;
      }
      Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
      Q.col(Q.cols() - 1) = v / v.norm();
      kept.push_back(std::move(cand));
    }
    if (!fit.dropped_columns.empty()) {
      std::string msg = "linearly dependent unpenalized columns dropped:";
      for (const auto& c : fit.dropped_columns) msg += " " + c;
      fit.annotations.push_back(msg);
    }
    // Keep model order among the retained unpenalized columns.
    std::stable_sort(kept.begin(), kept.end(), [&](const Piece& a, const Piece& b) {
      return d.terms[a.term].first < d.terms[b.term].first;
    });
    mp_ = static_cast<Index>(kept.size());
    if (n_ <= mp_)
      throw PreconditionError("model has " + std::to_string(mp_) + " unpenalized parameters for " +
                              std::to_string(n_) + " observations");

    // Engine layout: unpenalized columns, then penalized ranges, then units.
    Index pe = mp_;
    for (std::size_t j = 0; j < d.terms.size(); ++j) {
      const auto& t = d.terms[j];
      if (t.kind == TermKind::smooth || t.kind == TermKind::tensor) pe += ranges[j].cols();
      if (t.kind == TermKind::unit_random) pe += t.cols;
    }
    T_ = Eigen::MatrixXd::Zero(d.cols(), pe);
    Xe_.resize(n_, pe);
    term_of_col_.assign(pe, -1);
    Index e = 0;
    for (const auto& k : kept) {
      const auto& t = d.terms[k.term];
      T_.col(e).segment(t.first, t.cols) = k.v;
      Xe_.col(e) = d.X.middleCols(t.first, t.cols) * k.v;
      term_of_col_[e] = k.term;
      ++e;
    }
    for (std::size_t j = 0; j < d.terms.size(); ++j) {
      const auto& t = d.terms[j];
      if (t.kind == TermKind::smooth || t.kind == TermKind::tensor) {
        const Eigen::MatrixXd& R = ranges[j];
        const Index r = R.cols();
        if (r == 0) continue;
        T_.block(t.first, e, t.cols, r) = R;
        Xe_.middleCols(e, r) = d.X.middleCols(t.first, t.cols) * R;
        const double data_scale = (Xe_.middleCols(e, r).transpose() * Xe_.middleCols(e, r)).norm();
        PenaltyBlock blk{e, r, {}};
        for (std::size_t m = 0; m < t.penalties.size(); ++m) {
          SmoothingParameter p;
          p.offset = e;
          p.size = r;
          const Eigen::MatrixXd Se = R.transpose() * t.penalties[m] * R;
          p.scale = data_scale > 0.0 ? data_scale / Se.norm() : 1.0;
          p.S = p.scale * Se;
          p.S = 0.5 * (p.S + p.S.transpose()).eval();
          p.block = static_cast<int>(blocks_.size());
          p.name = "log_lambda[" + t.name + (t.penalties.size() > 1 ? "#" + std::to_string(m + 1) : "") + "]";
          blk.parameters.push_back(static_cast<int>(params_.size()));
          params_.push_back(std::move(p));
        }
        blocks_.push_back(blk);
        for (Index c = 0; c < r; ++c) term_of_col_[e + c] = static_cast<int>(j);
        e += r;
      }
    }
    for (std::size_t j = 0; j < d.terms.size(); ++j) {
      const auto& t = d.terms[j];
      if (t.kind != TermKind::unit_random) continue;
      unit_offset_ = e;
      T_.block(t.first, e, t.cols, t.cols).setIdentity();
      Xe_.middleCols(e, t.cols) = d.X.middleCols(t.first, t.cols);
      for (Index c = 0; c < t.cols; ++c) term_of_col_[e + c] = static_cast<int>(j);
      e += t.cols;
    }
  }

  Criterion criterion_;
  Index n_ = 0;
  Index mp_ = 0;
  Eigen::VectorXd y_;
  Eigen::MatrixXd Xe_;
  Eigen::MatrixXd T_;
  std::vector<int> term_of_col_;
  std::vector<SmoothingParameter> params_;
  std::vector<PenaltyBlock> blocks_;
  bool random_ = false;
  double log_span_ = 0.0;
  Index n_units_ = 0;
  Index unit_offset_ = 0;

  Eigen::VectorXd w_;
  Eigen::MatrixXd XtWX_;
  Eigen::VectorXd XtWy_;
  double sum_log_w_ = 0.0;
};

struct OptimResult {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> trace;
  std::string note;
};

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Index i = 0; i < x.size(); ++i)
    if ((x(i) <= lo(i) && g(i) > 0) || (x(i) >= hi(i) && g(i) < 0)) pg(i) = 0.0;
  return pg;
}

// Box-constrained BFGS with a monotone backtracking line search: a step is
// accepted only if it does not increase the objective.
OptimResult minimize(const Engine& engine, Eigen::VectorXd x, const FitSettings& settings) {
  OptimResult out;
  const Eigen::VectorXd lo = engine.lower_bounds(), hi = engine.upper_bounds();
  const Index m = x.size();
  x = project(x, lo, hi);
  Evaluation ev = engine.evaluate(x, true, false);
  out.trace.push_back(ev.f);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(m, m);
  bool fresh = true;
  for (out.iterations = 0; out.iterations < settings.max_iterations; ++out.iterations) {
    const Eigen::VectorXd pg = projected_gradient(x, ev.gradient, lo, hi);
    out.gradient_norm = pg.cwiseAbs().maxCoeff();
    if (out.gradient_norm < settings.gradient_tolerance) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    std::vector<Index> free;
    for (Index i = 0; i < m; ++i)
      if (pg(i) != 0.0) free.push_back(i);
    for (Index a : free)
      for (Index b : free) d(a) -= B(a, b) * ev.gradient(b);
    if (ev.gradient.dot(d) >= 0.0) {
      B.setIdentity();
      fresh = true;
      d = -pg;
    }
    const double longest = d.cwiseAbs().maxCoeff();
    if (longest > 5.0) d *= 5.0 / longest;

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    Evaluation ev_new;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      x_new = project(x + alpha * d, lo, hi);
      if ((x_new - x).cwiseAbs().maxCoeff() == 0.0) break;
      ev_new = engine.evaluate(x_new, false, false);
      if (!std::isfinite(ev_new.f)) continue;
      if (ev_new.f <= ev.f + 1e-4 * ev.gradient.dot(x_new - x) && ev_new.f <= ev.f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {
        B.setIdentity();
        fresh = true;
        continue;
      }
      out.note = "line search stalled";
      out.converged = out.gradient_norm < kStallGradient;
      break;
    }
    ev_new = engine.evaluate(x_new, true, false);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = ev_new.gradient - ev.gradient;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (fresh) B *= sy / yv.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
      B = (I - rho * s * yv.transpose()) * B * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    }
    x = x_new;
    ev = std::move(ev_new);
    out.trace.push_back(ev.f);
  }
  if (out.iterations >= settings.max_iterations) {
    const Eigen::VectorXd pg = projected_gradient(x, ev.gradient, lo, hi);
    out.gradient_norm = pg.cwiseAbs().maxCoeff();
    out.converged = out.gradient_norm < settings.gradient_tolerance;
  }
  out.x = x;
  return out;
}

Eigen::VectorXd expand_unit_weights(const DesignBundle& d, const Eigen::VectorXd& wu) {
  Eigen::VectorXd w(d.rows());
  for (Index r = 0; r < d.rows(); ++r) w(r) = wu(d.unit_of_row[r]);
  return w;
}

std::string column_name(const DesignBundle& d, const TermDesign& t, Index c) {
  switch (t.kind) {
    case TermKind::intercept: return t.name;
    case TermKind::linear:
    case TermKind::mundlak_mean: return t.linear[c].name;
    case TermKind::unit_fixed:
    case TermKind::unit_random: return t.name + "[" + d.units[c / 2] + (c % 2 ? ":t]" : ":(1)]");
    default: return t.name + "[" + std::to_string(c + 1) + "]";
  }
}

}  // namespace

FittedAMM fit_amm(const DesignBundle& design, const FitSettings& settings) {
  FittedAMM fit;
  fit.design = design;
  fit.settings = settings;
  fit.annotations = design.annotations;
  const Index n = design.rows();
  const Index n_units = design.n_units();
  Engine engine(design, settings.criterion, fit);
  fit.unpenalized_rank = engine.unpenalized();
  fit.parameter_names = engine.parameter_names();

  const bool hetero = design.spec.heteroscedastic && n_units > 1;
  Eigen::VectorXd wu = Eigen::VectorXd::Ones(n_units);
  if (settings.fixed_unit_weights) {
    if (settings.fixed_unit_weights->size() != n_units)
      throw DimensionError("fixed unit weights need one entry per unit");
    wu = *settings.fixed_unit_weights;
  }
  const double t_span = design.t.size() ? design.t.maxCoeff() : 1.0;
  engine.set_time_span(t_span);
  Eigen::VectorXd x = settings.start ? *settings.start : engine.initial();
  if (x.size() != engine.n_params()) x = engine.initial();
  if (settings.fixed_parameters) {
    if (settings.fixed_parameters->size() != engine.n_params())
      throw DimensionError("fixed parameter vector has the wrong length");
    x = *settings.fixed_parameters;
  }
  const bool estimate_params = !settings.fixed_parameters && engine.n_params() > 0;
  const bool estimate_weights = hetero && !settings.fixed_unit_weights;

  Eigen::VectorXd fixed_point;  // RSS_i / (n_i - tr_i) at the last weight update
  fit.converged = true;
  for (int cycle = 0;; ++cycle) {
    engine.set_row_weights(expand_unit_weights(design, wu));
    if (estimate_params) {
      OptimResult opt = minimize(engine, x, settings);
      x = opt.x;
      fit.iterations += opt.iterations;
      fit.gradient_norm = opt.gradient_norm;
      fit.converged = opt.converged;
      fit.objective_trace.insert(fit.objective_trace.end(), opt.trace.begin(), opt.trace.end());
      if (!opt.note.empty() && opt.converged)
        fit.annotations.push_back("optimizer stopped at working precision (gradient " +
                                  format_double(opt.gradient_norm) + ")");
    }
    fit.weight_cycles = cycle;
    if (!estimate_weights) break;

    const Evaluation ev = engine.evaluate(x, false, true);
    const Eigen::VectorXd resid = design.y - engine.Xe() * ev.c;
    const Eigen::VectorXd w_row = expand_unit_weights(design, wu);
    const Eigen::VectorXd hat =
        w_row.cwiseProduct((engine.Xe() * ev.H_inv).cwiseProduct(engine.Xe()).rowwise().sum());
    Eigen::VectorXd rss = Eigen::VectorXd::Zero(n_units), tr = rss, cnt = rss;
    for (Index r = 0; r < n; ++r) {
      const int u = design.unit_of_row[r];
      rss(u) += resid(r) * resid(r);
      tr(u) += hat(r);
      cnt(u) += 1.0;
    }
    Eigen::VectorXd s2(n_units);
    for (Index u = 0; u < n_units; ++u) {
      const double df = std::max(cnt(u) - tr(u), 1e-8 * cnt(u));
      s2(u) = std::max(rss(u) / df, settings.variance_floor * ev.sigma2);
    }
    fixed_point = s2;
    Eigen::VectorXd w_new = s2.cwiseInverse();
    w_new *= static_cast<double>(n) / expand_unit_weights(design, w_new).sum();
    const double change = (w_new.array().log() - wu.array().log()).abs().maxCoeff();
    if (change < settings.weight_tolerance) break;
    if (cycle + 1 >= settings.max_weight_cycles) {
      fit.converged = false;
      fit.annotations.push_back("unit variance iteration did not converge (last change " +
                                format_double(change) + ")");
      break;
    }
    wu = w_new;
  }

  // Final quantities at the estimates.
  engine.set_row_weights(expand_unit_weights(design, wu));
  const Evaluation ev = engine.evaluate(x, engine.n_params() > 0, true);
  if (ev.jittered) fit.annotations.push_back("ridge jitter added to singular normal equations");
  if (!estimate_params && engine.n_params() > 0)
    fit.gradient_norm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
  fit.criterion_value = ev.f;
  fit.gradient = ev.gradient;
  fit.parameters = x;
  fit.sigma2 = ev.sigma2;
  const Eigen::MatrixXd& T = engine.T();
  fit.coefficients = T * ev.c;
  fit.covariance = ev.sigma2 * T * ev.H_inv * T.transpose();
  fit.fitted = engine.Xe() * ev.c;
  fit.residuals = design.y - fit.fitted;
  fit.row_weights = expand_unit_weights(design, wu);
  fit.unit_weights = wu;
  // At an interior optimum sigma^2 / w_i equals the fixed point; at a
  // boundary they differ by a common factor and the fixed point is reported.
  fit.unit_sigma2 = fixed_point.size() ? fixed_point : Eigen::VectorXd(ev.sigma2 * wu.cwiseInverse());
  fit.hat_diagonal =
      fit.row_weights.cwiseProduct((engine.Xe() * ev.H_inv).cwiseProduct(engine.Xe()).rowwise().sum());
  const Eigen::VectorXd influence = ev.H_inv.cwiseProduct(engine.XtWX()).colwise().sum().transpose();
  fit.total_edf = influence.sum();
  for (std::size_t j = 0; j < design.terms.size(); ++j) {
    double e = 0.0;
    for (Index c = 0; c < influence.size(); ++c)
      if (engine.term_of_column()[c] == static_cast<int>(j)) e += influence(c);
    fit.edf.push_back({design.terms[j].name, design.terms[j].kind, e, design.terms[j].cols});
  }
  for (std::size_t k = 0; k < engine.smoothing().size(); ++k)
    fit.lambdas.push_back(std::exp(x(k)) * engine.smoothing()[k].scale);
  if (engine.random()) {
    const Eigen::Matrix2d L = lower_factor(x.tail(3));
    fit.G = ev.sigma2 * L * L.transpose();
  }
  fit.cond_loglik = conditional_loglik(fit);
  if (!fit.converged)
    fit.annotations.push_back("optimizer did not converge (projected gradient " +
                              format_double(fit.gradient_norm) + ")");
  return fit;
}

FittedAMM fit_model(const PanelDataset& panel, const ModelSpec& spec, const FitSettings& settings) {
  return fit_amm(build_design(panel, spec), settings);
}

double conditional_loglik(const FittedAMM& fit) {
  double ll = 0.0;
  for (Index r = 0; r < fit.residuals.size(); ++r) {
    const double v = std::max(fit.unit_sigma2(fit.design.unit_of_row[r]), 1e-10);
    ll += -0.5 * (kLog2Pi + std::log(v)) - fit.residuals(r) * fit.residuals(r) / (2.0 * v);
  }
  return ll;
}

Eigen::VectorXd predict(const FittedAMM& fit, const PanelDataset& newdata, bool conditional) {
  return design_rows(fit.design, newdata, conditional) * fit.coefficients;
}

std::vector<TermEdf> effective_dof(const FittedAMM& fit) { return fit.edf; }

TermTest term_significance(const FittedAMM& fit, const std::string& name) {
  const TermDesign& t = fit.design.term(name);
  if (t.kind == TermKind::unit_fixed || t.kind == TermKind::unit_random)
    throw PreconditionError("unit effects are not tested term-wise");
  TermTest out;
  out.term = name;
  // Work with the fitted values of the term, X_t c = Q (R c), so the rank
  // truncation does not depend on the basis parameterization.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(fit.design.X.middleCols(t.first, t.cols));
  const Eigen::MatrixXd R =
      qr.matrixQR().topRows(std::min(t.cols, fit.rows())).triangularView<Eigen::Upper>();
  const Eigen::VectorXd c = R * fit.coefficients.segment(t.first, t.cols);
  const Eigen::MatrixXd V = R * fit.covariance.block(t.first, t.first, t.cols, t.cols) * R.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V);
  const Eigen::VectorXd ev = eig.eigenvalues().reverse();
  const Eigen::MatrixXd U = eig.eigenvectors().rowwise().reverse();
  const double top = ev.size() ? std::max(ev(0), 0.0) : 0.0;
  Index available = 0;
  while (available < ev.size() && ev(available) > 1e-12 * top && top > 0.0) ++available;

  Index r = t.cols;
  if (t.kind == TermKind::smooth || t.kind == TermKind::tensor) {
    double e = 0.0;
    for (const auto& te : fit.edf)
      if (te.term == name) e = te.edf;
    r = std::clamp<Index>(static_cast<Index>(std::llround(e)), 1, t.cols);
  }
  if (available < r) {
    out.rank_deficient = true;
    r = available;
  }
  if (r == 0) {
    out.df = 0;
    out.p_value = 1.0;
    out.code = "";
    return out;
  }
  const Eigen::VectorXd proj = U.leftCols(r).transpose() * c;
  out.statistic = proj.cwiseAbs2().cwiseQuotient(ev.head(r)).sum();
  out.df = static_cast<double>(r);
  out.p_value = chi_square_sf(out.statistic, out.df);
  out.code = significance_code(out.p_value);
  return out;
}

EffectCurve smooth_effect_curve(const FittedAMM& fit, const std::string& name,
                                const Eigen::VectorXd& grid) {
  const TermDesign& t = fit.design.term(name);
  if (t.kind != TermKind::smooth) throw PreconditionError("term '" + name + "' is not a smooth");
  EffectCurve out;
  out.term = name;
  out.grid = grid;
  const Eigen::MatrixXd Xg = evaluate_basis(*t.basis, grid);
  const Eigen::VectorXd c = fit.coefficients.segment(t.first, t.cols);
  const Eigen::MatrixXd V = fit.covariance.block(t.first, t.first, t.cols, t.cols);
  out.effect = Xg * c;
  out.se = (Xg * V).cwiseProduct(Xg).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
  out.lower = out.effect - 1.96 * out.se;
  out.upper = out.effect + 1.96 * out.se;
  out.rug = t.observed[0];
  std::sort(out.rug.data(), out.rug.data() + out.rug.size());
  return out;
}

Eigen::VectorXd support_grid(const FittedAMM& fit, const std::string& name, Index points) {
  const TermDesign& t = fit.design.term(name);
  if (t.kind != TermKind::smooth) throw PreconditionError("term '" + name + "' is not a smooth");
  return Eigen::VectorXd::LinSpaced(points, t.basis->lower(), t.basis->upper());
}

EffectSurface tensor_effect_surface(const FittedAMM& fit, const std::string& name, Index points) {
  const TermDesign& t = fit.design.term(name);
  if (t.kind != TermKind::tensor) throw PreconditionError("term '" + name + "' is not a tensor");
  const auto& mx = t.tensor->margin_x;
  const auto& mz = t.tensor->margin_z;
  const Eigen::VectorXd gx = Eigen::VectorXd::LinSpaced(points, mx.lower(), mx.upper());
  const Eigen::VectorXd gz = Eigen::VectorXd::LinSpaced(points, mz.lower(), mz.upper());
  EffectSurface out;
  out.term = name;
  out.x.resize(points * points);
  out.z.resize(points * points);
  for (Index i = 0; i < points; ++i)
    for (Index j = 0; j < points; ++j) {
      out.x(i * points + j) = gx(i);
      out.z(i * points + j) = gz(j);
    }
  const Eigen::MatrixXd Xg = evaluate_basis(*t.tensor, out.x, out.z);
  const Eigen::VectorXd c = fit.coefficients.segment(t.first, t.cols);
  const Eigen::MatrixXd V = fit.covariance.block(t.first, t.first, t.cols, t.cols);
  out.effect = Xg * c;
  out.se = (Xg * V).cwiseProduct(Xg).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
  return out;
}

nlohmann::json FittedAMM::summary() const {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json j;
  j["label"] = design.spec.label;
  j["spec"] = design.spec.to_json();
  j["criterion"] = settings.criterion == Criterion::reml ? "REML" : "ML";
  j["n_obs"] = rows();
  j["n_units"] = design.n_units();
  j["converged"] = converged;
  j["iterations"] = iterations;
  j["weight_cycles"] = weight_cycles;
  j["gradient_norm"] = num(gradient_norm);
  j["sigma2"] = num(sigma2);
  j["cond_loglik"] = num(cond_loglik);
  j["criterion_value"] = num(criterion_value);
  j["total_edf"] = num(total_edf);
  j["unpenalized_rank"] = unpenalized_rank;
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t k = 0; k < parameter_names.size(); ++k) params[parameter_names[k]] = num(parameters(k));
  j["parameters"] = params;
  nlohmann::json lam = nlohmann::json::object();
  for (std::size_t k = 0; k < lambdas.size(); ++k) lam[parameter_names[k].substr(4)] = num(lambdas[k]);
  j["lambdas"] = lam;
  if (design.unit_term() && design.unit_term()->kind == TermKind::unit_random)
    j["G"] = {{num(G(0, 0)), num(G(0, 1))}, {num(G(1, 0)), num(G(1, 1))}};
  nlohmann::json edfs = nlohmann::json::array();
  for (const auto& e : edf)
    edfs.push_back({{"term", e.term}, {"kind", to_string(e.kind)}, {"edf", num(e.edf)}, {"columns", e.columns}});
  j["edf"] = edfs;
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& t : design.terms)
    for (Index c = 0; c < t.cols; ++c) {
      const Index i = t.first + c;
      coefs.push_back({{"name", column_name(design, t, c)},
                       {"term", t.name},
                       {"estimate", num(coefficients(i))},
                       {"se", num(std::sqrt(std::max(covariance(i, i), 0.0)))}});
    }
  j["coefficients"] = coefs;
  if (design.spec.heteroscedastic) {
    nlohmann::json uv = nlohmann::json::object();
    for (Index u = 0; u < design.n_units(); ++u)
      uv[design.units[u]] = {{"sigma2", num(unit_sigma2(u))}, {"weight", num(unit_weights(u))}};
    j["unit_variances"] = uv;
  }
  j["dropped_columns"] = dropped_columns;
  j["annotations"] = annotations;
  return j;
}

}  // namespace panelamm
