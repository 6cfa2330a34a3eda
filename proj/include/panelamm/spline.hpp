#pragma once

// Penalized B-spline building blocks: cubic bases on equidistant knots,
// difference penalties, the sum-to-zero constraint, the mixed-model split
// of a penalty into null space and ridge part, and row-wise tensor products.
//
// Everything is templated on the scalar type and header-only; blocks are
// plain values and safe to share once built.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "panelamm/errors.hpp"

namespace panelamm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Eigenvalues below this fraction of the largest count as zero when
// splitting a penalty into null space and range.
inline constexpr double kNullSpaceCutoff = 1e-10;

template <typename Scalar = double>
struct BasisBlock {
  Matrix<Scalar> design;       // n_obs x k (k - 1 once constrained)
  Vector<Scalar> knots;        // k + degree + 1 equidistant knots
  Matrix<Scalar> penalty;      // empty until a penalty is attached
  Matrix<Scalar> constraint;   // raw k x k' map; identity when unconstrained
  int degree = 3;
  int penalty_order = 2;
  bool constrained = false;

  Index raw_dim() const { return knots.size() - degree - 1; }
  Index dim() const { return constraint.cols(); }
  Scalar lower() const { return knots(degree); }
  Scalar upper() const { return knots(raw_dim()); }
};

template <typename Scalar = double>
struct DifferencePenalty {
  Matrix<Scalar> D;  // (k - order) x k
  Matrix<Scalar> P;  // D^T D
};

template <typename Scalar = double>
struct MixedReparam {
  Matrix<Scalar> X_unpen;    // n_obs x d, spans the penalty null space
  Matrix<Scalar> Z_pen;      // n_obs x k', identity penalty
  Matrix<Scalar> V0;         // k x d
  Matrix<Scalar> V1;         // k x k'
  Vector<Scalar> scale;      // Sigma_1^{-1/2}; coefficient a = V0 beta + V1 diag(scale) b
};

// Row r of design is vec(outer(Bx.row(r), Bz.row(r))) with the x index major:
// column j1 * k2 + j2 holds Bx(r, j1) * Bz(r, j2). Penalties follow the same
// order: P_x (x) I_k2 and I_k1 (x) P_z.
template <typename Scalar = double>
struct TensorBlock {
  BasisBlock<Scalar> margin_x;
  BasisBlock<Scalar> margin_z;
  Matrix<Scalar> design;
  std::array<Matrix<Scalar>, 2> penalties;
  std::array<Scalar, 2> smoothing{Scalar(1), Scalar(1)};
  Matrix<Scalar> constraint;
  bool constrained = false;

  Index raw_dim() const { return margin_x.raw_dim() * margin_z.raw_dim(); }
  Index dim() const { return constraint.cols(); }
};

// ---------------------------------------------------------------------------
// Knots and evaluation
// ---------------------------------------------------------------------------

template <typename Scalar>
Vector<Scalar> equidistant_knots(Scalar lo, Scalar hi, int k, int degree) {
  if (degree < 0) throw DimensionError("spline degree must be non-negative");
  if (k < degree + 1)
    throw DimensionError("basis dimension " + std::to_string(k) +
                         " is too small for degree " + std::to_string(degree));
  if (!(hi > lo)) throw DomainError("degenerate covariate range (max == min)");
  const int intervals = k - degree;
  const Scalar h = (hi - lo) / Scalar(intervals);
  Vector<Scalar> knots(k + degree + 1);
  for (int j = 0; j < knots.size(); ++j) knots(j) = lo + Scalar(j - degree) * h;
  // Pin the range ends exactly so that evaluation at min/max never trips the
  // range check through rounding.
  knots(degree) = lo;
  knots(k) = hi;
  return knots;
}

// Values of the degree + 1 B-splines that are nonzero at x. Returns the index
// of the first of them. x must lie in [knots(degree), knots(k)].
template <typename Scalar>
Index bspline_nonzero(const Vector<Scalar>& knots, int degree, Scalar x,
                      Scalar* values) {
  const Index k = knots.size() - degree - 1;
  const Scalar lo = knots(degree), hi = knots(k);
  const Scalar slack = Scalar(1e-12) * (hi - lo);
  if (!(x >= lo - slack && x <= hi + slack))
    throw RangeError("spline evaluation point outside the knot range");
  x = std::clamp(x, lo, hi);

  // Span: knots(span) <= x < knots(span + 1), with the right end folded in.
  Index span = static_cast<Index>(
      std::upper_bound(knots.data() + degree, knots.data() + k + 1, x) -
      knots.data()) - 1;
  span = std::clamp<Index>(span, degree, k - 1);

  Scalar left[32], right[32];
  values[0] = Scalar(1);
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots(span + 1 - j);
    right[j] = knots(span + j) - x;
    Scalar saved = Scalar(0);
    for (int r = 0; r < j; ++r) {
      const Scalar temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return span - degree;
}

template <typename Derived>
Matrix<typename Derived::Scalar> bspline_design(
    const Eigen::MatrixBase<Derived>& x,
    const Vector<typename Derived::Scalar>& knots, int degree) {
  using Scalar = typename Derived::Scalar;
  if (degree > 30) throw DimensionError("spline degree too large");
  const Index k = knots.size() - degree - 1;
  Matrix<Scalar> B = Matrix<Scalar>::Zero(x.size(), k);
  Scalar values[32];
  for (Index i = 0; i < x.size(); ++i) {
    const Index first = bspline_nonzero<Scalar>(knots, degree, x(i), values);
    for (int j = 0; j <= degree; ++j) B(i, first + j) = values[j];
  }
  return B;
}

// k cubic (by default) B-splines on equidistant knots spanning the range of
// x. Only the design is filled in; see make_pspline for the penalized block.
template <typename Derived>
BasisBlock<typename Derived::Scalar> bspline_basis(
    const Eigen::MatrixBase<Derived>& x, int k, int degree = 3) {
  using Scalar = typename Derived::Scalar;
  if (k < degree + 1)
    throw DimensionError("basis dimension " + std::to_string(k) +
                         " is too small for degree " + std::to_string(degree));
  if (x.size() == 0) throw DimensionError("no observations for spline basis");
  if (!x.allFinite()) throw DomainError("non-finite spline covariate");
  BasisBlock<Scalar> block;
  block.degree = degree;
  block.knots = equidistant_knots<Scalar>(x.minCoeff(), x.maxCoeff(), k, degree);
  block.design = bspline_design(x, block.knots, degree);
  block.constraint = Matrix<Scalar>::Identity(k, k);
  return block;
}

// ---------------------------------------------------------------------------
// Penalties
// ---------------------------------------------------------------------------

template <typename Scalar = double>
DifferencePenalty<Scalar> difference_penalty(int k, int order) {
  if (order < 1) throw DimensionError("difference order must be >= 1");
  if (order >= k)
    throw DimensionError("difference order " + std::to_string(order) +
                         " must be smaller than basis dimension " +
                         std::to_string(k));
  Matrix<Scalar> D = Matrix<Scalar>::Identity(k, k);
  for (int o = 0; o < order; ++o) {
    const Index rows = D.rows() - 1;
    D = (D.bottomRows(rows) - D.topRows(rows)).eval();
  }
  DifferencePenalty<Scalar> out;
  out.P = D.transpose() * D;
  out.D = std::move(D);
  return out;
}

template <typename Derived>
BasisBlock<typename Derived::Scalar> make_pspline(
    const Eigen::MatrixBase<Derived>& x, int k, int degree = 3,
    int penalty_order = 2) {
  auto block = bspline_basis(x, k, degree);
  block.penalty = difference_penalty<typename Derived::Scalar>(k, penalty_order).P;
  block.penalty_order = penalty_order;
  return block;
}

// Basis of the orthogonal complement of c (k x (k-1)), from a Householder
// reflection that maps c onto the first axis.
template <typename Scalar>
Matrix<Scalar> sum_to_zero_map(const Vector<Scalar>& c) {
  const Index k = c.size();
  Eigen::HouseholderQR<Matrix<Scalar>> qr{Matrix<Scalar>(c)};
  Matrix<Scalar> Q = qr.householderQ() * Matrix<Scalar>::Identity(k, k);
  return Q.rightCols(k - 1);
}

// Constrains the block so that the effect B a sums to zero over the rows it
// was built on, for every coefficient vector a. The penalty is transformed
// congruently.
template <typename Scalar>
BasisBlock<Scalar> apply_sum_to_zero(const BasisBlock<Scalar>& block) {
  if (block.constrained)
    throw PreconditionError("basis block is already constrained");
  if (block.design.cols() < 2)
    throw DimensionError("cannot constrain a one-column basis");
  BasisBlock<Scalar> out = block;
  const Vector<Scalar> colsum = block.design.colwise().sum().transpose();
  const Matrix<Scalar> Zc = sum_to_zero_map<Scalar>(colsum);
  out.design = block.design * Zc;
  if (block.penalty.size() > 0) out.penalty = Zc.transpose() * block.penalty * Zc;
  out.constraint = block.constraint * Zc;
  out.constrained = true;
  return out;
}

template <typename Scalar>
TensorBlock<Scalar> apply_sum_to_zero(const TensorBlock<Scalar>& block) {
  if (block.constrained)
    throw PreconditionError("tensor block is already constrained");
  TensorBlock<Scalar> out = block;
  const Vector<Scalar> colsum = block.design.colwise().sum().transpose();
  const Matrix<Scalar> Zc = sum_to_zero_map<Scalar>(colsum);
  out.design = block.design * Zc;
  for (auto& P : out.penalties) P = (Zc.transpose() * P * Zc).eval();
  out.constraint = block.constraint * Zc;
  out.constrained = true;
  return out;
}

// Splits B a = X beta + Z b where X = B V0 spans the penalty null space and
// Z = B V1 Sigma_1^{-1/2} carries an identity penalty.
template <typename Scalar>
MixedReparam<Scalar> reparameterize_to_mixed(const BasisBlock<Scalar>& block) {
  const Matrix<Scalar>& P = block.penalty;
  if (P.size() == 0) throw PreconditionError("basis block has no penalty");
  if (!P.isApprox(P.transpose(), Scalar(1e-10)))
    throw NumericError("penalty matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(P);
  const Vector<Scalar>& ev = eig.eigenvalues();  // ascending
  const Scalar top = ev(ev.size() - 1);
  const Scalar norm = P.norm();
  if (ev(0) < -Scalar(1e-8) * norm)
    throw NumericError("penalty matrix is indefinite");
  Index d = 0;
  while (d < ev.size() && ev(d) < Scalar(kNullSpaceCutoff) * top) ++d;

  MixedReparam<Scalar> out;
  const Index kp = ev.size() - d;
  out.V0 = eig.eigenvectors().leftCols(d);
  out.V1 = eig.eigenvectors().rightCols(kp);
  out.scale = ev.tail(kp).cwiseSqrt().cwiseInverse();
  out.X_unpen = block.design * out.V0;
  out.Z_pen = block.design * out.V1 * out.scale.asDiagonal();
  return out;
}

// ---------------------------------------------------------------------------
// Tensor products
// ---------------------------------------------------------------------------

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> row_kronecker(
    const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B) {
  if (A.rows() != B.rows())
    throw DimensionError("row-wise Kronecker product needs equal row counts");
  Matrix<typename DerivedA::Scalar> out(A.rows(), A.cols() * B.cols());
  for (Index j1 = 0; j1 < A.cols(); ++j1)
    out.middleCols(j1 * B.cols(), B.cols()) = B.array().colwise() * A.col(j1).array();
  return out;
}

template <typename Scalar>
TensorBlock<Scalar> tensor_product(const BasisBlock<Scalar>& bx,
                                   const BasisBlock<Scalar>& bz) {
  if (bx.design.rows() != bz.design.rows())
    throw DimensionError("tensor margins built on different row counts");
  if (bx.constrained || bz.constrained)
    throw PreconditionError("tensor margins must be unconstrained");
  const Index k1 = bx.design.cols(), k2 = bz.design.cols();
  TensorBlock<Scalar> out;
  out.margin_x = bx;
  out.margin_z = bz;
  out.design = row_kronecker(bx.design, bz.design);
  const Matrix<Scalar> Px = bx.penalty.size() ? bx.penalty
                                              : difference_penalty<Scalar>(k1, bx.penalty_order).P;
  const Matrix<Scalar> Pz = bz.penalty.size() ? bz.penalty
                                              : difference_penalty<Scalar>(k2, bz.penalty_order).P;
  out.penalties[0] = Matrix<Scalar>::Zero(k1 * k2, k1 * k2);
  out.penalties[1] = Matrix<Scalar>::Zero(k1 * k2, k1 * k2);
  for (Index a = 0; a < k1; ++a)
    for (Index b = 0; b < k1; ++b)
      if (Px(a, b) != Scalar(0))
        out.penalties[0].block(a * k2, b * k2, k2, k2).diagonal().setConstant(Px(a, b));
  for (Index a = 0; a < k1; ++a)
    out.penalties[1].block(a * k2, a * k2, k2, k2) = Pz;
  out.constraint = Matrix<Scalar>::Identity(k1 * k2, k1 * k2);
  return out;
}

// Design rows at new points for a (possibly constrained) block.
template <typename Derived>
Matrix<typename Derived::Scalar> evaluate_basis(
    const BasisBlock<typename Derived::Scalar>& block,
    const Eigen::MatrixBase<Derived>& x) {
  return bspline_design(x, block.knots, block.degree) * block.constraint;
}

template <typename Derived>
Matrix<typename Derived::Scalar> evaluate_basis(
    const TensorBlock<typename Derived::Scalar>& block,
    const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<Derived>& z) {
  const auto Bx = bspline_design(x, block.margin_x.knots, block.margin_x.degree);
  const auto Bz = bspline_design(z, block.margin_z.knots, block.margin_z.degree);
  return row_kronecker(Bx, Bz) * block.constraint;
}

}  // namespace panelamm
