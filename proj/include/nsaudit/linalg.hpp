#pragma once

// Orthonormal null-space / row-space bases and vector-subspace angles.
//
// Every entry point accepts any Eigen dense expression; values are promoted
// to double before any arithmetic happens.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "nsaudit/error.hpp"

namespace nsaudit {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = RowMatrix<double>;
using Vector = ColVector<double>;

constexpr double kDegreesPerRadian = 180.0 / std::numbers::pi;

/// Singular-value cutoff separating the row space from the null space.
/// The automatic value is max(rows, cols) * sigma_max * machine epsilon.
class RankTolerance {
 public:
  static RankTolerance automatic() { return RankTolerance{}; }
  static RankTolerance fixed(double value) {
    if (!(value >= 0.0) || !std::isfinite(value))
      throw Error(ErrorCode::ToleranceInvalid, std::to_string(value));
    return RankTolerance{value};
  }

  bool is_automatic() const { return !value_.has_value(); }
  std::optional<double> value() const { return value_; }

  double resolve(Index rows, Index cols, double sigma_max) const {
    if (value_) return *value_;
    return static_cast<double>(std::max(rows, cols)) * sigma_max *
           std::numeric_limits<double>::epsilon();
  }

 private:
  RankTolerance() = default;
  explicit RankTolerance(double v) : value_(v) {}
  std::optional<double> value_;
};

enum class SubspaceKind { NullSpace, RowSpace };

/// Subspace of R^d held as a d x k matrix with orthonormal columns. k = 0 is {0}.
class SubspaceBasis {
 public:
  SubspaceBasis(Eigen::MatrixXd basis, SubspaceKind kind)
      : basis_(std::move(basis)), kind_(kind) {}

  Index ambient_dim() const { return basis_.rows(); }
  Index dim() const { return basis_.cols(); }
  SubspaceKind kind() const { return kind_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  auto vector(Index i) const { return basis_.col(i); }

  template <typename Derived>
  Vector project(const Eigen::MatrixBase<Derived>& v) const {
    const Vector x = v.template cast<double>();
    return basis_ * (basis_.transpose() * x);
  }

 private:
  Eigen::MatrixXd basis_;
  SubspaceKind kind_;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().array().isFinite().all()) throw Error(ErrorCode::NonFiniteInput, what);
}

struct RightSingularSplit {
  Eigen::MatrixXd v;  // full cols x cols right singular vectors
  Eigen::VectorXd sigma;
  Index rank = 0;
  double threshold = 0.0;
};

template <typename Derived>
RightSingularSplit split_right_singular(const Eigen::MatrixBase<Derived>& a, RankTolerance tol) {
  if (a.rows() < 1 || a.cols() < 1)
    throw Error(ErrorCode::DimensionMismatch, "matrix must be at least 1x1");
  require_finite(a, "matrix");
  const Eigen::MatrixXd m = a.template cast<double>();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  RightSingularSplit out;
  out.v = svd.matrixV();
  out.sigma = svd.singularValues();
  const double sigma_max = out.sigma.size() > 0 ? out.sigma(0) : 0.0;
  out.threshold = tol.resolve(m.rows(), m.cols(), sigma_max);
  // singular values arrive sorted in decreasing order
  while (out.rank < out.sigma.size() && out.sigma(out.rank) > out.threshold) ++out.rank;
  return out;
}

template <typename Derived>
double checked_norm(const Eigen::MatrixBase<Derived>& v) {
  const double n = v.template cast<double>().norm();
  if (!std::isfinite(n)) throw Error(ErrorCode::NonFiniteInput, "vector");
  if (n <= 1e-300) throw Error(ErrorCode::ZeroVector);
  return n;
}

}  // namespace detail

/// Orthonormal basis of {x : A x = 0}.
template <typename Derived>
SubspaceBasis nullspace_basis(const Eigen::MatrixBase<Derived>& a,
                              RankTolerance tol = RankTolerance::automatic()) {
  auto split = detail::split_right_singular(a, tol);
  const Index k = a.cols() - split.rank;
  return SubspaceBasis(split.v.rightCols(k), SubspaceKind::NullSpace);
}

/// Orthonormal basis of the span of A's rows.
template <typename Derived>
SubspaceBasis rowspace_basis(const Eigen::MatrixBase<Derived>& a,
                             RankTolerance tol = RankTolerance::automatic()) {
  auto split = detail::split_right_singular(a, tol);
  return SubspaceBasis(split.v.leftCols(split.rank), SubspaceKind::RowSpace);
}

/// Both complementary bases from one decomposition.
template <typename Derived>
std::pair<SubspaceBasis, SubspaceBasis> null_and_row_space(
    const Eigen::MatrixBase<Derived>& a, RankTolerance tol = RankTolerance::automatic()) {
  auto split = detail::split_right_singular(a, tol);
  const Index k = a.cols() - split.rank;
  return {SubspaceBasis(split.v.rightCols(k), SubspaceKind::NullSpace),
          SubspaceBasis(split.v.leftCols(split.rank), SubspaceKind::RowSpace)};
}

/// Principal angle in degrees between v and S, in [0, 90]; 90 for the trivial subspace.
template <typename Derived>
double angle_vector_subspace(const Eigen::MatrixBase<Derived>& v, const SubspaceBasis& s) {
  if (v.cols() != 1 || v.rows() != s.ambient_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "vector length " + std::to_string(v.rows()) + " vs ambient dimension " +
                    std::to_string(s.ambient_dim()));
  detail::checked_norm(v);
  if (s.dim() == 0) return 90.0;

  const Vector x = v.template cast<double>();
  const Vector coeff = s.basis().transpose() * x;
  const Vector perp = x - s.basis() * coeff;
  // atan2 of (rejection, projection) equals arccos(|P v| / |v|) without the
  // precision loss of arccos near 0 and 90 degrees.
  return std::atan2(perp.norm(), coeff.norm()) * kDegreesPerRadian;
}

/// Angle in degrees between v and the orthogonal complement of S, in [0, 90].
/// Equals angle_vector_subspace(v, complement) without materializing the
/// complement basis, which is large when S has small dimension.
template <typename Derived>
double angle_vector_complement(const Eigen::MatrixBase<Derived>& v, const SubspaceBasis& s) {
  if (v.cols() != 1 || v.rows() != s.ambient_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "vector length " + std::to_string(v.rows()) + " vs ambient dimension " +
                    std::to_string(s.ambient_dim()));
  detail::checked_norm(v);
  if (s.dim() == s.ambient_dim()) return 90.0;
  if (s.dim() == 0) return 0.0;

  const Vector x = v.template cast<double>();
  const Vector coeff = s.basis().transpose() * x;
  const Vector rejection = x - s.basis() * coeff;
  return std::atan2(coeff.norm(), rejection.norm()) * kDegreesPerRadian;
}

/// Angle in degrees between two nonzero vectors, in [0, 180].
template <typename DerivedU, typename DerivedV>
double angle_between_vectors(const Eigen::MatrixBase<DerivedU>& u,
                             const Eigen::MatrixBase<DerivedV>& v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  const double nu = detail::checked_norm(u);
  const double nv = detail::checked_norm(v);
  const double dot = u.template cast<double>().dot(v.template cast<double>());
  const double c = std::clamp(dot / (nu * nv), -1.0, 1.0);
  return std::acos(c) * kDegreesPerRadian;
}

/// The subspace Q S for an orthogonal d x d matrix Q.
template <typename Derived>
SubspaceBasis rotate(const SubspaceBasis& s, const Eigen::MatrixBase<Derived>& q) {
  if (q.rows() != s.ambient_dim() || q.cols() != s.ambient_dim())
    throw Error(ErrorCode::DimensionMismatch, "rotation must be ambient_dim square");
  return SubspaceBasis(q.template cast<double>() * s.basis(), s.kind());
}

}  // namespace nsaudit
