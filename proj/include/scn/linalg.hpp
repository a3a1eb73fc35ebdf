#ifndef SCN_LINALG_HPP
#define SCN_LINALG_HPP

#include <cstddef>
#include <span>

#include "scn/common.hpp"

namespace scn::linalg {

/// Dense row-major matrix. The only storage type the solver and the
/// backward passes need; everything else is a view over Vector.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, Real(0)) {}

  static Matrix identity(std::size_t n);

  Real& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const Real> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  bool all_finite() const;
  Real frobenius_norm() const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

Real dot(std::span<const Real> a, std::span<const Real> b);
Real norm2(std::span<const Real> a);
bool all_finite(std::span<const Real> a);

/// C = A * B with a fixed i-k-j loop order, so results are reproducible
/// run to run for a given build.
Matrix matmul(const Matrix& a, const Matrix& b);

/// y = A * x (same deterministic accumulation order as matmul).
Vector matvec(const Matrix& a, const Vector& x);

/// y = A^T * x.
Vector matvec_transposed(const Matrix& a, const Vector& x);

/// G = A^T * A (symmetric, computed once per layer per minibatch).
Matrix gram(const Matrix& a);

/// Lower-triangular Cholesky factor of an SPD matrix, plus solves against
/// it. Factoring throws NotPositiveDefinite on a non-positive pivot.
class Cholesky {
public:
  static Cholesky factor(const Matrix& g);

  std::size_t dim() const { return l_.rows(); }

  /// Solves G x = b via the two triangular systems.
  Vector solve(const Vector& b) const;
  /// Solves G X = B column by column.
  Matrix solve(const Matrix& b) const;

private:
  Matrix l_;
};

/// Solves G X = B for SPD G through a Cholesky factorization; the inverse
/// is never formed explicitly.
Matrix spd_solve(const Matrix& g, const Matrix& b);
Vector spd_solve(const Matrix& g, const Vector& b);

inline constexpr int kPowerIterations = 30;
inline constexpr Real kEigenSafety = Real(1.01);

/// Rayleigh-quotient estimate of the largest eigenvalue of symmetric G after
/// `iters` power iterations from `start` (normalized internally; `start` is
/// overwritten with the final iterate so callers can warm-start the next
/// call with a drifted matrix).
Real power_iteration(const Matrix& g, Vector& start, int iters);

/// Largest eigenvalue of (D^T D + lambda2 I), estimated by power iteration
/// and inflated by kEigenSafety so 1/result stays a valid proximal-gradient
/// step size. A zero matrix returns lambda2 exactly. When `warm` is non-null
/// and sized D.cols() it seeds the iteration and receives the final
/// eigenvector estimate; otherwise a fixed-seed random start is used.
Real dominant_eigenvalue(const Matrix& d, Real lambda2, Vector* warm = nullptr,
                         int iters = kPowerIterations);

} // namespace scn::linalg

#endif
