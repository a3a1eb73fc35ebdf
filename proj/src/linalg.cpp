#include "scn/linalg.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace scn::linalg {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
  return m;
}

bool Matrix::all_finite() const { return linalg::all_finite(data_); }

Real Matrix::frobenius_norm() const { return norm2(data_); }

Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Real norm2(std::span<const Real> a) {
  Real s = 0;
  for (Real v : a) s += v * v;
  return std::sqrt(s);
}

bool all_finite(std::span<const Real> a) {
  for (Real v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: dimension mismatch, " << a.rows() << "x" << a.cols()
       << " * " << b.rows() << "x" << b.cols();
    throw ContractError(os.str());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Real* ci = c.data() + i * c.cols();
    const Real* ai = a.data() + i * a.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = ai[k];
      if (aik == Real(0)) continue;
      const Real* bk = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size())
    throw ContractError("matvec: dimension mismatch");
  Vector y(a.rows(), Real(0));
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
  if (a.rows() != x.size())
    throw ContractError("matvec_transposed: dimension mismatch");
  Vector y(a.cols(), Real(0));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Real xi = x[i];
    if (xi == Real(0)) continue;
    const Real* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += ai[j] * xi;
  }
  return y;
}

Matrix gram(const Matrix& a) {
  const std::size_t n = a.cols();
  Matrix g(n, n);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Real* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j < n; ++j) {
      const Real aij = ai[j];
      if (aij == Real(0)) continue;
      Real* gj = g.data() + j * n;
      for (std::size_t k = j; k < n; ++k) gj[k] += aij * ai[k];
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < j; ++k) g(j, k) = g(k, j);
  return g;
}

Cholesky Cholesky::factor(const Matrix& g) {
  if (g.rows() != g.cols())
    throw ContractError("cholesky: matrix not square");
  const std::size_t n = g.rows();
  Cholesky c;
  c.l_ = Matrix(n, n);
  Matrix& l = c.l_;
  for (std::size_t j = 0; j < n; ++j) {
    Real diag = g(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > Real(0)) || !std::isfinite(diag)) {
      std::ostringstream os;
      os << "cholesky: non-positive pivot " << diag << " at index " << j;
      throw NotPositiveDefinite(os.str());
    }
    const Real ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      Real s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return c;
}

Vector Cholesky::solve(const Vector& b) const {
  const std::size_t n = dim();
  if (b.size() != n)
    throw ContractError("cholesky solve: dimension mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y[k];
    y[i] = s / l_(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    Real s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * y[k];
    y[ii] = s / l_(ii, ii);
  }
  return y;
}

Matrix Cholesky::solve(const Matrix& b) const {
  const std::size_t n = dim();
  if (b.rows() != n)
    throw ContractError("cholesky solve: dimension mismatch");
  Matrix x(n, b.cols());
  Vector col(n);
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
    Vector sol = solve(col);
    for (std::size_t i = 0; i < n; ++i) x(i, j) = sol[i];
  }
  return x;
}

Matrix spd_solve(const Matrix& g, const Matrix& b) {
  return Cholesky::factor(g).solve(b);
}

Vector spd_solve(const Matrix& g, const Vector& b) {
  return Cholesky::factor(g).solve(b);
}

Real power_iteration(const Matrix& g, Vector& start, int iters) {
  if (g.rows() != g.cols() || start.size() != g.rows())
    throw ContractError("power_iteration: dimension mismatch");
  const Real n0 = norm2(start);
  if (n0 == Real(0))
    throw ContractError("power_iteration: zero start vector");
  for (Real& v : start) v /= n0;
  Vector next(start.size());
  for (int t = 0; t < iters; ++t) {
    next = matvec(g, start);
    const Real nn = norm2(next);
    if (nn == Real(0)) return Real(0); // start landed in the null space
    for (Real& v : next) v /= nn;
    start.swap(next);
  }
  next = matvec(g, start);
  return dot(std::span<const Real>(start), std::span<const Real>(next));
}

Real dominant_eigenvalue(const Matrix& d, Real lambda2, Vector* warm, int iters) {
  if (d.size() == 0)
    throw ContractError("dominant_eigenvalue: empty matrix");
  if (lambda2 < Real(0))
    throw ContractError("dominant_eigenvalue: negative lambda2");
  if (d.frobenius_norm() == Real(0)) return lambda2;

  Matrix g = gram(d);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += lambda2;

  Vector local;
  Vector* start = warm;
  if (!start || start->size() != g.rows() || norm2(*start) == Real(0)) {
    std::mt19937_64 rng(0x5c4f1e57u);
    std::normal_distribution<double> nd(0.0, 1.0);
    local.resize(g.rows());
    for (Real& v : local) v = static_cast<Real>(nd(rng));
    start = &local;
  }
  const Real rayleigh = power_iteration(g, *start, iters);
  if (warm && warm != start) *warm = *start;
  return kEigenSafety * rayleigh;
}

} // namespace scn::linalg
