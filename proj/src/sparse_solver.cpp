#include "scn/sparse_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scn::sparse {

namespace {

std::vector<int> support_of(const Vector& alpha) {
  std::vector<int> s;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    if (alpha[j] > Real(0)) s.push_back(static_cast<int>(j));
  return s;
}

// d_j^T r for column j of d, r a length-m vector.
Real column_dot(const linalg::Matrix& d, std::size_t j, const Vector& r) {
  Real s = 0;
  const std::size_t n = d.cols();
  const Real* p = d.data() + j;
  for (std::size_t i = 0; i < d.rows(); ++i, p += n) s += *p * r[i];
  return s;
}

Vector residual(const linalg::Matrix& d, const Vector& x, const Vector& alpha) {
  Vector r(d.rows(), Real(0));
  const std::size_t n = d.cols();
  for (std::size_t j = 0; j < n; ++j) {
    const Real aj = alpha[j];
    if (aj == Real(0)) continue;
    const Real* p = d.data() + j;
    for (std::size_t i = 0; i < d.rows(); ++i, p += n) r[i] += *p * aj;
  }
  for (std::size_t i = 0; i < d.rows(); ++i) r[i] -= x[i];
  return r; // D alpha - x
}

void validate_inputs(const linalg::Matrix& d, const Vector& x,
                     const ElasticNetParams& p) {
  if (d.rows() != x.size())
    throw ContractError("fista_nonneg: dictionary rows do not match signal length");
  if (!(p.lambda1 > Real(0)) || p.lambda2 < Real(0) || p.max_iter < 1)
    throw ContractError("fista_nonneg: invalid elastic-net parameters");
  if (!linalg::all_finite(x) || !d.all_finite())
    throw NumericalError("fista_nonneg: non-finite input");
}

// Solves the problem restricted to a candidate support exactly, then walks
// the support: nonpositive solves shrink it, the worst violated inactive
// optimality condition grows it. Returns the best feasible point seen if the
// walk fails to settle within the round budget.
SparseCode refine_on_support(const linalg::Matrix& d, const Vector& x,
                             const ElasticNetParams& p, const Vector& alpha0) {
  const std::size_t n = d.cols();
  const Real accept_tol = Real(1e-10) * std::max(Real(1), linalg::norm2(x));

  SparseCode best;
  best.alpha = alpha0;
  best.active_set = support_of(alpha0);
  best.objective = objective_value(d, x, p, alpha0);

  std::vector<int> active = best.active_set;
  const int max_rounds = static_cast<int>(4 * n + 16);
  for (int round = 0; round < max_rounds; ++round) {
    Vector alpha(n, Real(0));
    if (!active.empty()) {
      const Vector alpha_sub = active_set_closed_form(d, active, x, p);
      const Real min_entry = *std::min_element(alpha_sub.begin(), alpha_sub.end());
      if (min_entry <= Real(0)) {
        std::vector<int> kept;
        for (std::size_t k = 0; k < active.size(); ++k)
          if (alpha_sub[k] > Real(0)) kept.push_back(active[k]);
        active = std::move(kept);
        continue;
      }
      for (std::size_t k = 0; k < active.size(); ++k)
        alpha[static_cast<std::size_t>(active[k])] = alpha_sub[k];
    }

    const Real obj = objective_value(d, x, p, alpha);
    if (obj < best.objective) {
      best.alpha = alpha;
      best.active_set = active;
      best.objective = obj;
    }

    // Inactive stationarity: d_j^T(D a - x) >= -lambda1.
    const Vector r = residual(d, x, alpha);
    Real worst = 0;
    int worst_j = -1;
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (k < active.size() && active[k] == static_cast<int>(j)) {
        ++k;
        continue;
      }
      const Real viol = -p.lambda1 - column_dot(d, j, r);
      if (viol > worst) {
        worst = viol;
        worst_j = static_cast<int>(j);
      }
    }
    if (worst <= accept_tol) {
      SparseCode out;
      out.alpha = std::move(alpha);
      out.active_set = std::move(active);
      out.objective = obj;
      return out;
    }
    active.insert(std::lower_bound(active.begin(), active.end(), worst_j), worst_j);
  }
  return best;
}

} // namespace

ElasticNetParams gradcheck_params(Real lambda1, Real lambda2) {
  ElasticNetParams p;
  p.lambda1 = lambda1;
  p.lambda2 = lambda2;
  p.max_iter = 100;
  p.rel_tol = Real(1e-6);
  return p;
}

Real objective_value(const linalg::Matrix& d, const Vector& x,
                     const ElasticNetParams& p, const Vector& alpha) {
  const Vector r = residual(d, x, alpha);
  Real fit = 0, l1 = 0, l2 = 0;
  for (Real v : r) fit += v * v;
  for (Real a : alpha) {
    l1 += std::abs(a);
    l2 += a * a;
  }
  return Real(0.5) * fit + p.lambda1 * l1 + Real(0.5) * p.lambda2 * l2;
}

SolverPrecompute make_precompute(const linalg::Matrix& d, Real lambda2,
                                 Vector* warm_eigvec) {
  if (!d.all_finite())
    throw NumericalError("make_precompute: non-finite dictionary");
  SolverPrecompute pre;
  pre.gram = linalg::gram(d);
  pre.kappa = linalg::dominant_eigenvalue(d, lambda2, warm_eigvec);
  const std::size_t n = d.cols();
  pre.momentum_op = linalg::Matrix(n, n);
  if (pre.kappa > Real(0)) {
    const Real inv_kappa = Real(1) / pre.kappa;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        pre.momentum_op(i, j) = -pre.gram(i, j) * inv_kappa;
    for (std::size_t i = 0; i < n; ++i)
      pre.momentum_op(i, i) += Real(1) - lambda2 * inv_kappa;
  }
  return pre;
}

SparseCode fista_nonneg(const linalg::Matrix& d, const Vector& x,
                        const ElasticNetParams& p, const SolverPrecompute& pre,
                        std::vector<Real>* objective_trace) {
  validate_inputs(d, x, p);
  const std::size_t n = d.cols();

  // Degenerate operator (zero dictionary and lambda2 = 0): alpha = 0 is
  // optimal for any lambda1 > 0.
  if (!(pre.kappa > Real(0))) {
    SparseCode zero;
    zero.alpha.assign(n, Real(0));
    zero.objective = objective_value(d, x, p, zero.alpha);
    return zero;
  }

  const Real inv_kappa = Real(1) / pre.kappa;
  Vector b = linalg::matvec_transposed(d, x);
  for (Real& v : b) v = (v - p.lambda1) * inv_kappa;

  // Accelerated proximal steps with a monotone safeguard: a proximal
  // candidate that raises the objective is rejected and the momentum is
  // restarted, so the alpha-iterates are objective-nonincreasing.
  Vector alpha(n, Real(0));
  Vector gamma(n, Real(0));
  Vector candidate(n, Real(0));
  Real f_alpha = objective_value(d, x, p, alpha);
  Real s = 1;
  for (int t = 0; t < p.max_iter; ++t) {
    candidate = linalg::matvec(pre.momentum_op, gamma);
    for (std::size_t j = 0; j < n; ++j)
      candidate[j] = std::max(Real(0), candidate[j] + b[j]);
    const Real f_candidate = objective_value(d, x, p, candidate);

    Real step_sq = 0, base_sq = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Real diff = candidate[j] - alpha[j];
      step_sq += diff * diff;
      base_sq += alpha[j] * alpha[j];
    }

    if (f_candidate <= f_alpha) {
      const Real s_next = (Real(1) + std::sqrt(Real(1) + Real(4) * s * s)) / Real(2);
      const Real mix = (s - Real(1)) / s_next;
      for (std::size_t j = 0; j < n; ++j)
        gamma[j] = candidate[j] + mix * (candidate[j] - alpha[j]);
      s = s_next;
      alpha = candidate;
      f_alpha = f_candidate;
    } else {
      gamma = alpha; // momentum overshoot: restart from the last accepted point
      s = 1;
    }

    if (objective_trace) objective_trace->push_back(f_alpha);
    if (std::sqrt(step_sq) <= p.rel_tol * std::max(Real(1), std::sqrt(base_sq)))
      break;
  }
  if (!linalg::all_finite(alpha))
    throw NumericalError("fista_nonneg: iterates diverged (bad step size?)");

  return refine_on_support(d, x, p, alpha);
}

SparseCode fista_nonneg(const linalg::Matrix& d, const Vector& x,
                        const ElasticNetParams& p) {
  const SolverPrecompute pre = make_precompute(d, p.lambda2);
  return fista_nonneg(d, x, p, pre);
}

Real check_kkt(const linalg::Matrix& d, const Vector& x,
               const ElasticNetParams& p, const Vector& alpha) {
  if (d.cols() != alpha.size() || d.rows() != x.size())
    throw ContractError("check_kkt: dimension mismatch");
  const Vector r = residual(d, x, alpha);
  Real worst = 0;
  for (std::size_t j = 0; j < d.cols(); ++j) {
    const Real g = column_dot(d, j, r) + p.lambda2 * alpha[j];
    const Real viol = alpha[j] > Real(0) ? std::abs(g + p.lambda1)
                                         : std::max(Real(0), -p.lambda1 - g);
    worst = std::max(worst, viol);
  }
  return worst;
}

linalg::Matrix gram_active(const linalg::Matrix& d, std::span<const int> lambda_set,
                           Real lambda2) {
  const std::size_t k = lambda_set.size();
  linalg::Matrix g(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      Real s = 0;
      const Real* pa = d.data() + lambda_set[a];
      const Real* pb = d.data() + lambda_set[b];
      for (std::size_t i = 0; i < d.rows(); ++i, pa += d.cols(), pb += d.cols())
        s += *pa * *pb;
      g(a, b) = s;
      g(b, a) = s;
    }
    g(a, a) += lambda2;
  }
  return g;
}

Vector active_set_closed_form(const linalg::Matrix& d, std::span<const int> lambda_set,
                              const Vector& x, const ElasticNetParams& p) {
  if (lambda_set.empty())
    throw ContractError("active_set_closed_form: empty active set");
  for (std::size_t k = 0; k < lambda_set.size(); ++k) {
    if (lambda_set[k] < 0 || static_cast<std::size_t>(lambda_set[k]) >= d.cols())
      throw ContractError("active_set_closed_form: index out of range");
    if (k > 0 && lambda_set[k] <= lambda_set[k - 1])
      throw ContractError("active_set_closed_form: indices must be ascending and distinct");
  }
  const linalg::Matrix g = gram_active(d, lambda_set, p.lambda2);
  Vector rhs(lambda_set.size());
  for (std::size_t k = 0; k < lambda_set.size(); ++k)
    rhs[k] = column_dot(d, static_cast<std::size_t>(lambda_set[k]), x) - p.lambda1;
  return linalg::spd_solve(g, rhs);
}

} // namespace scn::sparse
