#ifndef SCN_SPARSE_SOLVER_HPP
#define SCN_SPARSE_SOLVER_HPP

#include <span>
#include <vector>

#include "scn/common.hpp"
#include "scn/linalg.hpp"

namespace scn::sparse {

struct ElasticNetParams {
  Real lambda1 = Real(0.1);  // sparsity weight, > 0
  Real lambda2 = Real(0.01); // ridge weight, >= 0 (network configs keep it > 0)
  int max_iter = 50;
  Real rel_tol = Real(1e-4);
};

/// Tighter settings used by the finite-difference harnesses, where codes
/// must sit at the fixed point rather than merely near it.
ElasticNetParams gradcheck_params(Real lambda1, Real lambda2);

struct SparseCode {
  Vector alpha;                // full-length code, entries >= 0, exact zeros off-support
  std::vector<int> active_set; // { j : alpha[j] > 0 }, ascending
  Real objective = 0;          // elastic-net objective at alpha
};

/// 1/2||x - D a||^2 + lambda1 ||a||_1 + lambda2/2 ||a||^2 for a >= 0.
Real objective_value(const linalg::Matrix& d, const Vector& x,
                     const ElasticNetParams& p, const Vector& alpha);

/// Per-dictionary state reused across all patches of a minibatch: the Gram
/// matrix, its dominant eigenvalue, and the proximal-gradient momentum
/// operator I - (D^T D + lambda2 I)/kappa.
struct SolverPrecompute {
  linalg::Matrix gram;        // D^T D
  linalg::Matrix momentum_op; // I - (gram + lambda2 I)/kappa
  Real kappa = 0;
};

/// Builds the shared per-dictionary state. `warm_eigvec`, when provided, is
/// used and updated by the power iteration (the dictionary drifts slowly
/// between steps, so the previous eigenvector is a good start).
SolverPrecompute make_precompute(const linalg::Matrix& d, Real lambda2,
                                 Vector* warm_eigvec = nullptr);

/// Solves min_{a >= 0} 1/2||x - D a||^2 + lambda1||a||_1 + lambda2/2||a||^2
/// with accelerated proximal gradient steps under nonnegative
/// soft-thresholding, then refines the result on the identified support by
/// solving the active-set linear system exactly (dropping atoms that come
/// back nonpositive, admitting the worst optimality violator, bounded number
/// of rounds). `objective_trace`, if given, receives the objective at every
/// proximal iterate before refinement.
SparseCode fista_nonneg(const linalg::Matrix& d, const Vector& x,
                        const ElasticNetParams& p, const SolverPrecompute& pre,
                        std::vector<Real>* objective_trace = nullptr);

/// Convenience overload that builds the precompute itself.
SparseCode fista_nonneg(const linalg::Matrix& d, const Vector& x,
                        const ElasticNetParams& p);

/// Maximum first-order optimality violation of `alpha` for the problem
/// above: active atoms must satisfy d_j^T(D a - x) + lambda2 a_j = -lambda1,
/// inactive ones d_j^T(D a - x) + lambda2 a_j >= -lambda1. Zero at the
/// optimum; purely diagnostic.
Real check_kkt(const linalg::Matrix& d, const Vector& x,
               const ElasticNetParams& p, const Vector& alpha);

/// D_L^T D_L + lambda2 I for the atom subset L.
linalg::Matrix gram_active(const linalg::Matrix& d, std::span<const int> lambda_set,
                           Real lambda2);

/// Solves the active-set system (D_L^T D_L + lambda2 I) a = D_L^T x -
/// lambda1 1 and returns the |L|-dimensional solution. The caller owns
/// feasibility: entries may be negative if L is not the true support.
Vector active_set_closed_form(const linalg::Matrix& d, std::span<const int> lambda_set,
                              const Vector& x, const ElasticNetParams& p);

} // namespace scn::sparse

#endif
