#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "scn/sparse_solver.hpp"

using namespace scn;
using linalg::Matrix;
using sparse::ElasticNetParams;
using sparse::SparseCode;

namespace {

ElasticNetParams tight_params(Real l1, Real l2) {
  ElasticNetParams p;
  p.lambda1 = l1;
  p.lambda2 = l2;
  p.max_iter = 100;
  p.rel_tol = Real(1e-6);
  return p;
}

} // namespace

TEST_CASE("separable problem solves analytically") {
  // Identity dictionary decouples the coordinates: a_j = max(x_j - l1, 0).
  ElasticNetParams p = tight_params(Real(0.2), Real(0));
  Vector x = {Real(1.0), Real(0.5)};
  SparseCode code = sparse::fista_nonneg(Matrix::identity(2), x, p);
  CHECK(code.alpha[0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(code.alpha[1] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(code.active_set == std::vector<int>{0, 1});
  CHECK(sparse::check_kkt(Matrix::identity(2), x, p, code.alpha) <= 1e-12);
}

TEST_CASE("zero input yields the empty code") {
  std::mt19937_64 rng(5);
  Matrix d = testing::random_dictionary(6, 9, rng);
  ElasticNetParams p = tight_params(Real(0.15), Real(0.01));
  Vector x(6, Real(0));
  SparseCode code = sparse::fista_nonneg(d, x, p);
  CHECK(code.active_set.empty());
  for (Real a : code.alpha) CHECK(a == Real(0));
  CHECK(sparse::check_kkt(d, x, p, code.alpha) == Real(0));
}

TEST_CASE("non-finite input is rejected") {
  Matrix d = Matrix::identity(2);
  ElasticNetParams p = tight_params(Real(0.1), Real(0.01));
  Vector x = {Real(1), std::numeric_limits<Real>::quiet_NaN()};
  CHECK_THROWS_AS(sparse::fista_nonneg(d, x, p), NumericalError);
}

TEST_CASE("agrees with exhaustive active-set enumeration") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int support_checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 4 + static_cast<std::size_t>(trial % 5);
    const std::size_t n = 6 + static_cast<std::size_t>(trial % 7);
    Matrix d = testing::random_dictionary(m, n, rng);
    Vector x = testing::random_vector(m, rng, Real(0.8));
    ElasticNetParams p = tight_params(Real(0.05 + 0.3 * u01(rng)),
                                      Real(0.01 + 0.09 * u01(rng)));

    SparseCode code = sparse::fista_nonneg(d, x, p);
    const auto oracle = testing::brute_force_elastic_net(d, x, p);

    CHECK(code.objective - oracle.objective <= 1e-6);
    CHECK(sparse::check_kkt(d, x, p, code.alpha) <= 1e-5);

    // Support can only be compared under strict complementarity.
    Real smallest = std::numeric_limits<Real>::infinity();
    for (Real a : oracle.alpha)
      if (a > Real(0)) smallest = std::min(smallest, a);
    if (!oracle.support.empty() && smallest > Real(1e-4)) {
      CHECK(code.active_set == oracle.support);
      ++support_checked;
    }
  }
  CHECK(support_checked > 10); // the guard must not disable the comparison
}

TEST_CASE("kkt residual of the solver on a random instance") {
  std::mt19937_64 rng(99);
  Matrix d = testing::random_dictionary(6, 10, rng);
  Vector x = testing::random_vector(6, rng);
  ElasticNetParams p = tight_params(Real(0.15), Real(0.01));
  SparseCode code = sparse::fista_nonneg(d, x, p);
  CHECK(sparse::check_kkt(d, x, p, code.alpha) <= 1e-5);
}

TEST_CASE("check_kkt zero code with zero signal") {
  Matrix d = Matrix::identity(3);
  ElasticNetParams p = tight_params(Real(0.1), Real(0.01));
  CHECK(sparse::check_kkt(d, Vector(3, Real(0)), p, Vector(3, Real(0))) == Real(0));
}

TEST_CASE("active-set closed form on the scalar system") {
  ElasticNetParams p = tight_params(Real(0.2), Real(0));
  const std::vector<int> support = {0};
  Vector sol = sparse::active_set_closed_form(Matrix::identity(2), support,
                                              Vector{Real(1), Real(0.5)}, p);
  REQUIRE(sol.size() == 1);
  CHECK(sol[0] == doctest::Approx(0.8));
}

TEST_CASE("closed form over the converged support matches the solver") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix d = testing::random_dictionary(8, 12, rng);
    Vector x = testing::random_vector(8, rng);
    ElasticNetParams p = tight_params(Real(0.12), Real(0.02));
    SparseCode code = sparse::fista_nonneg(d, x, p);
    if (code.active_set.empty()) continue;
    Vector sol = sparse::active_set_closed_form(d, code.active_set, x, p);
    for (std::size_t k = 0; k < code.active_set.size(); ++k)
      CHECK(sol[k] ==
            doctest::Approx(code.alpha[static_cast<std::size_t>(code.active_set[k])])
                .epsilon(1e-5));
  }
}

TEST_CASE("closed form input contracts") {
  ElasticNetParams p = tight_params(Real(0.1), Real(0.01));
  Matrix d = Matrix::identity(3);
  Vector x(3, Real(1));
  CHECK_THROWS_AS(sparse::active_set_closed_form(d, std::vector<int>{}, x, p),
                  ContractError);
  CHECK_THROWS_AS(sparse::active_set_closed_form(d, std::vector<int>{0, 0}, x, p),
                  ContractError);
  CHECK_THROWS_AS(sparse::active_set_closed_form(d, std::vector<int>{5}, x, p),
                  ContractError);
}

TEST_CASE("codes are exactly nonnegative with exact support bookkeeping") {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix d = testing::random_dictionary(5, 8, rng);
    Vector x = testing::random_vector(5, rng);
    ElasticNetParams p; // training-default effort
    p.lambda1 = Real(0.1);
    p.lambda2 = Real(0.01);
    SparseCode code = sparse::fista_nonneg(d, x, p);
    std::vector<int> expected;
    for (std::size_t j = 0; j < code.alpha.size(); ++j) {
      CHECK(code.alpha[j] >= Real(0));
      if (code.alpha[j] > Real(0)) expected.push_back(static_cast<int>(j));
    }
    CHECK(code.active_set == expected);
  }
}

TEST_CASE("objective trace is nonincreasing after the momentum warmup") {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix d = testing::random_dictionary(6, 9, rng);
    Vector x = testing::random_vector(6, rng);
    ElasticNetParams p = tight_params(Real(0.1), Real(0.01));
    const sparse::SolverPrecompute pre = sparse::make_precompute(d, p.lambda2);
    std::vector<Real> trace;
    sparse::fista_nonneg(d, x, p, pre, &trace);
    for (std::size_t t = 5; t + 1 < trace.size(); ++t)
      CHECK(trace[t + 1] <= trace[t] + 1e-12);
  }
}

TEST_CASE("larger lambda1 shrinks supports") {
  // Support size is not universally monotone in lambda1 for correlated
  // dictionaries (the exhaustive oracle itself exhibits rare growth), so per
  // instance a violation is accepted only when the oracle confirms it is the
  // true optimum; in aggregate the supports must shrink strictly.
  std::mt19937_64 rng(777);
  std::size_t total_wide = 0, total_narrow = 0;
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix d = testing::random_dictionary(6, 10, rng);
    Vector x = testing::random_vector(6, rng);
    ElasticNetParams loose = tight_params(Real(0.1), Real(0.02));
    ElasticNetParams strict = tight_params(Real(0.5), Real(0.02));
    const auto wide = sparse::fista_nonneg(d, x, loose);
    const auto narrow = sparse::fista_nonneg(d, x, strict);
    total_wide += wide.active_set.size();
    total_narrow += narrow.active_set.size();
    if (narrow.active_set.size() > wide.active_set.size()) {
      ++violations;
      const auto oracle_wide = testing::brute_force_elastic_net(d, x, loose);
      const auto oracle_narrow = testing::brute_force_elastic_net(d, x, strict);
      CHECK(oracle_narrow.support.size() > oracle_wide.support.size());
    }
  }
  CHECK(total_narrow < total_wide);
  CHECK(violations <= 5);
}
