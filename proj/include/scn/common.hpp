#ifndef SCN_COMMON_HPP
#define SCN_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scn {

// Training and gradient-check builds use 64-bit floats. Defining SCN_REAL32
// switches the bulk math to 32-bit; the finite-difference test suites are
// only meaningful in the 64-bit build.
#ifdef SCN_REAL32
using Real = float;
#else
using Real = double;
#endif

using Vector = std::vector<Real>;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Precondition / dimension-contract violations.
class ContractError : public Error {
public:
  using Error::Error;
};

// Cholesky hit a non-positive pivot: the matrix is not SPD, which in this
// codebase means lambda2 is misconfigured or state got corrupted.
class NotPositiveDefinite : public Error {
public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericalError : public Error {
public:
  using Error::Error;
};

// Malformed on-disk data (dataset files, checkpoints).
class FormatError : public Error {
public:
  using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Worker count for patch-level parallelism. Reads SCN_THREADS once; values
// below 1 clamp to 1. Default is 1 so runs are reproducible without setup.
int worker_count();

namespace detail {
void run_chunked(std::size_t n, int workers,
                 const std::function<void(std::size_t, std::size_t, int)>& fn);
}

// Splits [0, n) into worker_count() contiguous chunks and runs fn(begin, end,
// worker) on each; the partition depends only on n and the worker count.
// With one worker this degenerates to a plain call. Callers that accumulate
// must keep per-worker partials and reduce them in worker order.
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn) {
  const int workers = worker_count();
  if (workers <= 1 || n <= 1) {
    if (n > 0) fn(std::size_t{0}, n, 0);
    return;
  }
  detail::run_chunked(n, workers,
                      std::function<void(std::size_t, std::size_t, int)>(fn));
}

} // namespace scn

#endif
