#pragma once

#include "montage/assembly.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace montage {

enum class Backend { Direct, CG, BiCGSTAB, GMRES };

std::string_view backend_name(Backend b);
std::optional<Backend> backend_from_name(std::string_view name);

struct SolverConfig {
  Backend backend = Backend::Direct;
  double tol = 1e-10; // relative residual target for iterative backends
  std::int64_t max_iter = 0; // 0 -> 10 * n
  int restart = 50;          // GMRES
};

struct SolveReport {
  std::vector<double> x;
  double precision = 0.0;
  std::int64_t iterations = 0; // 0 for direct
  double solve_seconds = 0.0;
  double assembly_seconds = 0.0;
  std::int64_t nnz = 0;           // non-zeros of A
  std::int64_t point_matches = 0; // retained point-match count
  std::string status;             // converged / max_iter / breakdown / direct
  std::vector<double> residual_history; // iterative relative residuals
};

// Sparse symmetric indefinite factorization with a fill-reducing ordering.
// Throws SolverError (not positive definite) when the factorization hits a
// non-positive pivot; the usual cures are a larger lambda or a fixed tile.
SolveReport solve_direct(const NormalSystem &ns);

// Jacobi-preconditioned Krylov backends. The optional observer receives the
// current iterate after every iteration (used by tests to check the CG
// energy-norm decrease).
using IterObserver = std::function<void(std::int64_t, std::span<const double>)>;
SolveReport solve_iterative(const NormalSystem &ns, const SolverConfig &cfg,
                            const IterObserver &observer = nullptr);

SolveReport solve(const NormalSystem &ns, const SolverConfig &cfg);

// Relative residual ‖A_tilde·x - b_tilde‖₂ / ‖b_tilde‖₂ (absolute when the
// right-hand side is zero).
double precision(const NormalSystem &ns, std::span<const double> x);

struct ResidualStats {
  std::map<std::string, double> per_tile_mean; // px
  double global_mean = 0.0;                    // mean over tiles, px
};

// Point-match residuals of a solution: for every pair the Euclidean
// distance between the transformed p and q points, attributed to both
// incident tiles.
ResidualStats residual_stats(const SparseSystem &system,
                             std::span<const double> x);

} // namespace montage
