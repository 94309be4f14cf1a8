#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

#include "ckchain/model.hpp"

namespace ckchain {

using ApplyFn = std::function<void(const Vec&, Vec&)>;

// Symmetric Lanczos with full reorthogonalization (two-pass classical
// Gram-Schmidt).  Finds the lowest eigenpair; higher states are obtained by
// deflation runs against previously converged vectors.
struct LanczosOptions {
  int n_lowest = 1;
  double tol = 1e-10;    // absolute residual tolerance
  int max_iter = 2000;   // cap on the Krylov dimension per run
  std::uint64_t seed = 77;
};

struct LanczosResult {
  Vec values;      // ascending, one per requested state
  Mat vectors;     // dim x n_states
  Vec residuals;   // explicit |H v - theta v| per state
  int iterations = 0;  // total matrix applications
  bool converged = false;
};

// apply must compute y = H x for a symmetric H of the given dimension.
// starts: optional start vectors (one column per requested state; extra
// columns ignored, missing ones replaced by seeded random vectors).
// deflate: optional subspace projected out of the whole computation.
LanczosResult lanczos_lowest(Eigen::Index dim, const ApplyFn& apply,
                             const LanczosOptions& opt,
                             const Mat* starts = nullptr,
                             const Mat* deflate = nullptr);

// Block Davidson with diagonal preconditioning.  Finds the lowest n_lowest
// eigenpairs together from one expanding subspace.  Shines on warm starts:
// seeded with a nearly converged vector it usually finishes within a few
// matrix applications, which plain Lanczos cannot do.
struct DavidsonOptions {
  int n_lowest = 1;
  double tol = 1e-9;      // residual tolerance, relative to max(1, |theta|)
  // residual tolerance for targets beyond the first (0 means same as tol);
  // their energies are quadratic in the residual, so tracking runs can keep
  // higher states much looser than the ground state
  double tol_excited = 0.0;
  int max_iter = 400;     // cap on matrix applications
  int max_subspace = 24;  // restart threshold for the search space
  // optional second stop: two consecutive expansions move every Ritz value
  // by less than this absolute amount (0 disables)
  double dtheta_tol = 0.0;
  std::uint64_t seed = 77;
};

// diag must hold the diagonal of H; it only steers the preconditioner, so an
// approximation is fine.  Start vectors as in lanczos_lowest.
LanczosResult davidson_lowest(Eigen::Index dim, const ApplyFn& apply,
                              const Vec& diag, const DavidsonOptions& opt,
                              const Mat* starts = nullptr);

}  // namespace ckchain
