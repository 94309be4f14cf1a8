#pragma once

// Finite-system ground-state engine on the charge-blocked machinery: two
// free sites between a growing left block and a shrinking right block, with
// mixed-density truncation and wave-function carriage between steps.

#include <cstdint>
#include <limits>
#include <vector>

#include "ckchain/linalg.hpp"
#include "ckchain/qspace.hpp"

namespace ckchain {

struct DmrgConfig {
  int m = 80;                          // kept block states
  // Optional two-stage schedule: sweep to convergence keeping m_warm states
  // first, then restart the sweep loop at m.  The warm stage hands the full
  // stage nearly converged predictions, which saves most of the eigensolver
  // work at large m.  0 disables the schedule.
  int m_warm = 0;
  int n_targets = 1;                   // lowest states tracked together
  std::vector<double> target_weights;  // density mix; empty means equal
  int n_sweeps_max = 20;               // cap per stage
  double energy_tol = 1e-9;  // per-site sweep-to-sweep threshold
  // Relative eigensolver residual tolerance for the full sweeps; warmup and
  // the opening half sweep run looser.  The resulting energy noise is of
  // order tol^2 and sits far below the truncation error at any sane m.
  double solver_tol = 1e-7;
  // After the sweep minimum settles, one more sweep runs at this residual
  // tolerance.  Expectation values are first order in the state error, so
  // the states kept for measurement must be solved much more tightly than
  // the energies need.
  double final_tol = 1e-10;
  // The polishing sweep only matters when the captured states feed
  // measurements; energies alone are second order in the state error, so
  // pure-energy scans can skip it.
  bool polish = true;
  int solver_max_iter = 400;
  std::uint64_t seed = 123456789;

  void validate() const;
};

// one inner eigensolve; discarded refers to the truncation that followed it
struct StepRecord {
  int sweep = 0;  // 0 warmup, 1 the opening half sweep, then full sweeps
  int p = 0;      // left block length at the solve
  std::int64_t dim = 0;
  double e0 = 0.0;
  double e1 = std::numeric_limits<double>::quiet_NaN();
  double discarded = 0.0;
  int iterations = 0;
};

// Everything observables need after the run: the converged superblock states
// at the left end of the chain plus the per-bond records that rebuild the
// right blocks during a measuring pass.
struct MeasurableState {
  ModelParams par;
  int L = 0;
  int n_pol = 0;
  int m = 0;
  std::vector<double> weights;        // density-mix weights actually used
  SiteChargeTable site;
  std::vector<Truncation> right_rec;  // index q in 3..L; built B(q)
  std::vector<Vec> psi;               // targets at the leftmost step, unit norm
};

struct GroundStateResult {
  double e0 = 0.0;
  double e1 = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int n_sweeps = 0;            // completed full sweeps
  double max_discarded = 0.0;  // largest truncation weight of the last sweep
  std::vector<double> sweep_e0;
  std::vector<StepRecord> steps;
  MeasurableState state;
};

// Ground-state run in the fixed polariton sector.  e0 is the lowest energy
// seen during the final sweep (a variational upper bound); e1 is the second
// target at the same step when two targets are requested.
GroundStateResult dmrg_run(const ModelParams& par, int L, int n_pol,
                           const DmrgConfig& cfg = {});

}  // namespace ckchain
