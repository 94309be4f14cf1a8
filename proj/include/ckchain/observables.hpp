#pragma once

// The three diagnostics the phase diagram is built from: the charge gap
// (particle-hole excitations), the neutral gap (lowest excitation at fixed
// polariton number), and the staggered density-wave correlator measured
// symmetrically about the chain center.

#include <limits>
#include <vector>

#include "ckchain/dmrg.hpp"
#include "ckchain/measure.hpp"

namespace ckchain {

enum class GapKind { charge, neutral };

// A finite-size gap with the sector energies that produced it, so the value
// stays recomputable.  Energies are stored both per site (the convention all
// gap formulas use) and as totals.
struct GapRecord {
  GapKind kind = GapKind::charge;
  int L = 0;
  double value = 0.0;  // per-site gap, units of the drive amplitude
  // per-site sector energies: charge uses minus/zero/plus, neutral zero/one
  double e_minus = std::numeric_limits<double>::quiet_NaN();
  double e_zero = std::numeric_limits<double>::quiet_NaN();
  double e_plus = std::numeric_limits<double>::quiet_NaN();
  double e_one = std::numeric_limits<double>::quiet_NaN();
  // the same energies as chain totals
  double total_minus = std::numeric_limits<double>::quiet_NaN();
  double total_zero = std::numeric_limits<double>::quiet_NaN();
  double total_plus = std::numeric_limits<double>::quiet_NaN();
  double total_one = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;  // all contributing runs converged
};

// the gap implied by the stored per-site inputs (consistency check)
double recompute_gap(const GapRecord& rec);

// Charge gap at unit filling reference: three ground-state runs in the
// sectors N = L-1, L, L+1; value = (E+ - E0) - (E0 - E-) per site.
GapRecord charge_gap(const ModelParams& par, int L, const DmrgConfig& cfg);

// Neutral gap: one two-target run in the sector N = L; value = E1 - E0 per
// site.  The run keeps at least two targets regardless of cfg.n_targets.
GapRecord neutral_gap(const ModelParams& par, int L, const DmrgConfig& cfg);

// Index pair at distance r placed symmetrically about the chain center:
// odd r -> i = (L-r+1)/2, j = (L+r+1)/2; even r -> i = (L-r)/2, j = (L+r)/2
// (1-based, integer division).  Requires 1 <= r <= L-1 and i >= 1.
struct PairIndex {
  int i = 0;
  int j = 0;
};
PairIndex symmetric_pair(int L, int r);

// one staggered correlator value C(r) = (-1)^r <dn_i dn_j> at the pair above
struct DwPoint {
  int r = 0;
  int i = 0;
  int j = 0;
  double value = 0.0;
};

struct DwCurve {
  int L = 0;
  double filling = 1.0;  // exact sector filling N/L
  std::vector<DwPoint> points;
  // value at the midpoint distance r = L/2 (floor), when it was requested
  double midpoint = std::numeric_limits<double>::quiet_NaN();
};

// Staggered correlator at the requested distances, measured in one pass on a
// converged state.  The fluctuation reference is the exact sector filling
// N/L, not a measured average.
DwCurve dw_curve(const MeasurableState& st, const std::vector<int>& distances,
                 int target = 0);

// convenience: the single midpoint value C(L/2)
double dw_midpoint(const MeasurableState& st, int target = 0);

}  // namespace ckchain
