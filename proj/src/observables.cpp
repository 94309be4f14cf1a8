#include "ckchain/observables.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

#include "ckchain/model.hpp"

namespace ckchain {

double recompute_gap(const GapRecord& rec) {
  if (rec.kind == GapKind::charge)
    return (rec.e_plus - rec.e_zero) - (rec.e_zero - rec.e_minus);
  return rec.e_one - rec.e_zero;
}

GapRecord charge_gap(const ModelParams& par, int L, const DmrgConfig& cfg) {
  if (L < 4) throw std::invalid_argument("charge_gap: L must be at least 4");

  GapRecord rec;
  rec.kind = GapKind::charge;
  rec.L = L;
  rec.converged = true;

  const int sectors[3] = {L - 1, L, L + 1};
  double total[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < 3; ++k) {
    const GroundStateResult r = dmrg_run(par, L, sectors[k], cfg);
    total[k] = r.e0;
    rec.converged = rec.converged && r.converged;
  }
  rec.total_minus = total[0];
  rec.total_zero = total[1];
  rec.total_plus = total[2];
  rec.e_minus = total[0] / L;
  rec.e_zero = total[1] / L;
  rec.e_plus = total[2] / L;
  rec.value = (rec.e_plus - rec.e_zero) - (rec.e_zero - rec.e_minus);
  return rec;
}

GapRecord neutral_gap(const ModelParams& par, int L, const DmrgConfig& cfg) {
  if (L < 4) throw std::invalid_argument("neutral_gap: L must be at least 4");

  DmrgConfig two = cfg;
  two.n_targets = std::max(2, cfg.n_targets);

  GapRecord rec;
  rec.kind = GapKind::neutral;
  rec.L = L;

  const GroundStateResult r = dmrg_run(par, L, L, two);
  rec.total_zero = r.e0;
  rec.total_one = r.e1;
  rec.e_zero = r.e0 / L;
  rec.e_one = r.e1 / L;
  rec.value = rec.e_one - rec.e_zero;
  rec.converged = r.converged && std::isfinite(r.e1);
  return rec;
}

PairIndex symmetric_pair(int L, int r) {
  if (r < 1 || r > L - 1)
    throw std::invalid_argument("symmetric_pair: need 1 <= r <= L-1");
  PairIndex p;
  if (r % 2 == 1) {
    p.i = (L - r + 1) / 2;
    p.j = (L + r + 1) / 2;
  } else {
    p.i = (L - r) / 2;
    p.j = (L + r) / 2;
  }
  if (p.i < 1)
    throw std::invalid_argument("symmetric_pair: distance too large for L");
  return p;
}

DwCurve dw_curve(const MeasurableState& st, const std::vector<int>& distances,
                 int target) {
  DwCurve curve;
  curve.L = st.L;
  curve.filling = double(st.n_pol) / st.L;

  const SiteBasis basis = build_site_basis(st.par.n_max);
  const LocalOperator npol = polariton_number_op(basis);

  // one request per distinct site, one per distance
  std::map<int, int> site_slot;
  std::vector<SiteRequest> sites;
  std::vector<PairRequest> pairs;
  std::vector<PairIndex> where;
  where.reserve(distances.size());
  for (int r : distances) {
    const PairIndex p = symmetric_pair(st.L, r);
    where.push_back(p);
    for (int s : {p.i, p.j}) {
      if (site_slot.count(s)) continue;
      site_slot[s] = int(sites.size());
      sites.push_back({npol, s});
    }
    pairs.push_back({npol, p.i, npol, p.j});
  }

  const MeasureBatch batch = measure_batch(st, sites, pairs, target);

  const double nbar = curve.filling;
  const int mid = st.L / 2;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const int r = distances[k];
    const PairIndex p = where[k];
    const double ni = batch.site_values[site_slot.at(p.i)];
    const double nj = batch.site_values[site_slot.at(p.j)];
    const double nn = batch.pair_values[k];
    const double sign = (r % 2 == 0) ? 1.0 : -1.0;
    const double value = sign * (nn - nbar * (ni + nj) + nbar * nbar);
    curve.points.push_back({r, p.i, p.j, value});
    if (r == mid) curve.midpoint = value;
  }
  return curve;
}

double dw_midpoint(const MeasurableState& st, int target) {
  const DwCurve c = dw_curve(st, {st.L / 2}, target);
  return c.points.front().value;
}

}  // namespace ckchain
