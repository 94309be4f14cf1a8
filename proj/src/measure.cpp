#include "ckchain/measure.hpp"

#include <stdexcept>

namespace ckchain {

namespace {

ChargeBasis right_basis_at(const MeasurableState& st, int q) {
  return q <= st.L ? st.right_rec[q].kept : vacuum_basis();
}

struct Replay {
  const MeasurableState& st;
  const std::vector<SiteRequest>& sites;
  const std::vector<PairRequest>& pairs;
  const int target;

  std::vector<double> site_out, pair_out;
  std::vector<QOp> dressed;        // per pair, on the current left block
  std::vector<char> dressed_live;

  ChargeBasis b_cur;     // left block basis B(p)
  EnlargedBasis el_cur;  // B(p) x site p+1
  EnlargedBasis er_cur;  // site p+2 x B(p+3)
  SuperSpace sp;
  std::vector<Vec> psi;  // all carried targets, unit norm

  Replay(const MeasurableState& st_, const std::vector<SiteRequest>& sites_,
         const std::vector<PairRequest>& pairs_, int target_)
      : st(st_), sites(sites_), pairs(pairs_), target(target_) {
    if (target < 0 || target >= int(st.psi.size()))
      throw std::invalid_argument("measure: target index out of range");
    for (const SiteRequest& r : sites) {
      if (r.i < 1 || r.i > st.L)
        throw std::invalid_argument("measure: site index out of range");
      if (!r.op.homogeneous || r.op.charge_shift != 0)
        throw std::invalid_argument(
            "measure: site operator must conserve charge");
    }
    for (const PairRequest& r : pairs) {
      if (r.i < 1 || r.j <= r.i || r.j > st.L)
        throw std::invalid_argument("measure: pair indices must satisfy i < j");
      if (!r.op_i.homogeneous || !r.op_j.homogeneous ||
          r.op_i.charge_shift + r.op_j.charge_shift != 0)
        throw std::invalid_argument("measure: pair charge shifts must cancel");
    }
  }

  void run() {
    b_cur = vacuum_basis();
    el_cur = enlarge_left(b_cur, st.site);
    er_cur = enlarge_right(st.site, right_basis_at(st, 3));
    sp = make_superspace(el_cur.grouped, er_cur.grouped, st.n_pol);
    psi = st.psi;
    for (const Vec& v : psi)
      if (v.size() != sp.dim)
        throw std::invalid_argument("measure: state does not match the run");

    site_out.assign(sites.size(), 0.0);
    pair_out.assign(pairs.size(), 0.0);
    dressed.resize(pairs.size());
    dressed_live.assign(pairs.size(), 0);

    for (int p = 0; p <= st.L - 2; ++p) {
      measure_at(p);
      if (p == st.L - 2) break;
      advance(p);
    }
  }

  void measure_at(int p) {
    const Vec& v = psi[target];
    const QOp id_rows = qop_identity(el_cur.grouped);
    const QOp id_cols = qop_identity(er_cur.grouped);
    const QOp id_bl = qop_identity(b_cur);
    const ChargeBasis b_right = right_basis_at(st, p + 3);
    const QOp id_br = qop_identity(b_right);

    for (std::size_t k = 0; k < sites.size(); ++k) {
      if (sites[k].i == p + 1) {
        const QOp a = lift_left(el_cur, b_cur, st.site, id_bl,
                                block_site_op(st.site, sites[k].op));
        site_out[k] = superblock_pair_expectation(sp, v, v, a, id_cols);
      } else if (p == st.L - 2 && sites[k].i == p + 2) {
        const QOp b = lift_right(er_cur, st.site, b_right,
                                 block_site_op(st.site, sites[k].op), id_br);
        site_out[k] = superblock_pair_expectation(sp, v, v, id_rows, b);
      }
    }

    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (pairs[k].j != p + 2) continue;
      const QOp b = lift_right(er_cur, st.site, b_right,
                               block_site_op(st.site, pairs[k].op_j), id_br);
      QOp a;
      if (pairs[k].i == p + 1) {
        a = lift_left(el_cur, b_cur, st.site, id_bl,
                      block_site_op(st.site, pairs[k].op_i));
      } else {
        a = lift_left(el_cur, b_cur, st.site, dressed[k],
                      site_identity_blocks(st.site));
      }
      pair_out[k] = superblock_pair_expectation(sp, v, v, a, b);
    }
  }

  void advance(int p) {
    std::vector<const Vec*> vs;
    for (const Vec& v : psi) vs.push_back(&v);
    const auto rho = density_rows(sp, el_cur.grouped, vs, st.weights);
    const Truncation w = truncate_density(el_cur.grouped, rho, st.m);

    // dress the operators of pairs that still await their partner site
    const SiteOpBlocks id_site = site_identity_blocks(st.site);
    const QOp id_bl = qop_identity(b_cur);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (pairs[k].j <= p + 2) {
        dressed_live[k] = 0;
        continue;
      }
      if (pairs[k].i == p + 1) {
        const QOp lifted = lift_left(el_cur, b_cur, st.site, id_bl,
                                     block_site_op(st.site, pairs[k].op_i));
        dressed[k] = transform_qop(lifted, el_cur.grouped, w);
        dressed_live[k] = 1;
      } else if (dressed_live[k]) {
        const QOp lifted = lift_left(el_cur, b_cur, st.site, dressed[k], id_site);
        dressed[k] = transform_qop(lifted, el_cur.grouped, w);
      }
    }

    const ChargeBasis b3 = right_basis_at(st, p + 3);
    ChargeBasis b_new = w.kept;
    EnlargedBasis el_new = enlarge_left(b_new, st.site);
    EnlargedBasis er_new = enlarge_right(st.site, right_basis_at(st, p + 4));
    SuperSpace sp_new = make_superspace(el_new.grouped, er_new.grouped, st.n_pol);
    for (Vec& v : psi) {
      Vec moved = predict_move_right(v, sp, st.site, w, er_cur, b3,
                                     st.right_rec[p + 3], el_new, sp_new);
      const double n = moved.norm();
      if (n > 1e-14) moved /= n;
      v = std::move(moved);
    }
    b_cur = std::move(b_new);
    el_cur = std::move(el_new);
    er_cur = std::move(er_new);
    sp = std::move(sp_new);
  }
};

}  // namespace

MeasureBatch measure_batch(const MeasurableState& st,
                           const std::vector<SiteRequest>& sites,
                           const std::vector<PairRequest>& pairs, int target) {
  Replay r(st, sites, pairs, target);
  r.run();
  return {std::move(r.site_out), std::move(r.pair_out)};
}

std::vector<double> measure_sites(const MeasurableState& st,
                                  const std::vector<SiteRequest>& sites,
                                  int target) {
  return measure_batch(st, sites, {}, target).site_values;
}

std::vector<double> measure_pairs(const MeasurableState& st,
                                  const std::vector<PairRequest>& pairs,
                                  int target) {
  return measure_batch(st, {}, pairs, target).pair_values;
}

double measure_local(const MeasurableState& st, const LocalOperator& op, int i,
                     int target) {
  return measure_sites(st, {{op, i}}, target)[0];
}

double measure_two_point(const MeasurableState& st, const LocalOperator& op_i,
                         int i, const LocalOperator& op_j, int j, int target) {
  return measure_pairs(st, {{op_i, i, op_j, j}}, target)[0];
}

}  // namespace ckchain
