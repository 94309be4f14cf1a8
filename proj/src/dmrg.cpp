#include "ckchain/dmrg.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace ckchain {

void DmrgConfig::validate() const {
  if (m < 1) throw std::invalid_argument("DmrgConfig: m must be >= 1");
  if (m_warm < 0)
    throw std::invalid_argument("DmrgConfig: m_warm must be >= 0");
  if (n_targets < 1)
    throw std::invalid_argument("DmrgConfig: n_targets must be >= 1");
  if (n_sweeps_max < 1)
    throw std::invalid_argument("DmrgConfig: n_sweeps_max must be >= 1");
  if (!(energy_tol > 0.0) || !(solver_tol > 0.0) || !(final_tol > 0.0))
    throw std::invalid_argument("DmrgConfig: tolerances must be positive");
  if (solver_max_iter < 1)
    throw std::invalid_argument("DmrgConfig: solver_max_iter must be >= 1");
  if (!target_weights.empty()) {
    if (int(target_weights.size()) != n_targets)
      throw std::invalid_argument("DmrgConfig: weight list must match n_targets");
    for (double w : target_weights)
      if (!(w > 0.0))
        throw std::invalid_argument("DmrgConfig: weights must be positive");
  }
}

namespace {

// Enlarged blocks, superspace and the assembled plan of one step.  Heap-held
// behind a unique_ptr so the plan's pointers into the operator blocks stay
// valid for the lifetime of the object.
struct SuperCtx {
  EnlargedBlock el, er;
  SuperSpace sp;
  std::vector<const QOp*> bond_a, bond_b;
  std::vector<double> bond_c;
  SuperPlan plan;
};

struct Solved {
  Vec energies;
  Mat vectors;  // one unit column per target
  int iterations = 0;
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Engine {
  ModelParams par;
  int L;
  int n_pol;
  DmrgConfig cfg;
  SiteBasis basis;
  SiteChargeTable site;
  std::vector<BondTerm> terms;
  std::vector<double> weights;  // normalized target weights

  std::vector<DmrgBlock> left_blocks;   // by block length
  std::vector<DmrgBlock> right_blocks;  // by block length
  std::vector<Truncation> left_rec;     // q: built B(q) from B(q-1) x s_q
  std::vector<Truncation> right_rec;    // q: built B(q) from s_q x B(q+1)

  std::vector<StepRecord> steps;
  int solve_count = 0;
  int m_cur = 0;  // kept states of the current stage

  Engine(const ModelParams& par_, int L_, int n_pol_, const DmrgConfig& cfg_)
      : par(par_), L(L_), n_pol(n_pol_), cfg(cfg_) {
    par.validate();
    cfg.validate();
    if (L < 2) throw std::invalid_argument("dmrg_run: need at least two sites");
    basis = build_site_basis(par.n_max);
    site = build_site_table(basis);
    terms = bond_terms(basis, par);
    if (n_pol < 0 || n_pol > basis.max_charge() * L)
      throw std::invalid_argument("dmrg_run: polariton number out of range");

    weights.assign(cfg.n_targets, 1.0 / cfg.n_targets);
    if (!cfg.target_weights.empty()) {
      double sum = 0.0;
      for (double w : cfg.target_weights) sum += w;
      for (int t = 0; t < cfg.n_targets; ++t)
        weights[t] = cfg.target_weights[t] / sum;
    }

    left_blocks.assign(L + 1, DmrgBlock{});
    right_blocks.assign(L + 1, DmrgBlock{});
    left_rec.assign(L + 1, Truncation{});
    right_rec.assign(L + 2, Truncation{});
    left_blocks[0] = vacuum_left_block();
    right_blocks[0] = vacuum_right_block();
  }

  std::unique_ptr<SuperCtx> make_ctx(const DmrgBlock& bl, const DmrgBlock& br,
                                     int sector) const {
    auto c = std::make_unique<SuperCtx>();
    c->el = build_left_enlarged(bl, site, par);
    c->er = build_right_enlarged(site, br, par);
    c->sp = make_superspace(c->el.basis.grouped, c->er.basis.grouped, sector);
    static const int role[4] = {1, 0, 1, 0};  // right partner of each term
    for (std::size_t k = 0; k < terms.size(); ++k) {
      c->bond_a.push_back(&c->el.free_ops[k]);
      c->bond_b.push_back(&c->er.free_ops[role[k]]);
      c->bond_c.push_back(terms[k].coeff);
    }
    c->plan = make_superplan(c->sp, c->el.ham, c->er.ham, c->bond_a, c->bond_b,
                             c->bond_c);
    return c;
  }

  // Diagonal of the superblock Hamiltonian.  Every explicit bond term shifts
  // the block charge, so only the two enlarged-block Hamiltonians contribute.
  static Vec superblock_diag(const SuperCtx& c) {
    Vec d = Vec::Zero(c.sp.dim);
    for (const SuperCfg& cfg : c.sp.cfgs) {
      if (cfg.d_rows == 0 || cfg.d_cols == 0) continue;
      const Vec dl = c.el.ham.blocks[cfg.g_rows].diagonal();
      const Vec dr = c.er.ham.blocks[cfg.g_cols].diagonal();
      Eigen::Map<Mat> md(d.data() + cfg.offset, cfg.d_rows, cfg.d_cols);
      md.colwise() = dl;
      md.rowwise() += dr.transpose();
    }
    return d;
  }

  // warmup and the opening half sweep only seed the first full sweep, so
  // a loose eigensolve there costs nothing but saves many applications
  double warm_tol() const { return std::max(1e-5, cfg.solver_tol); }

  Solved solve(SuperCtx& c, const Mat* starts, double tol,
               bool final_quality = false) {
    if (c.sp.dim == 0)
      throw std::runtime_error(
          "dmrg_run: sector emptied by truncation; increase m");
    DavidsonOptions opt;
    opt.n_lowest = int(std::min<std::int64_t>(cfg.n_targets, c.sp.dim));
    opt.tol = tol;
    // tracking sweeps keep higher targets loose and may stop on an energy
    // plateau; the steps whose states are kept run everything tight
    opt.tol_excited = final_quality ? std::max(1e-7, tol) : std::max(1e-5, tol);
    if (!final_quality) opt.dtheta_tol = 0.05 * cfg.energy_tol * L;
    opt.max_iter = cfg.solver_max_iter;
    opt.seed = cfg.seed + 0x9e3779b97f4a7c15ull * std::uint64_t(++solve_count);
    const Vec diag = superblock_diag(c);
    auto apply = [&c](const Vec& x, Vec& y) { apply_superplan(c.plan, x, y); };
    LanczosResult res = davidson_lowest(c.sp.dim, apply, diag, opt, starts);
    Solved s;
    s.energies = res.values;
    s.vectors = res.vectors;
    s.iterations = res.iterations;
    return s;
  }

  void record(int sweep, int p, const SuperCtx& c, const Solved& s) {
    StepRecord r;
    r.sweep = sweep;
    r.p = p;
    r.dim = c.sp.dim;
    r.e0 = s.energies[0];
    if (s.energies.size() > 1) r.e1 = s.energies[1];
    r.iterations = s.iterations;
    steps.push_back(r);
  }

  std::vector<double> weights_for(int k) const {
    std::vector<double> w(weights.begin(), weights.begin() + k);
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    return w;
  }

  Truncation trunc_rows(const SuperCtx& c, const Mat& vecs) const {
    const int k = int(vecs.cols());
    std::vector<Vec> hold(k);
    std::vector<const Vec*> vs(k);
    for (int t = 0; t < k; ++t) {
      hold[t] = vecs.col(t);
      vs[t] = &hold[t];
    }
    const auto rho = density_rows(c.sp, c.el.basis.grouped, vs, weights_for(k));
    return truncate_density(c.el.basis.grouped, rho, m_cur);
  }

  Truncation trunc_cols(const SuperCtx& c, const Mat& vecs) const {
    const int k = int(vecs.cols());
    std::vector<Vec> hold(k);
    std::vector<const Vec*> vs(k);
    for (int t = 0; t < k; ++t) {
      hold[t] = vecs.col(t);
      vs[t] = &hold[t];
    }
    const auto rho = density_cols(c.sp, c.er.basis.grouped, vs, weights_for(k));
    return truncate_density(c.er.basis.grouped, rho, m_cur);
  }

  Mat predict_right_all(const SuperCtx& c, const SuperCtx& cn,
                        const Truncation& w, const Solved& s, int p) const {
    const Truncation& v = right_rec[p + 3];
    Mat starts(cn.sp.dim, s.vectors.cols());
    for (int t = 0; t < s.vectors.cols(); ++t) {
      const Vec x = s.vectors.col(t);
      Vec y = predict_move_right(x, c.sp, site, w, c.er.basis,
                                 right_blocks[L - p - 2].basis, v, cn.el.basis,
                                 cn.sp);
      const double n = y.norm();
      if (n > 1e-12) y /= n;
      starts.col(t) = y;
    }
    return starts;
  }

  Mat predict_left_all(const SuperCtx& c, const SuperCtx& cn,
                       const Truncation& v, const Solved& s, int p) const {
    const Truncation& w = left_rec[p];
    Mat starts(cn.sp.dim, s.vectors.cols());
    for (int t = 0; t < s.vectors.cols(); ++t) {
      const Vec x = s.vectors.col(t);
      Vec y = predict_move_left(x, c.sp, v, c.el.basis, left_blocks[p].basis, w,
                                cn.er.basis, cn.sp);
      const double n = y.norm();
      if (n > 1e-12) y /= n;
      starts.col(t) = y;
    }
    return starts;
  }

  // nearest polariton number with a non-empty superblock sector
  int feasible_sector(const ChargeBasis& rows, const ChargeBasis& cols,
                      int want) const {
    auto ok = [&](int nw) {
      return nw >= 0 && make_superspace(rows, cols, nw).dim > 0;
    };
    if (ok(want)) return want;
    const int span = rows.groups.back().charge + cols.groups.back().charge;
    for (int d = 1; d <= span + 1; ++d) {
      if (ok(want - d)) return want - d;
      if (ok(want + d)) return want + d;
    }
    throw std::runtime_error("dmrg_run: no feasible warmup sector");
  }

  void capture(GroundStateResult& out, const Solved& s) {
    out.steps = steps;
    MeasurableState& st = out.state;
    st.par = par;
    st.L = L;
    st.n_pol = n_pol;
    st.m = cfg.m;
    st.weights = weights_for(int(s.vectors.cols()));
    st.site = site;
    st.right_rec.assign(L + 2, Truncation{});
    for (int q = 3; q <= L; ++q) st.right_rec[q] = right_rec[q];
    for (int t = 0; t < s.vectors.cols(); ++t) {
      Vec v = s.vectors.col(t);
      const double n = v.norm();
      if (n > 0.0) v /= n;
      st.psi.push_back(std::move(v));
    }
  }

  GroundStateResult run() {
    GroundStateResult out;

    if (L == 2) {
      auto c = make_ctx(left_blocks[0], right_blocks[0], n_pol);
      if (c->sp.dim == 0) throw std::invalid_argument("dmrg_run: empty sector");
      Solved s =
          solve(*c, nullptr, std::min(cfg.final_tol, cfg.solver_tol), true);
      record(1, 0, *c, s);
      out.e0 = s.energies[0];
      if (s.energies.size() > 1) out.e1 = s.energies[1];
      out.converged = true;
      out.sweep_e0.push_back(out.e0);
      capture(out, s);
      return out;
    }

    // ---- infinite-size warmup at a ramped filling
    m_cur = (cfg.m_warm > 0 && cfg.m_warm < cfg.m) ? cfg.m_warm : cfg.m;
    int lenL = 0, lenR = 0;
    std::unique_ptr<SuperCtx> c;
    Solved s;
    while (lenL + lenR + 2 < L) {
      const int ell = lenL + lenR + 2;
      const int want = int(std::lround(double(n_pol) * ell / L));
      const EnlargedBasis rows = enlarge_left(left_blocks[lenL].basis, site);
      const EnlargedBasis cols = enlarge_right(site, right_blocks[lenR].basis);
      const int sector = feasible_sector(rows.grouped, cols.grouped, want);
      c = make_ctx(left_blocks[lenL], right_blocks[lenR], sector);
      s = solve(*c, nullptr, warm_tol());
      record(0, lenL, *c, s);
      if (lenL <= lenR) {
        const Truncation w = trunc_rows(*c, s.vectors);
        steps.back().discarded = w.discarded;
        left_rec[lenL + 1] = w;
        left_blocks[lenL + 1] = truncate_block(c->el, w);
        ++lenL;
      } else {
        const Truncation v = trunc_cols(*c, s.vectors);
        steps.back().discarded = v.discarded;
        right_rec[L - lenR] = v;
        right_blocks[lenR + 1] = truncate_block(c->er, v);
        ++lenR;
      }
    }

    // ---- solve at the meeting point, then walk to the left end
    int p = lenL;
    {
      auto cm = make_ctx(left_blocks[p], right_blocks[L - p - 2], n_pol);
      if (cm->sp.dim == 0)
        throw std::invalid_argument("dmrg_run: empty sector");
      c = std::move(cm);
    }
    s = solve(*c, nullptr, warm_tol());
    record(1, p, *c, s);
    double best_prev = s.energies[0];
    for (; p >= 1; --p) {
      const Truncation v = trunc_cols(*c, s.vectors);
      steps.back().discarded = v.discarded;
      right_rec[p + 2] = v;
      right_blocks[L - p - 1] = truncate_block(c->er, v);
      auto cn = make_ctx(left_blocks[p - 1], right_blocks[L - p - 1], n_pol);
      const Mat starts = predict_left_all(*c, *cn, v, s, p);
      s = solve(*cn, &starts, warm_tol());
      c = std::move(cn);
      record(1, p - 1, *c, s);
      best_prev = std::min(best_prev, s.energies[0]);
    }

    // ---- full sweeps until the sweep minimum settles; with a warm stage
    // ---- configured, repeat the loop once more at the full m
    double best = best_prev, best_e1 = kNaN, max_disc = 0.0;
    int sweep_id = 2;

    auto full_sweep = [&](double tol, bool final_quality) {
      best = std::numeric_limits<double>::infinity();
      best_e1 = kNaN;
      max_disc = 0.0;

      for (p = 0; p <= L - 3; ++p) {  // right pass
        const Truncation w = trunc_rows(*c, s.vectors);
        steps.back().discarded = w.discarded;
        max_disc = std::max(max_disc, w.discarded);
        left_rec[p + 1] = w;
        left_blocks[p + 1] = truncate_block(c->el, w);
        auto cn = make_ctx(left_blocks[p + 1], right_blocks[L - p - 3], n_pol);
        const Mat starts = predict_right_all(*c, *cn, w, s, p);
        s = solve(*cn, &starts, tol, final_quality);
        c = std::move(cn);
        record(sweep_id, p + 1, *c, s);
        if (s.energies[0] < best) {
          best = s.energies[0];
          best_e1 = s.energies.size() > 1 ? s.energies[1] : kNaN;
        }
      }
      for (p = L - 2; p >= 1; --p) {  // left pass
        const Truncation v = trunc_cols(*c, s.vectors);
        steps.back().discarded = v.discarded;
        max_disc = std::max(max_disc, v.discarded);
        right_rec[p + 2] = v;
        right_blocks[L - p - 1] = truncate_block(c->er, v);
        auto cn = make_ctx(left_blocks[p - 1], right_blocks[L - p - 1], n_pol);
        const Mat starts = predict_left_all(*c, *cn, v, s, p);
        s = solve(*cn, &starts, tol, final_quality);
        c = std::move(cn);
        record(sweep_id, p - 1, *c, s);
        if (s.energies[0] < best) {
          best = s.energies[0];
          best_e1 = s.energies.size() > 1 ? s.energies[1] : kNaN;
        }
      }

      out.sweep_e0.push_back(best);
      ++out.n_sweeps;
      ++sweep_id;
    };

    std::vector<int> stages;
    if (cfg.m_warm > 0 && cfg.m_warm < cfg.m) stages = {cfg.m_warm, cfg.m};
    else stages = {cfg.m};
    for (std::size_t stage = 0; stage < stages.size(); ++stage) {
      m_cur = stages[stage];
      if (stage > 0) best_prev = std::numeric_limits<double>::infinity();
      out.converged = false;
      // a warm stage only seeds the full stage, so it settles to a loose
      // threshold and never sweeps for long
      const bool warm = stage + 1 < stages.size();
      const double sweep_tol =
          (warm ? std::max(1e3 * cfg.energy_tol, 1e-6) : cfg.energy_tol) * L;
      const int sweep_cap = warm ? std::min(cfg.n_sweeps_max, 8)
                                 : cfg.n_sweeps_max;
      for (int sw = 0; sw < sweep_cap; ++sw) {
        full_sweep(cfg.solver_tol, false);
        if (std::abs(best_prev - best) < sweep_tol) {
          out.converged = !warm;
          break;
        }
        best_prev = best;
      }
    }

    // ---- polishing sweep: the states captured for measurement come from
    // ---- these tightly solved steps
    if (cfg.polish) full_sweep(std::min(cfg.final_tol, cfg.solver_tol), true);

    out.e0 = best;
    out.e1 = best_e1;
    out.max_discarded = max_disc;
    capture(out, s);
    return out;
  }
};

}  // namespace

GroundStateResult dmrg_run(const ModelParams& par, int L, int n_pol,
                           const DmrgConfig& cfg) {
  Engine eng(par, L, n_pol, cfg);
  return eng.run();
}

}  // namespace ckchain
