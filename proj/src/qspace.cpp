#include "ckchain/qspace.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace ckchain {

// ----------------------------------------------------------- charge bases

void ChargeBasis::finalize() {
  total_dim = 0;
  for (auto& g : groups) {
    g.offset = total_dim;
    total_dim += g.dim;
  }
}

int ChargeBasis::find(int charge) const {
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (groups[i].charge == charge) return int(i);
  return -1;
}

ChargeBasis vacuum_basis() {
  ChargeBasis b;
  b.groups.push_back({0, 1, 0});
  b.finalize();
  return b;
}

SiteChargeTable build_site_table(const SiteBasis& site) {
  SiteChargeTable t;
  t.site = site;
  for (int c = 0; c <= site.max_charge(); ++c) {
    std::vector<int> mem;
    for (int i = 0; i < site.dim; ++i)
      if (site.charge[i] == c) mem.push_back(i);
    if (!mem.empty()) {
      t.charges.push_back(c);
      t.members.push_back(std::move(mem));
    }
  }
  return t;
}

int SiteChargeTable::find(int charge) const {
  for (std::size_t i = 0; i < charges.size(); ++i)
    if (charges[i] == charge) return int(i);
  return -1;
}

// ------------------------------------------------------- blocked operators

SiteOpBlocks block_site_op(const SiteChargeTable& table, const LocalOperator& op) {
  if (!op.homogeneous)
    throw std::invalid_argument("block_site_op: operator mixes charge shifts");
  SiteOpBlocks out;
  out.shift = op.charge_shift;
  out.sub.resize(table.charges.size());
  for (std::size_t ci = 0; ci < table.charges.size(); ++ci) {
    const int ti = table.find(table.charges[ci] + op.charge_shift);
    if (ti < 0) continue;
    const auto& src = table.members[ci];
    const auto& tgt = table.members[ti];
    Mat m(tgt.size(), src.size());
    for (std::size_t j = 0; j < src.size(); ++j)
      for (std::size_t i = 0; i < tgt.size(); ++i)
        m(i, j) = op.matrix(tgt[i], src[j]);
    out.sub[ci] = std::move(m);
  }
  return out;
}

SiteOpBlocks site_identity_blocks(const SiteChargeTable& table) {
  SiteOpBlocks out;
  out.shift = 0;
  for (std::size_t ci = 0; ci < table.charges.size(); ++ci)
    out.sub.push_back(Mat::Identity(table.mult(int(ci)), table.mult(int(ci))));
  return out;
}

QOp qop_zero(const ChargeBasis& basis, int shift) {
  QOp op;
  op.shift = shift;
  op.blocks.resize(basis.groups.size());
  return op;
}

QOp qop_identity(const ChargeBasis& basis) {
  QOp op = qop_zero(basis, 0);
  for (std::size_t g = 0; g < basis.groups.size(); ++g)
    op.blocks[g] = Mat::Identity(basis.groups[g].dim, basis.groups[g].dim);
  return op;
}

void qop_add(QOp& into, const ChargeBasis& basis, const QOp& other, double coeff) {
  if (into.shift != other.shift)
    throw std::invalid_argument("qop_add: charge shifts differ");
  for (std::size_t g = 0; g < basis.groups.size(); ++g) {
    if (other.blocks[g].size() == 0) continue;
    if (into.blocks[g].size() == 0)
      into.blocks[g] = coeff * other.blocks[g];
    else
      into.blocks[g] += coeff * other.blocks[g];
  }
}

// --------------------------------------------------------- enlarged bases

namespace {

EnlargedBasis enlarge_impl(const ChargeBasis& block, const SiteChargeTable& site,
                           bool block_major) {
  EnlargedBasis enl;
  enl.block_major = block_major;

  // collect (charge, key...) tuples in the canonical segment order
  struct Key {
    int charge, primary, secondary, bg, ci;
  };
  std::vector<Key> keys;
  for (std::size_t bg = 0; bg < block.groups.size(); ++bg)
    for (std::size_t ci = 0; ci < site.charges.size(); ++ci) {
      const int c = block.groups[bg].charge + site.charges[ci];
      // block-major: order segments by block group, then site charge;
      // site-major: order by site charge, then block group
      const int primary = block_major ? int(bg) : int(ci);
      const int secondary = block_major ? int(ci) : int(bg);
      keys.push_back({c, primary, secondary, int(bg), int(ci)});
    }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    return std::tie(a.charge, a.primary, a.secondary) <
           std::tie(b.charge, b.primary, b.secondary);
  });

  int last_charge = INT_MIN;
  for (const Key& k : keys) {
    if (k.charge != last_charge) {
      enl.grouped.groups.push_back({k.charge, 0, 0});
      enl.segments.emplace_back();
      last_charge = k.charge;
    }
    auto& grp = enl.grouped.groups.back();
    Segment seg;
    seg.block_group = k.bg;
    seg.site_charge_ix = k.ci;
    seg.offset = grp.dim;
    seg.block_dim = block.groups[k.bg].dim;
    seg.site_mult = site.mult(k.ci);
    grp.dim += seg.block_dim * seg.site_mult;
    enl.segments.back().push_back(seg);
  }
  enl.grouped.finalize();
  return enl;
}

}  // namespace

int EnlargedBasis::find_segment(int group, int block_group,
                                int site_charge_ix) const {
  const auto& segs = segments[group];
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (segs[i].block_group == block_group &&
        segs[i].site_charge_ix == site_charge_ix)
      return int(i);
  return -1;
}

EnlargedBasis enlarge_left(const ChargeBasis& block, const SiteChargeTable& site) {
  return enlarge_impl(block, site, true);
}

EnlargedBasis enlarge_right(const SiteChargeTable& site, const ChargeBasis& block) {
  return enlarge_impl(block, site, false);
}

QOp lift_left(const EnlargedBasis& enl, const ChargeBasis& block,
              const SiteChargeTable& site, const QOp& x, const SiteOpBlocks& y) {
  QOp out = qop_zero(enl.grouped, x.shift + y.shift);
  for (std::size_t g = 0; g < enl.grouped.groups.size(); ++g) {
    const int c = enl.grouped.groups[g].charge;
    const int gt = enl.grouped.find(c + out.shift);
    if (gt < 0) continue;
    for (const Segment& seg : enl.segments[g]) {
      const Mat& xb = x.blocks[seg.block_group];
      if (xb.size() == 0) continue;
      const Mat& ys = y.sub[seg.site_charge_ix];
      if (ys.size() == 0) continue;
      const int bgt = block.find(block.groups[seg.block_group].charge + x.shift);
      const int cit = site.find(site.charges[seg.site_charge_ix] + y.shift);
      if (bgt < 0 || cit < 0) continue;
      const int st = enl.find_segment(gt, bgt, cit);
      if (st < 0) continue;
      const Segment& tseg = enl.segments[gt][st];
      if (out.blocks[g].size() == 0)
        out.blocks[g] = Mat::Zero(enl.grouped.groups[gt].dim,
                                  enl.grouped.groups[g].dim);
      // block-major kron: rows alpha' * mult' + s', cols alpha * mult + s
      for (int j = 0; j < seg.block_dim; ++j)
        for (int i = 0; i < tseg.block_dim; ++i)
          if (xb(i, j) != 0.0)
            out.blocks[g].block(tseg.offset + i * tseg.site_mult,
                                seg.offset + j * seg.site_mult,
                                tseg.site_mult, seg.site_mult) += xb(i, j) * ys;
    }
  }
  return out;
}

QOp lift_right(const EnlargedBasis& enl, const SiteChargeTable& site,
               const ChargeBasis& block, const SiteOpBlocks& y, const QOp& x) {
  QOp out = qop_zero(enl.grouped, x.shift + y.shift);
  for (std::size_t g = 0; g < enl.grouped.groups.size(); ++g) {
    const int c = enl.grouped.groups[g].charge;
    const int gt = enl.grouped.find(c + out.shift);
    if (gt < 0) continue;
    for (const Segment& seg : enl.segments[g]) {
      const Mat& xb = x.blocks[seg.block_group];
      if (xb.size() == 0) continue;
      const Mat& ys = y.sub[seg.site_charge_ix];
      if (ys.size() == 0) continue;
      const int bgt = block.find(block.groups[seg.block_group].charge + x.shift);
      const int cit = site.find(site.charges[seg.site_charge_ix] + y.shift);
      if (bgt < 0 || cit < 0) continue;
      const int st = enl.find_segment(gt, bgt, cit);
      if (st < 0) continue;
      const Segment& tseg = enl.segments[gt][st];
      if (out.blocks[g].size() == 0)
        out.blocks[g] = Mat::Zero(enl.grouped.groups[gt].dim,
                                  enl.grouped.groups[g].dim);
      // site-major kron: rows s' * bdim' + beta', cols s * bdim + beta
      for (int l = 0; l < seg.site_mult; ++l)
        for (int k = 0; k < tseg.site_mult; ++k)
          if (ys(k, l) != 0.0)
            out.blocks[g].block(tseg.offset + k * tseg.block_dim,
                                seg.offset + l * seg.block_dim,
                                tseg.block_dim, seg.block_dim) += ys(k, l) * xb;
    }
  }
  return out;
}

// ------------------------------------------------------------ superblock

SuperSpace make_superspace(const ChargeBasis& rows, const ChargeBasis& cols,
                           int n_pol) {
  SuperSpace sp;
  sp.n_pol = n_pol;
  for (std::size_t gr = 0; gr < rows.groups.size(); ++gr) {
    const int cr = rows.groups[gr].charge;
    const int gc = cols.find(n_pol - cr);
    if (gc < 0) continue;
    SuperCfg cfg;
    cfg.g_rows = int(gr);
    cfg.g_cols = gc;
    cfg.c_rows = cr;
    cfg.c_cols = n_pol - cr;
    cfg.d_rows = rows.groups[gr].dim;
    cfg.d_cols = cols.groups[gc].dim;
    cfg.offset = sp.dim;
    sp.dim += std::int64_t(cfg.d_rows) * cfg.d_cols;
    sp.cfgs.push_back(cfg);
  }
  return sp;
}

int SuperSpace::cfg_of_row_charge(int c_rows) const {
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    if (cfgs[i].c_rows == c_rows) return int(i);
  return -1;
}

SuperPlan make_superplan(const SuperSpace& space, const QOp& hl, const QOp& hr,
                         const std::vector<const QOp*>& a,
                         const std::vector<const QOp*>& b,
                         const std::vector<double>& coeff) {
  if (a.size() != b.size() || a.size() != coeff.size())
    throw std::invalid_argument("make_superplan: bond term lists mismatch");
  if (hl.shift != 0 || hr.shift != 0)
    throw std::invalid_argument("make_superplan: diagonal parts must conserve charge");
  SuperPlan plan;
  plan.space = &space;
  for (std::size_t c = 0; c < space.cfgs.size(); ++c) {
    const SuperCfg& cfg = space.cfgs[c];
    const Mat* l = hl.blocks[cfg.g_rows].size() ? &hl.blocks[cfg.g_rows] : nullptr;
    const Mat* r = hr.blocks[cfg.g_cols].size() ? &hr.blocks[cfg.g_cols] : nullptr;
    if (l || r) plan.diag.push_back({int(c), l, r});
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (coeff[k] == 0.0) continue;
    if (a[k]->shift + b[k]->shift != 0)
      throw std::invalid_argument("make_superplan: bond term shifts must cancel");
    for (std::size_t c = 0; c < space.cfgs.size(); ++c) {
      const SuperCfg& cfg = space.cfgs[c];
      const Mat& ab = a[k]->blocks[cfg.g_rows];
      const Mat& bb = b[k]->blocks[cfg.g_cols];
      if (ab.size() == 0 || bb.size() == 0) continue;
      const int dst = space.cfg_of_row_charge(cfg.c_rows + a[k]->shift);
      if (dst < 0) continue;
      plan.bond.push_back({int(c), dst, &ab, &bb, coeff[k]});
    }
  }
  return plan;
}

void apply_superplan(const SuperPlan& plan, const Vec& x, Vec& y) {
  const SuperSpace& sp = *plan.space;
  y.setZero(sp.dim);
  for (const auto& d : plan.diag) {
    const SuperCfg& cfg = sp.cfgs[d.cfg];
    Eigen::Map<const Mat> mx(x.data() + cfg.offset, cfg.d_rows, cfg.d_cols);
    Eigen::Map<Mat> my(y.data() + cfg.offset, cfg.d_rows, cfg.d_cols);
    if (d.hl) my.noalias() += (*d.hl) * mx;
    if (d.hr) my.noalias() += mx * d.hr->transpose();
  }
  for (const auto& t : plan.bond) {
    const SuperCfg& src = sp.cfgs[t.src];
    const SuperCfg& dst = sp.cfgs[t.dst];
    Eigen::Map<const Mat> mx(x.data() + src.offset, src.d_rows, src.d_cols);
    Eigen::Map<Mat> my(y.data() + dst.offset, dst.d_rows, dst.d_cols);
    my.noalias() += t.coeff * ((*t.a) * (mx * t.b->transpose()));
  }
}

double superblock_pair_expectation(const SuperSpace& space, const Vec& x,
                                   const Vec& y, const QOp& a, const QOp& b) {
  if (a.shift + b.shift != 0)
    throw std::invalid_argument("superblock_pair_expectation: shifts must cancel");
  double out = 0.0;
  for (std::size_t c = 0; c < space.cfgs.size(); ++c) {
    const SuperCfg& src = space.cfgs[c];
    const Mat& ab = a.blocks[src.g_rows];
    const Mat& bb = b.blocks[src.g_cols];
    if (ab.size() == 0 || bb.size() == 0) continue;
    const int di = space.cfg_of_row_charge(src.c_rows + a.shift);
    if (di < 0) continue;
    const SuperCfg& dst = space.cfgs[di];
    Eigen::Map<const Mat> my(y.data() + src.offset, src.d_rows, src.d_cols);
    Eigen::Map<const Mat> mx(x.data() + dst.offset, dst.d_rows, dst.d_cols);
    out += (mx.transpose() * (ab * (my * bb.transpose()))).trace();
  }
  return out;
}

// ------------------------------------------------------------- truncation

std::vector<Mat> density_rows(const SuperSpace& space, const ChargeBasis& rows,
                              const std::vector<const Vec*>& states,
                              const std::vector<double>& weights) {
  std::vector<Mat> rho(rows.groups.size());
  for (const SuperCfg& cfg : space.cfgs) {
    Mat acc = Mat::Zero(cfg.d_rows, cfg.d_rows);
    for (std::size_t t = 0; t < states.size(); ++t) {
      Eigen::Map<const Mat> m(states[t]->data() + cfg.offset, cfg.d_rows,
                              cfg.d_cols);
      acc.noalias() += weights[t] * (m * m.transpose());
    }
    rho[cfg.g_rows] = std::move(acc);
  }
  return rho;
}

std::vector<Mat> density_cols(const SuperSpace& space, const ChargeBasis& cols,
                              const std::vector<const Vec*>& states,
                              const std::vector<double>& weights) {
  std::vector<Mat> rho(cols.groups.size());
  for (const SuperCfg& cfg : space.cfgs) {
    Mat acc = Mat::Zero(cfg.d_cols, cfg.d_cols);
    for (std::size_t t = 0; t < states.size(); ++t) {
      Eigen::Map<const Mat> m(states[t]->data() + cfg.offset, cfg.d_rows,
                              cfg.d_cols);
      acc.noalias() += weights[t] * (m.transpose() * m);
    }
    rho[cfg.g_cols] = std::move(acc);
  }
  return rho;
}

Truncation truncate_density(const ChargeBasis& basis,
                            const std::vector<Mat>& rho, int m) {
  if (m < 1) throw std::invalid_argument("truncate_density: m must be >= 1");
  struct Cand {
    double value;
    int group;
    int col;  // eigenvector column, in descending-eigenvalue order
  };
  std::vector<Cand> cands;
  std::vector<Mat> vecs(basis.groups.size());
  std::vector<Vec> vals(basis.groups.size());
  for (std::size_t g = 0; g < basis.groups.size(); ++g) {
    const int d = basis.groups[g].dim;
    if (rho[g].size() == 0) {
      // group absent from the wave function: zero weight candidates
      vals[g] = Vec::Zero(d);
      vecs[g] = Mat::Identity(d, d);
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(rho[g]);
      // flip to descending order
      vals[g] = es.eigenvalues().reverse();
      vecs[g] = es.eigenvectors().rowwise().reverse();
    }
    for (int i = 0; i < d; ++i) cands.push_back({vals[g][i], int(g), i});
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.value != b.value) return a.value > b.value;
    if (basis.groups[a.group].charge != basis.groups[b.group].charge)
      return basis.groups[a.group].charge < basis.groups[b.group].charge;
    return std::tie(a.group, a.col) < std::tie(b.group, b.col);
  });
  const int keep = int(std::min<std::size_t>(m, cands.size()));

  std::vector<std::vector<int>> kept_cols(basis.groups.size());
  double kept_weight = 0.0;
  for (int i = 0; i < keep; ++i) {
    kept_cols[cands[i].group].push_back(cands[i].col);
    kept_weight += std::max(0.0, cands[i].value);
  }
  double total_weight = 0.0;
  for (std::size_t g = 0; g < basis.groups.size(); ++g)
    for (int i = 0; i < basis.groups[g].dim; ++i)
      total_weight += std::max(0.0, vals[g][i]);

  Truncation tr;
  tr.iso.resize(basis.groups.size());
  for (std::size_t g = 0; g < basis.groups.size(); ++g) {
    auto& cols_g = kept_cols[g];
    if (cols_g.empty()) {
      tr.iso[g] = Mat(basis.groups[g].dim, 0);
      continue;
    }
    std::sort(cols_g.begin(), cols_g.end());  // descending-eigenvalue order
    Mat w(basis.groups[g].dim, cols_g.size());
    for (std::size_t k = 0; k < cols_g.size(); ++k)
      w.col(k) = vecs[g].col(cols_g[k]);
    tr.iso[g] = std::move(w);
    tr.kept.groups.push_back({basis.groups[g].charge, int(cols_g.size()), 0});
    tr.src_group.push_back(int(g));
  }
  tr.kept.finalize();
  tr.kept_total = keep;
  tr.discarded = std::max(0.0, total_weight - kept_weight);
  return tr;
}

QOp transform_qop(const QOp& op, const ChargeBasis& src, const Truncation& tr) {
  QOp out = qop_zero(tr.kept, op.shift);
  for (std::size_t gk = 0; gk < tr.kept.groups.size(); ++gk) {
    const int gs = tr.src_group[gk];
    const Mat& blk = op.blocks[gs];
    if (blk.size() == 0) continue;
    const int ck_t = tr.kept.groups[gk].charge + op.shift;
    const int gk_t = tr.kept.find(ck_t);
    if (gk_t < 0) continue;
    const int gs_t = tr.src_group[gk_t];
    out.blocks[gk].noalias() =
        tr.iso[gs_t].transpose() * blk * tr.iso[gs];
  }
  return out;
}

// ------------------------------------------------------------- blocks

DmrgBlock vacuum_left_block() {
  DmrgBlock b;
  b.n_sites = 0;
  b.basis = vacuum_basis();
  b.ham = qop_zero(b.basis, 0);
  b.ham.blocks[0] = Mat::Zero(1, 1);
  for (int shift : {-1, 1, -1, 1}) b.edge.push_back(qop_zero(b.basis, shift));
  return b;
}

DmrgBlock vacuum_right_block() {
  DmrgBlock b;
  b.n_sites = 0;
  b.basis = vacuum_basis();
  b.ham = qop_zero(b.basis, 0);
  b.ham.blocks[0] = Mat::Zero(1, 1);
  for (int shift : {-1, 1}) b.edge.push_back(qop_zero(b.basis, shift));
  return b;
}

EnlargedBlock build_left_enlarged(const DmrgBlock& block,
                                  const SiteChargeTable& site,
                                  const ModelParams& p) {
  EnlargedBlock out;
  out.n_sites = block.n_sites + 1;
  out.basis = enlarge_left(block.basis, site);

  const SiteOpBlocks id_s = site_identity_blocks(site);
  const QOp id_b = qop_identity(block.basis);
  const Mat h1 = site_hamiltonian(site.site, p);
  const SiteOpBlocks h1_b =
      block_site_op(site, make_local_operator(site.site, h1, "h1"));

  out.ham = lift_left(out.basis, block.basis, site, block.ham, id_s);
  qop_add(out.ham, out.basis.grouped,
          lift_left(out.basis, block.basis, site, id_b, h1_b), 1.0);
  const auto terms = bond_terms(site.site, p);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const SiteOpBlocks rk = block_site_op(site, terms[k].right);
    qop_add(out.ham, out.basis.grouped,
            lift_left(out.basis, block.basis, site, block.edge[k], rk),
            terms[k].coeff);
  }
  // free-site operators in the edge role order a, adag, s24, s42
  const LocalOperator free_ops[4] = {
      annihilation_op(site.site), creation_op(site.site),
      atomic_op(site.site, 2, 4), atomic_op(site.site, 4, 2)};
  for (const auto& op : free_ops)
    out.free_ops.push_back(lift_left(out.basis, block.basis, site, id_b,
                                     block_site_op(site, op)));
  return out;
}

EnlargedBlock build_right_enlarged(const SiteChargeTable& site,
                                   const DmrgBlock& block,
                                   const ModelParams& p) {
  EnlargedBlock out;
  out.n_sites = block.n_sites + 1;
  out.basis = enlarge_right(site, block.basis);

  const SiteOpBlocks id_s = site_identity_blocks(site);
  const QOp id_b = qop_identity(block.basis);
  const Mat h1 = site_hamiltonian(site.site, p);
  const SiteOpBlocks h1_b =
      block_site_op(site, make_local_operator(site.site, h1, "h1"));

  out.ham = lift_right(out.basis, site, block.basis, id_s, block.ham);
  qop_add(out.ham, out.basis.grouped,
          lift_right(out.basis, site, block.basis, h1_b, id_b), 1.0);
  // bond between the free site and the block edge; the block stores the a and
  // adag of its first site as edge roles {a, adag}
  const auto terms = bond_terms(site.site, p);
  const int right_edge_role[4] = {1, 0, 1, 0};  // adag, a, adag, a
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const SiteOpBlocks lk = block_site_op(site, terms[k].left);
    qop_add(out.ham, out.basis.grouped,
            lift_right(out.basis, site, block.basis, lk,
                       block.edge[right_edge_role[k]]),
            terms[k].coeff);
  }
  const LocalOperator free_ops[2] = {annihilation_op(site.site),
                                     creation_op(site.site)};
  for (const auto& op : free_ops)
    out.free_ops.push_back(lift_right(out.basis, site, block.basis,
                                      block_site_op(site, op), id_b));
  return out;
}

DmrgBlock truncate_block(const EnlargedBlock& enl, const Truncation& tr) {
  DmrgBlock b;
  b.n_sites = enl.n_sites;
  b.basis = tr.kept;
  b.ham = transform_qop(enl.ham, enl.basis.grouped, tr);
  for (const QOp& op : enl.free_ops)
    b.edge.push_back(transform_qop(op, enl.basis.grouped, tr));
  return b;
}

// ------------------------------------------------------------- prediction

Vec predict_move_right(const Vec& psi, const SuperSpace& sp,
                       const SiteChargeTable& site, const Truncation& w,
                       const EnlargedBasis& er_p, const ChargeBasis& b_next,
                       const Truncation& v, const EnlargedBasis& el_new,
                       const SuperSpace& sp_new) {
  Vec out = Vec::Zero(sp_new.dim);
  for (const SuperCfg& cfg : sp.cfgs) {
    const Mat& wg = w.iso[cfg.g_rows];
    if (wg.cols() == 0) continue;
    const int gk = w.kept.find(cfg.c_rows);  // kept row group, same charge
    if (gk < 0) continue;
    Eigen::Map<const Mat> m(psi.data() + cfg.offset, cfg.d_rows, cfg.d_cols);
    const Mat n1 = wg.transpose() * m;  // kept x d_cols

    for (const Segment& seg : er_p.segments[cfg.g_cols]) {
      // site-major segment: columns seg.offset + s2 * block_dim + beta
      const int cs2 = site.charges[seg.site_charge_ix];
      const int cb3 = b_next.groups[seg.block_group].charge;
      const int gk3 = v.kept.find(cb3);
      if (gk3 < 0) continue;
      const Mat& iso = v.iso[v.src_group[gk3]];  // d_enl x kept(b_next group)

      const int ci_new = sp_new.cfg_of_row_charge(cfg.c_rows + cs2);
      if (ci_new < 0) continue;
      const SuperCfg& dst = sp_new.cfgs[ci_new];
      const int ts = el_new.find_segment(dst.g_rows, gk, seg.site_charge_ix);
      if (ts < 0) continue;
      const Segment& tseg = el_new.segments[dst.g_rows][ts];
      Eigen::Map<Mat> mo(out.data() + dst.offset, dst.d_rows, dst.d_cols);

      for (int s2 = 0; s2 < seg.site_mult; ++s2) {
        const Mat r = n1.middleCols(seg.offset + s2 * seg.block_dim,
                                    seg.block_dim) *
                      iso.transpose();  // kept x d_enl
        for (int a = 0; a < r.rows(); ++a)
          mo.row(tseg.offset + a * tseg.site_mult + s2) += r.row(a);
      }
    }
  }
  return out;
}

Vec predict_move_left(const Vec& psi, const SuperSpace& sp,
                      const Truncation& v, const EnlargedBasis& el_p,
                      const ChargeBasis& b_left, const Truncation& w,
                      const EnlargedBasis& er_new, const SuperSpace& sp_new) {
  Vec out = Vec::Zero(sp_new.dim);
  for (const SuperCfg& cfg : sp.cfgs) {
    const Mat& vg = v.iso[cfg.g_cols];
    if (vg.cols() == 0) continue;
    const int gkc = v.kept.find(cfg.c_cols);  // kept column group
    if (gkc < 0) continue;
    Eigen::Map<const Mat> m(psi.data() + cfg.offset, cfg.d_rows, cfg.d_cols);
    const Mat n1 = m * vg;  // d_rows x kept

    for (const Segment& seg : el_p.segments[cfg.g_rows]) {
      // block-major segment: rows seg.offset + alpha * site_mult + s1
      const int cb = b_left.groups[seg.block_group].charge;
      const int gkb = w.kept.find(cb);
      if (gkb < 0) continue;
      const Mat& iso = w.iso[w.src_group[gkb]];  // d_enl x block_dim

      const int ci_new = sp_new.cfg_of_row_charge(cb);
      if (ci_new < 0) continue;
      const SuperCfg& dst = sp_new.cfgs[ci_new];
      const int ts = er_new.find_segment(dst.g_cols, gkc, seg.site_charge_ix);
      if (ts < 0) continue;
      const Segment& tseg = er_new.segments[dst.g_cols][ts];
      Eigen::Map<Mat> mo(out.data() + dst.offset, dst.d_rows, dst.d_cols);

      Mat msub(seg.block_dim, n1.cols());
      for (int s1 = 0; s1 < seg.site_mult; ++s1) {
        for (int a = 0; a < seg.block_dim; ++a)
          msub.row(a) = n1.row(seg.offset + a * seg.site_mult + s1);
        mo.block(0, tseg.offset + s1 * tseg.block_dim, dst.d_rows,
                 tseg.block_dim)
            .noalias() += iso * msub;
      }
    }
  }
  return out;
}

}  // namespace ckchain

