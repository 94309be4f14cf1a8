#pragma once

// Charge-blocked linear algebra for the conserving renormalization engine:
// bases split into polariton-number groups, operators stored as per-group
// dense blocks, two-factor product spaces with segment bookkeeping.

#include <cstdint>
#include <vector>

#include "ckchain/model.hpp"

namespace ckchain {

// ----------------------------------------------------------- charge bases

struct ChargeGroup {
  int charge = 0;
  int dim = 0;
  int offset = 0;
};

struct ChargeBasis {
  std::vector<ChargeGroup> groups;  // ascending charge
  int total_dim = 0;

  void finalize();           // recompute offsets and total dimension
  int find(int charge) const;  // group index, -1 when absent
};

ChargeBasis vacuum_basis();  // one state of charge zero

// site basis split by charge, with the flat-index members of each multiplet
struct SiteChargeTable {
  SiteBasis site;
  std::vector<int> charges;               // distinct, ascending
  std::vector<std::vector<int>> members;  // flat indices, ascending

  int find(int charge) const;
  int mult(int charge_ix) const { return int(members[charge_ix].size()); }
};

SiteChargeTable build_site_table(const SiteBasis& site);

// ------------------------------------------------------- blocked operators

// one-site operator reduced to its charge sub-blocks
struct SiteOpBlocks {
  int shift = 0;
  std::vector<Mat> sub;  // per source charge index; empty when target absent
};

SiteOpBlocks block_site_op(const SiteChargeTable& table, const LocalOperator& op);
SiteOpBlocks site_identity_blocks(const SiteChargeTable& table);

// operator on a ChargeBasis: dense block per source group, fixed charge shift
struct QOp {
  int shift = 0;
  std::vector<Mat> blocks;  // indexed by source group; empty when target absent
};

QOp qop_zero(const ChargeBasis& basis, int shift);
QOp qop_identity(const ChargeBasis& basis);
// into += coeff * other (bases and shifts must agree)
void qop_add(QOp& into, const ChargeBasis& basis, const QOp& other, double coeff);

// --------------------------------------------------------- enlarged bases

// A block-site product basis grouped by total charge.  Within a charge group
// the states are laid out segment by segment; inside a segment the layout is
//   block-major (block x site):  pos = alpha * site_mult + s
//   site-major  (site x block):  pos = s * block_dim + beta
struct Segment {
  int block_group = 0;    // group index in the block basis
  int site_charge_ix = 0;  // charge index in the site table
  int offset = 0;         // offset inside the enlarged group
  int block_dim = 0;
  int site_mult = 0;
};

struct EnlargedBasis {
  bool block_major = true;
  ChargeBasis grouped;
  std::vector<std::vector<Segment>> segments;  // per group

  // segment lookup inside a group; -1 when absent
  int find_segment(int group, int block_group, int site_charge_ix) const;
};

EnlargedBasis enlarge_left(const ChargeBasis& block, const SiteChargeTable& site);
EnlargedBasis enlarge_right(const SiteChargeTable& site, const ChargeBasis& block);

// X (x) Y on a left-enlarged basis; X acts on the block, Y on the site
QOp lift_left(const EnlargedBasis& enl, const ChargeBasis& block,
              const SiteChargeTable& site, const QOp& x, const SiteOpBlocks& y);
// Y (x) X on a right-enlarged basis
QOp lift_right(const EnlargedBasis& enl, const SiteChargeTable& site,
               const ChargeBasis& block, const SiteOpBlocks& y, const QOp& x);

// ------------------------------------------------------------ superblock

// configurations pair one row group with the unique column group of the
// complementary charge; the wave function is one dense matrix per config
struct SuperCfg {
  int g_rows = 0, g_cols = 0;
  int c_rows = 0, c_cols = 0;
  int d_rows = 0, d_cols = 0;
  std::int64_t offset = 0;
};

struct SuperSpace {
  std::vector<SuperCfg> cfgs;
  std::int64_t dim = 0;
  int n_pol = 0;

  int cfg_of_row_charge(int c_rows) const;  // -1 when absent
};

SuperSpace make_superspace(const ChargeBasis& rows, const ChargeBasis& cols,
                           int n_pol);

// H = HL (x) 1 + 1 (x) HR + sum_k coeff_k A_k (x) B_k, all charge blocked
struct SuperPlan {
  struct Diag {
    int cfg;
    const Mat* hl;  // may be null
    const Mat* hr;
  };
  struct Bond {
    int src, dst;
    const Mat* a;
    const Mat* b;
    double coeff;
  };
  const SuperSpace* space = nullptr;
  std::vector<Diag> diag;
  std::vector<Bond> bond;
};

SuperPlan make_superplan(const SuperSpace& space, const QOp& hl, const QOp& hr,
                         const std::vector<const QOp*>& a,
                         const std::vector<const QOp*>& b,
                         const std::vector<double>& coeff);

void apply_superplan(const SuperPlan& plan, const Vec& x, Vec& y);

// expectation <x| A (x) B |y> for one product term (charge shifts must cancel)
double superblock_pair_expectation(const SuperSpace& space, const Vec& x,
                                   const Vec& y, const QOp& a, const QOp& b);

// ------------------------------------------------------------- truncation

struct Truncation {
  ChargeBasis kept;
  std::vector<Mat> iso;        // per source group: (source dim) x (kept dim)
  std::vector<int> src_group;  // kept group -> source group
  double discarded = 0.0;
  int kept_total = 0;
};

// reduced density blocks of the row / column factor of the wave function
std::vector<Mat> density_rows(const SuperSpace& space, const ChargeBasis& rows,
                              const std::vector<const Vec*>& states,
                              const std::vector<double>& weights);
std::vector<Mat> density_cols(const SuperSpace& space, const ChargeBasis& cols,
                              const std::vector<const Vec*>& states,
                              const std::vector<double>& weights);

// keep the m largest density eigenvalues; exact ties resolve to the lower
// charge and then to enumeration order
Truncation truncate_density(const ChargeBasis& basis,
                            const std::vector<Mat>& rho, int m);

// iso^T op iso on the kept basis
QOp transform_qop(const QOp& op, const ChargeBasis& src, const Truncation& tr);

// ------------------------------------------------------------- blocks

struct DmrgBlock {
  int n_sites = 0;
  ChargeBasis basis;
  QOp ham;
  std::vector<QOp> edge;  // left blocks: a, adag, s24, s42; right blocks: a, adag
};

DmrgBlock vacuum_left_block();
DmrgBlock vacuum_right_block();

struct EnlargedBlock {
  int n_sites = 0;
  EnlargedBasis basis;
  QOp ham;
  std::vector<QOp> free_ops;  // same role order as DmrgBlock::edge
};

EnlargedBlock build_left_enlarged(const DmrgBlock& block,
                                  const SiteChargeTable& site,
                                  const ModelParams& p);
EnlargedBlock build_right_enlarged(const SiteChargeTable& site,
                                   const DmrgBlock& block,
                                   const ModelParams& p);

DmrgBlock truncate_block(const EnlargedBlock& enl, const Truncation& tr);

// ------------------------------------------------------------- prediction

// carry the wave function from step p to p+1: rows contract through the
// fresh left truncation w, columns expand through the stored truncation v
// of the next right block (whose kept basis is b_next)
Vec predict_move_right(const Vec& psi, const SuperSpace& sp,
                       const SiteChargeTable& site, const Truncation& w,
                       const EnlargedBasis& er_p, const ChargeBasis& b_next,
                       const Truncation& v, const EnlargedBasis& el_new,
                       const SuperSpace& sp_new);

// carry the wave function from step p to p-1: columns contract through the
// fresh right truncation v, rows expand through the stored truncation w that
// built the current left block (whose kept basis is b_left)
Vec predict_move_left(const Vec& psi, const SuperSpace& sp,
                      const Truncation& v, const EnlargedBasis& el_p,
                      const ChargeBasis& b_left, const Truncation& w,
                      const EnlargedBasis& er_new, const SuperSpace& sp_new);

}  // namespace ckchain
