#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <random>

#include "ckchain/ed.hpp"
#include "ckchain/linalg.hpp"
#include "ckchain/qspace.hpp"

using namespace ckchain;

namespace {

ModelParams params_at(double g2) {
  ModelParams p;
  p.g1 = 0.8;
  p.g2 = g2;
  p.t = 0.25;
  p.delta = -2.0;
  return p;
}

// truncation that keeps every state of a basis unchanged
Truncation identity_truncation(const ChargeBasis& b) {
  Truncation tr;
  tr.kept = b;
  tr.iso.reserve(b.groups.size());
  for (const auto& g : b.groups) tr.iso.push_back(Mat::Identity(g.dim, g.dim));
  tr.src_group.resize(b.groups.size());
  std::iota(tr.src_group.begin(), tr.src_group.end(), 0);
  tr.kept_total = b.total_dim;
  return tr;
}

// expand a blocked operator to a dense matrix in the grouped ordering
Mat qop_dense(const QOp& op, const ChargeBasis& basis) {
  Mat d = Mat::Zero(basis.total_dim, basis.total_dim);
  for (std::size_t g = 0; g < basis.groups.size(); ++g) {
    if (op.blocks[g].size() == 0) continue;
    const int gt = basis.find(basis.groups[g].charge + op.shift);
    REQUIRE(gt >= 0);
    d.block(basis.groups[gt].offset, basis.groups[g].offset,
            basis.groups[gt].dim, basis.groups[g].dim) = op.blocks[g];
  }
  return d;
}

struct EnlState {
  int block = -1;
  int s = -1;
};

// per-state factors of a block-major (left) enlarged basis
std::vector<EnlState> decode_left(const EnlargedBasis& enl,
                                  const ChargeBasis& block,
                                  const SiteChargeTable& site) {
  std::vector<EnlState> map(enl.grouped.total_dim);
  for (std::size_t g = 0; g < enl.grouped.groups.size(); ++g) {
    const int base = enl.grouped.groups[g].offset;
    for (const Segment& seg : enl.segments[g])
      for (int a = 0; a < seg.block_dim; ++a)
        for (int s = 0; s < seg.site_mult; ++s)
          map[base + seg.offset + a * seg.site_mult + s] = {
              block.groups[seg.block_group].offset + a,
              site.members[seg.site_charge_ix][s]};
  }
  for (const EnlState& e : map) REQUIRE(e.block >= 0);
  return map;
}

// per-state factors of a site-major (right) enlarged basis
std::vector<EnlState> decode_right(const EnlargedBasis& enl,
                                   const SiteChargeTable& site,
                                   const ChargeBasis& block) {
  std::vector<EnlState> map(enl.grouped.total_dim);
  for (std::size_t g = 0; g < enl.grouped.groups.size(); ++g) {
    const int base = enl.grouped.groups[g].offset;
    for (const Segment& seg : enl.segments[g])
      for (int s = 0; s < seg.site_mult; ++s)
        for (int b = 0; b < seg.block_dim; ++b)
          map[base + seg.offset + s * seg.block_dim + b] = {
              block.groups[seg.block_group].offset + b,
              site.members[seg.site_charge_ix][s]};
  }
  for (const EnlState& e : map) REQUIRE(e.block >= 0);
  return map;
}

// everything needed for a four-site superblock with untruncated blocks:
// left block of one site, two free sites, right block of one site
struct FourSites {
  ModelParams par;
  SiteBasis basis;
  SiteChargeTable site;
  DmrgBlock b1, b4;          // one-site blocks (kept untruncated)
  EnlargedBlock el0, el1;    // left enlargements of zero- and one-site blocks
  EnlargedBlock er4, er3;    // right enlargements, mirror side
  Truncation w1, v4;         // the identity truncations that made b1 and b4
  std::vector<int> s1_of_b1, s4_of_b4;  // block state -> site flat index
  SuperSpace sp;             // rows el1, cols er3
  SuperPlan plan;
  std::vector<BondTerm> terms;
  std::vector<const QOp*> bond_a, bond_b;
  std::vector<double> bond_c;

  explicit FourSites(int n_pol, double g2 = 1.35)
      : par(params_at(g2)), basis(build_site_basis(3)),
        site(build_site_table(basis)) {
    el0 = build_left_enlarged(vacuum_left_block(), site, par);
    w1 = identity_truncation(el0.basis.grouped);
    b1 = truncate_block(el0, w1);
    el1 = build_left_enlarged(b1, site, par);

    er4 = build_right_enlarged(site, vacuum_right_block(), par);
    v4 = identity_truncation(er4.basis.grouped);
    b4 = truncate_block(er4, v4);
    er3 = build_right_enlarged(site, b4, par);

    for (const EnlState& e : decode_left(el0.basis, vacuum_basis(), site))
      s1_of_b1.push_back(e.s);
    for (const EnlState& e : decode_right(er4.basis, site, vacuum_basis()))
      s4_of_b4.push_back(e.s);

    sp = make_superspace(el1.basis.grouped, er3.basis.grouped, n_pol);
    terms = bond_terms(basis, par);
    const int role[4] = {1, 0, 1, 0};  // right partner of each bond term
    for (std::size_t k = 0; k < terms.size(); ++k) {
      bond_a.push_back(&el1.free_ops[k]);
      bond_b.push_back(&er3.free_ops[role[k]]);
      bond_c.push_back(terms[k].coeff);
    }
    plan = make_superplan(sp, el1.ham, er3.ham, bond_a, bond_b, bond_c);
  }

  // superblock coordinate -> packed four-site product state
  std::vector<std::uint64_t> packed_states() const {
    const auto dl = decode_left(el1.basis, b1.basis, site);
    const auto dr = decode_right(er3.basis, site, b4.basis);
    std::vector<std::uint64_t> packed(sp.dim);
    for (const SuperCfg& cfg : sp.cfgs) {
      const int ro = el1.basis.grouped.groups[cfg.g_rows].offset;
      const int co = er3.basis.grouped.groups[cfg.g_cols].offset;
      for (int c = 0; c < cfg.d_cols; ++c)
        for (int r = 0; r < cfg.d_rows; ++r) {
          const int s1 = s1_of_b1[dl[ro + r].block];
          const int s2 = dl[ro + r].s;
          const int s3 = dr[co + c].s;
          const int s4 = s4_of_b4[dr[co + c].block];
          packed[cfg.offset + std::int64_t(c) * cfg.d_rows + r] =
              (std::uint64_t(s1) << 18) | (std::uint64_t(s2) << 12) |
              (std::uint64_t(s3) << 6) | std::uint64_t(s4);
        }
    }
    return packed;
  }

  Vec ground(double* energy) const {
    LanczosOptions opt;
    opt.seed = 4242;
    auto apply = [&](const Vec& x, Vec& y) { apply_superplan(plan, x, y); };
    LanczosResult res = lanczos_lowest(sp.dim, apply, opt);
    REQUIRE(res.converged);
    *energy = res.values[0];
    return res.vectors.col(0);
  }
};

}  // namespace

TEST_CASE("site charge table and blocked site operators") {
  SiteBasis b = build_site_basis(3);
  SiteChargeTable t = build_site_table(b);

  REQUIRE(t.charges == std::vector<int>({0, 1, 2, 3, 4, 5}));
  const int mults[6] = {1, 3, 4, 4, 3, 1};
  int total = 0;
  for (int c = 0; c < 6; ++c) {
    CHECK(t.mult(c) == mults[c]);
    for (int m : t.members[c]) CHECK(b.charge[m] == c);
    total += t.mult(c);
  }
  CHECK(total == b.dim);

  // blocked annihilation operator reassembles to the dense matrix
  const LocalOperator a = annihilation_op(b);
  SiteOpBlocks ab = block_site_op(t, a);
  CHECK(ab.shift == -1);
  Mat dense = Mat::Zero(b.dim, b.dim);
  for (std::size_t ci = 0; ci < t.charges.size(); ++ci) {
    if (ab.sub[ci].size() == 0) continue;
    const int ti = t.find(t.charges[ci] - 1);
    REQUIRE(ti >= 0);
    for (std::size_t j = 0; j < t.members[ci].size(); ++j)
      for (std::size_t i = 0; i < t.members[ti].size(); ++i)
        dense(t.members[ti][i], t.members[ci][j]) = ab.sub[ci](i, j);
  }
  CHECK((dense - a.matrix).norm() == 0.0);
  CHECK(ab.sub[0].size() == 0);  // charge zero annihilates to nothing

  const SiteOpBlocks id = site_identity_blocks(t);
  for (int c = 0; c < 6; ++c) CHECK(id.sub[c].isIdentity(0.0));

  // an operator that mixes charge shifts is rejected
  Mat mix = a.matrix + a.matrix.transpose();
  CHECK_THROWS_AS(block_site_op(t, make_local_operator(b, mix, "mix")),
                  std::invalid_argument);
}

TEST_CASE("enlarged basis layout invariants") {
  SiteBasis b = build_site_basis(3);
  SiteChargeTable t = build_site_table(b);

  // two-site space built from a one-site "block" (the grouped site basis)
  ChargeBasis one;
  for (std::size_t c = 0; c < t.charges.size(); ++c)
    one.groups.push_back({t.charges[c], t.mult(int(c)), 0});
  one.finalize();
  REQUIRE(one.total_dim == 16);

  for (bool left : {true, false}) {
    const EnlargedBasis enl =
        left ? enlarge_left(one, t) : enlarge_right(t, one);
    CHECK(enl.block_major == left);
    CHECK(enl.grouped.total_dim == 256);

    int last_charge = -1;
    for (std::size_t g = 0; g < enl.grouped.groups.size(); ++g) {
      const auto& grp = enl.grouped.groups[g];
      CHECK(grp.charge > last_charge);
      last_charge = grp.charge;

      // segments tile the group and follow the canonical order
      int expect_offset = 0;
      std::pair<int, int> last_key{-1, -1};
      for (const Segment& seg : enl.segments[g]) {
        CHECK(seg.offset == expect_offset);
        expect_offset += seg.block_dim * seg.site_mult;
        CHECK(one.groups[seg.block_group].charge +
                  t.charges[seg.site_charge_ix] ==
              grp.charge);
        const std::pair<int, int> key =
            left ? std::make_pair(seg.block_group, seg.site_charge_ix)
                 : std::make_pair(seg.site_charge_ix, seg.block_group);
        CHECK(key > last_key);
        last_key = key;
        const int found =
            enl.find_segment(int(g), seg.block_group, seg.site_charge_ix);
        CHECK(enl.segments[g][found].offset == seg.offset);
      }
      CHECK(expect_offset == grp.dim);
    }

    // every product state appears exactly once
    const auto map = left ? decode_left(enl, one, t) : decode_right(enl, t, one);
    std::vector<int> seen(256, 0);
    for (const EnlState& e : map) ++seen[e.block * 16 + e.s];
    for (int v : seen) CHECK(v == 1);
  }
}

TEST_CASE("enlarged block matches the dense two-site chain") {
  const FourSites fs(4);
  const Mat h2 = Mat(assemble_chain(fs.basis, fs.par, 2));

  // left side: block of site one plus free site two
  {
    const auto map = decode_left(fs.el1.basis, fs.b1.basis, fs.site);
    std::vector<int> tensor(map.size());
    for (std::size_t e = 0; e < map.size(); ++e)
      tensor[e] = fs.s1_of_b1[map[e].block] * 16 + map[e].s;

    const Mat hd = qop_dense(fs.el1.ham, fs.el1.basis.grouped);
    double err = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i)
      for (std::size_t j = 0; j < map.size(); ++j)
        err = std::max(err, std::abs(hd(i, j) - h2(tensor[i], tensor[j])));
    CHECK(err <= 1e-12);

    // free-site operators act on the second factor only
    const Mat ad = qop_dense(fs.el1.free_ops[0], fs.el1.basis.grouped);
    const Mat a1 = annihilation_op(fs.basis).matrix;
    err = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i)
      for (std::size_t j = 0; j < map.size(); ++j) {
        const double want = (tensor[i] / 16 == tensor[j] / 16)
                                ? a1(tensor[i] % 16, tensor[j] % 16)
                                : 0.0;
        err = std::max(err, std::abs(ad(i, j) - want));
      }
    CHECK(err <= 1e-12);
  }

  // right side: free site three plus block of site four
  {
    const auto map = decode_right(fs.er3.basis, fs.site, fs.b4.basis);
    std::vector<int> tensor(map.size());
    for (std::size_t e = 0; e < map.size(); ++e)
      tensor[e] = map[e].s * 16 + fs.s4_of_b4[map[e].block];

    const Mat hd = qop_dense(fs.er3.ham, fs.er3.basis.grouped);
    double err = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i)
      for (std::size_t j = 0; j < map.size(); ++j)
        err = std::max(err, std::abs(hd(i, j) - h2(tensor[i], tensor[j])));
    CHECK(err <= 1e-12);

    const Mat ad = qop_dense(fs.er3.free_ops[1], fs.er3.basis.grouped);
    const Mat c1 = creation_op(fs.basis).matrix;
    err = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i)
      for (std::size_t j = 0; j < map.size(); ++j) {
        const double want = (tensor[i] % 16 == tensor[j] % 16)
                                ? c1(tensor[i] / 16, tensor[j] / 16)
                                : 0.0;
        err = std::max(err, std::abs(ad(i, j) - want));
      }
    CHECK(err <= 1e-12);
  }
}

TEST_CASE("superblock application matches the exact four-site sector") {
  const FourSites fs(4);
  const SectorBasis sector = enumerate_sector(fs.basis, 4, 4);
  REQUIRE(std::int64_t(sector.dim()) == fs.sp.dim);

  // the packed states enumerate the sector exactly once
  const auto packed = fs.packed_states();
  std::vector<std::ptrdiff_t> perm(fs.sp.dim);
  std::vector<int> hits(sector.dim(), 0);
  for (std::int64_t i = 0; i < fs.sp.dim; ++i) {
    perm[i] = sector.index_of(packed[i]);
    REQUIRE(perm[i] >= 0);
    ++hits[perm[i]];
  }
  for (int h : hits) CHECK(h == 1);

  // matrix-vector products agree on random input
  const SpMat hs = sector_hamiltonian(sector, fs.par);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss;
  Vec x(fs.sp.dim);
  for (std::int64_t i = 0; i < fs.sp.dim; ++i) x[i] = gauss(rng);
  Vec y(fs.sp.dim);
  apply_superplan(fs.plan, x, y);

  Vec xe = Vec::Zero(sector.dim());
  for (std::int64_t i = 0; i < fs.sp.dim; ++i) xe[perm[i]] = x[i];
  const Vec ye = hs * xe;
  double err = 0.0;
  for (std::int64_t i = 0; i < fs.sp.dim; ++i)
    err = std::max(err, std::abs(y[i] - ye[perm[i]]));
  CHECK(err <= 1e-11);

  // ground energy against the dense sector solve
  double e0 = 0.0;
  const Vec psi = fs.ground(&e0);
  EdResult ed = ed_lowest_states(sector, fs.par);
  REQUIRE(ed.dense);
  CHECK(std::abs(e0 - ed.energies[0]) <= 1e-9);

  // pair expectations, including charge-shifted pairs
  const LocalOperator nph = photon_number_op(fs.basis);
  const LocalOperator a = annihilation_op(fs.basis);
  const LocalOperator adag = creation_op(fs.basis);
  const LocalOperator s24 = atomic_op(fs.basis, 2, 4);

  const QOp id_b1 = qop_identity(fs.b1.basis);
  const QOp id_b4 = qop_identity(fs.b4.basis);
  const QOp id_rows = qop_identity(fs.el1.basis.grouped);
  const QOp id_cols = qop_identity(fs.er3.basis.grouped);
  const QOp n2 = lift_left(fs.el1.basis, fs.b1.basis, fs.site, id_b1,
                           block_site_op(fs.site, nph));
  const QOp n3 = lift_right(fs.er3.basis, fs.site, fs.b4.basis,
                            block_site_op(fs.site, nph), id_b4);
  const QOp a2 = lift_left(fs.el1.basis, fs.b1.basis, fs.site, id_b1,
                           block_site_op(fs.site, a));
  const QOp c3 = lift_right(fs.er3.basis, fs.site, fs.b4.basis,
                            block_site_op(fs.site, adag), id_b4);
  const QOp x2 = lift_left(fs.el1.basis, fs.b1.basis, fs.site, id_b1,
                           block_site_op(fs.site, s24));

  const Vec& v0 = ed.vectors.col(0);
  CHECK(superblock_pair_expectation(fs.sp, psi, psi, n2, id_cols) ==
        doctest::Approx(ed_expectation_local(sector, v0, nph, 2)).epsilon(1e-8));
  CHECK(superblock_pair_expectation(fs.sp, psi, psi, id_rows, n3) ==
        doctest::Approx(ed_expectation_local(sector, v0, nph, 3)).epsilon(1e-8));
  CHECK(superblock_pair_expectation(fs.sp, psi, psi, n2, n3) ==
        doctest::Approx(ed_expectation_two_point(sector, v0, nph, 2, nph, 3))
            .epsilon(1e-8));
  CHECK(superblock_pair_expectation(fs.sp, psi, psi, a2, c3) ==
        doctest::Approx(ed_expectation_two_point(sector, v0, a, 2, adag, 3))
            .epsilon(1e-8));
  CHECK(superblock_pair_expectation(fs.sp, psi, psi, x2, c3) ==
        doctest::Approx(ed_expectation_two_point(sector, v0, s24, 2, adag, 3))
            .epsilon(1e-8));

  // mismatched shifts are rejected
  CHECK_THROWS_AS(superblock_pair_expectation(fs.sp, psi, psi, a2, n3),
                  std::invalid_argument);
}

TEST_CASE("density truncation keeps the right states") {
  ChargeBasis basis;
  basis.groups.push_back({0, 3, 0});
  basis.groups.push_back({1, 2, 0});
  basis.finalize();

  SUBCASE("diagonal weights with an exact cross-charge tie") {
    std::vector<Mat> rho(2);
    rho[0] = Eigen::Vector3d(0.05, 0.5, 0.2).asDiagonal();
    rho[1] = Eigen::Vector2d(0.2, 0.05).asDiagonal();

    const Truncation tr = truncate_density(basis, rho, 3);
    CHECK(tr.kept_total == 3);
    REQUIRE(tr.kept.groups.size() == 2);
    CHECK(tr.kept.groups[0].charge == 0);
    CHECK(tr.kept.groups[0].dim == 2);  // the tie resolves to the lower charge
    CHECK(tr.kept.groups[1].charge == 1);
    CHECK(tr.kept.groups[1].dim == 1);
    CHECK(tr.discarded == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(tr.src_group == std::vector<int>({0, 1}));

    // kept columns are the unit vectors at the two largest diagonal entries
    CHECK(tr.iso[0].col(0).cwiseAbs().isApprox(Eigen::Vector3d(0, 1, 0), 1e-12));
    CHECK(tr.iso[0].col(1).cwiseAbs().isApprox(Eigen::Vector3d(0, 0, 1), 1e-12));
    CHECK(tr.iso[1].col(0).cwiseAbs().isApprox(Eigen::Vector2d(1, 0), 1e-12));
  }

  SUBCASE("rotated density recovers the top eigenpairs") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    auto rand_mat = [&](int n) {
      Mat m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = gauss(rng);
      return m;
    };
    const Mat q0 = Eigen::HouseholderQR<Mat>(rand_mat(3)).householderQ();
    const Mat q1 = Eigen::HouseholderQR<Mat>(rand_mat(2)).householderQ();
    std::vector<Mat> rho(2);
    rho[0] = q0 * Eigen::Vector3d(0.55, 0.3, 0.01).asDiagonal() * q0.transpose();
    rho[1] = q1 * Eigen::Vector2d(0.12, 0.02).asDiagonal() * q1.transpose();

    const Truncation tr = truncate_density(basis, rho, 3);
    CHECK(tr.kept_total == 3);
    CHECK(tr.kept.groups[0].dim == 2);
    CHECK(tr.kept.groups[1].dim == 1);
    CHECK(tr.discarded == doctest::Approx(0.03).epsilon(1e-10));
    for (std::size_t g = 0; g < 2; ++g) {
      const Mat& w = tr.iso[g];
      CHECK((w.transpose() * w).isIdentity(1e-12));
      // kept columns are genuine eigenvectors of the density block
      for (int k = 0; k < w.cols(); ++k) {
        const Vec rv = rho[g] * w.col(k);
        const double lam = w.col(k).dot(rv);
        CHECK((rv - lam * w.col(k)).norm() <= 1e-12);
      }
    }

    // keeping everything discards nothing
    const Truncation full = truncate_density(basis, rho, 99);
    CHECK(full.kept_total == 5);
    CHECK(full.discarded <= 1e-12);
    CHECK(full.kept.groups[0].dim == 3);
    CHECK(full.kept.groups[1].dim == 2);
  }

  SUBCASE("transforming a shifted operator matches the dense sandwich") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    std::vector<Mat> rho(2);
    rho[0] = Mat::Zero(3, 3);
    rho[1] = Mat::Zero(2, 2);
    for (int i = 0; i < 3; ++i) rho[0](i, i) = 0.3 + 0.1 * i;
    rho[0](0, 1) = rho[0](1, 0) = 0.05;
    rho[1](0, 0) = 0.4;
    rho[1](1, 1) = 0.1;
    const Truncation tr = truncate_density(basis, rho, 3);

    QOp raise = qop_zero(basis, 1);
    raise.blocks[0] = Mat(2, 3);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) raise.blocks[0](i, j) = gauss(rng);

    const QOp out = transform_qop(raise, basis, tr);

    // dense comparison through the stacked isometry
    Mat w = Mat::Zero(basis.total_dim, tr.kept.total_dim);
    for (std::size_t gk = 0; gk < tr.kept.groups.size(); ++gk) {
      const int gs = tr.src_group[gk];
      w.block(basis.groups[gs].offset, tr.kept.groups[gk].offset,
              basis.groups[gs].dim, tr.kept.groups[gk].dim) = tr.iso[gs];
    }
    const Mat want = w.transpose() * qop_dense(raise, basis) * w;
    CHECK((qop_dense(out, tr.kept) - want).norm() <= 1e-12);
  }
}

TEST_CASE("wave function carriage is exact without truncation") {
  const FourSites fs(4);
  double e0 = 0.0;
  const Vec psi = fs.ground(&e0);

  auto energy_of = [](const SuperPlan& plan, const Vec& v) {
    Vec hv(v.size());
    apply_superplan(plan, v, hv);
    return v.dot(hv) / v.squaredNorm();
  };
  const int role[4] = {1, 0, 1, 0};

  SUBCASE("move right") {
    // grow the left block to two sites, keep everything
    const Truncation w = identity_truncation(fs.el1.basis.grouped);
    const DmrgBlock b2 = truncate_block(fs.el1, w);
    const EnlargedBlock el2 = build_left_enlarged(b2, fs.site, fs.par);
    const SuperSpace sp2 =
        make_superspace(el2.basis.grouped, fs.er4.basis.grouped, 4);
    REQUIRE(sp2.dim == fs.sp.dim);

    const Vec moved = predict_move_right(psi, fs.sp, fs.site, w, fs.er3.basis,
                                         fs.b4.basis, fs.v4, el2.basis, sp2);
    CHECK(moved.norm() == doctest::Approx(1.0).epsilon(1e-10));

    std::vector<const QOp*> a, b;
    std::vector<double> c;
    for (std::size_t k = 0; k < fs.terms.size(); ++k) {
      a.push_back(&el2.free_ops[k]);
      b.push_back(&fs.er4.free_ops[role[k]]);
      c.push_back(fs.terms[k].coeff);
    }
    const SuperPlan plan2 = make_superplan(sp2, el2.ham, fs.er4.ham, a, b, c);
    CHECK(energy_of(plan2, moved) == doctest::Approx(e0).epsilon(1e-9));

    // the carried state restarts the solver essentially converged
    LanczosOptions opt;
    opt.seed = 4242;
    const Mat start = moved;
    auto apply = [&](const Vec& x, Vec& y) { apply_superplan(plan2, x, y); };
    LanczosResult res = lanczos_lowest(sp2.dim, apply, opt, &start);
    CHECK(res.converged);
    CHECK(res.iterations <= 3);
    CHECK(std::abs(res.values[0] - e0) <= 1e-9);
  }

  SUBCASE("move left") {
    // grow the right block to two sites, keep everything
    const Truncation v = identity_truncation(fs.er3.basis.grouped);
    const DmrgBlock b3 = truncate_block(fs.er3, v);
    const EnlargedBlock er2 = build_right_enlarged(fs.site, b3, fs.par);
    const SuperSpace sp0 =
        make_superspace(fs.el0.basis.grouped, er2.basis.grouped, 4);
    REQUIRE(sp0.dim == fs.sp.dim);

    const Vec moved = predict_move_left(psi, fs.sp, v, fs.el1.basis,
                                        fs.b1.basis, fs.w1, er2.basis, sp0);
    CHECK(moved.norm() == doctest::Approx(1.0).epsilon(1e-10));

    std::vector<const QOp*> a, b;
    std::vector<double> c;
    for (std::size_t k = 0; k < fs.terms.size(); ++k) {
      a.push_back(&fs.el0.free_ops[k]);
      b.push_back(&er2.free_ops[role[k]]);
      c.push_back(fs.terms[k].coeff);
    }
    const SuperPlan plan0 = make_superplan(sp0, fs.el0.ham, er2.ham, a, b, c);
    CHECK(energy_of(plan0, moved) == doctest::Approx(e0).epsilon(1e-9));
  }
}

TEST_CASE("truncated carriage stays variational and tracks the lost weight") {
  const FourSites fs(4);
  double e0 = 0.0;
  const Vec psi = fs.ground(&e0);

  const auto rho = density_rows(fs.sp, fs.el1.basis.grouped, {&psi}, {1.0});
  const Truncation w = truncate_density(fs.el1.basis.grouped, rho, 20);
  CHECK(w.kept_total == 20);
  CHECK(w.discarded > 1e-12);
  CHECK(w.discarded < 1e-2);

  const DmrgBlock b2 = truncate_block(fs.el1, w);
  const EnlargedBlock el2 = build_left_enlarged(b2, fs.site, fs.par);
  const SuperSpace sp2 =
      make_superspace(el2.basis.grouped, fs.er4.basis.grouped, 4);
  const Vec moved = predict_move_right(psi, fs.sp, fs.site, w, fs.er3.basis,
                                       fs.b4.basis, fs.v4, el2.basis, sp2);

  // the carried norm drops by exactly the discarded density weight
  CHECK(moved.squaredNorm() ==
        doctest::Approx(1.0 - w.discarded).epsilon(1e-8));

  std::vector<const QOp*> a, b;
  std::vector<double> c;
  const int role[4] = {1, 0, 1, 0};
  for (std::size_t k = 0; k < fs.terms.size(); ++k) {
    a.push_back(&el2.free_ops[k]);
    b.push_back(&fs.er4.free_ops[role[k]]);
    c.push_back(fs.terms[k].coeff);
  }
  const SuperPlan plan2 = make_superplan(sp2, el2.ham, fs.er4.ham, a, b, c);
  Vec hv(moved.size());
  apply_superplan(plan2, moved, hv);
  const double e_pred = moved.dot(hv) / moved.squaredNorm();
  CHECK(e_pred >= e0 - 1e-9);  // variational in the reduced space
  CHECK(e_pred <= e0 + 0.1);   // and still an excellent starting point
}
