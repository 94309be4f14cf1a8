#include "ckchain/ed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ckchain {

// ------------------------------------------------------------ sector basis

std::ptrdiff_t SectorBasis::index_of(std::uint64_t state) const {
  auto it = std::lower_bound(states.begin(), states.end(), state);
  if (it == states.end() || *it != state) return -1;
  return it - states.begin();
}

SectorBasis enumerate_sector(const SiteBasis& site, int L, int n_pol) {
  if (L < 1) throw std::invalid_argument("enumerate_sector: L must be >= 1");
  if (L > 10)
    throw std::invalid_argument("enumerate_sector: packed storage limited to L <= 10");
  if (site.dim > 64)
    throw std::invalid_argument("enumerate_sector: site dimension exceeds packing");

  SectorBasis basis;
  basis.L = L;
  basis.n_pol = n_pol;
  basis.site = site;
  if (n_pol < 0 || n_pol > L * site.max_charge()) return basis;  // empty, valid

  const int cmax = site.max_charge();
  std::vector<int> digits(L, 0);
  // depth-first enumeration in lexicographic order with charge pruning
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == L) {
      if (rem == 0) {
        std::uint64_t s = 0;
        for (int i = 0; i < L; ++i) s = (s << 6) | std::uint64_t(digits[i]);
        basis.states.push_back(s);
      }
      return;
    }
    for (int d = 0; d < site.dim; ++d) {
      const int c = site.charge[d];
      if (c > rem) continue;
      if (rem - c > (L - pos - 1) * cmax) continue;
      digits[pos] = d;
      self(self, pos + 1, rem - c);
    }
  };
  rec(rec, 0, n_pol);
  return basis;
}

// ------------------------------------------------------------- assembly

namespace {

using NzCols = std::vector<std::vector<std::pair<int, double>>>;

NzCols nonzero_columns(const Mat& m) {
  NzCols out(m.cols());
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0) out[c].push_back({r, m(r, c)});
  return out;
}

}  // namespace

SpMat sector_hamiltonian(const SectorBasis& basis, const ModelParams& p) {
  p.validate();
  if (basis.site.n_max != p.n_max)
    throw std::invalid_argument("sector_hamiltonian: basis/params cutoff mismatch");
  const int L = basis.L;
  const NzCols h1nz = nonzero_columns(site_hamiltonian(basis.site, p));
  std::vector<std::pair<NzCols, NzCols>> bondnz;
  std::vector<double> coeff;
  for (const auto& term : bond_terms(basis.site, p)) {
    bondnz.push_back({nonzero_columns(term.left.matrix),
                      nonzero_columns(term.right.matrix)});
    coeff.push_back(term.coeff);
  }

  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t col = 0; col < basis.dim(); ++col) {
    const std::uint64_t s = basis.states[col];
    for (int i = 0; i < L; ++i) {
      for (const auto& [r, v] : h1nz[basis.digit(s, i)]) {
        const auto row = basis.index_of(basis.replace(s, i, r));
        if (row >= 0) trip.emplace_back(row, col, v);
      }
    }
    for (int i = 0; i + 1 < L; ++i) {
      for (std::size_t k = 0; k < bondnz.size(); ++k) {
        for (const auto& [rl, vl] : bondnz[k].first[basis.digit(s, i)]) {
          const std::uint64_t mid = basis.replace(s, i, rl);
          for (const auto& [rr, vr] : bondnz[k].second[basis.digit(s, i + 1)]) {
            const auto row = basis.index_of(basis.replace(mid, i + 1, rr));
            if (row >= 0) trip.emplace_back(row, col, coeff[k] * vl * vr);
          }
        }
      }
    }
  }
  SpMat h(basis.dim(), basis.dim());
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

// ------------------------------------------------------------------ solver

EdResult ed_lowest_states(const SectorBasis& basis, const ModelParams& p,
                          const EdOptions& opt) {
  if (basis.dim() == 0)
    throw std::invalid_argument("ed_lowest_states: empty polariton sector");
  if (opt.n_states < 1)
    throw std::invalid_argument("ed_lowest_states: n_states must be >= 1");
  const int k = int(std::min<std::size_t>(opt.n_states, basis.dim()));
  const SpMat h = sector_hamiltonian(basis, p);

  EdResult res;
  if (basis.dim() <= opt.dense_threshold) {
    const Mat dense_h(h);
    Eigen::SelfAdjointEigenSolver<Mat> es(dense_h);
    res.energies = es.eigenvalues().head(k);
    res.vectors = es.eigenvectors().leftCols(k);
    res.dense = true;
    res.converged = true;
  } else {
    auto apply = [&h](const Vec& x, Vec& y) { y.noalias() = h * x; };
    LanczosOptions lopt;
    lopt.n_lowest = k;
    lopt.tol = opt.tol;
    lopt.max_iter = opt.max_iter;
    lopt.seed = opt.seed;
    LanczosResult lr = lanczos_lowest(basis.dim(), apply, lopt);
    res.energies = lr.values;
    res.vectors = lr.vectors;
    res.converged = lr.converged;
  }
  res.residuals.resize(k);
  for (int s = 0; s < k; ++s)
    res.residuals[s] =
        (h * res.vectors.col(s) - res.energies[s] * res.vectors.col(s)).norm();
  return res;
}

// ------------------------------------------------------------- expectations

namespace {

// w = O_i v mapped from `from` into `to` (sectors may differ by the shift)
Vec apply_local_shifted(const SectorBasis& from, const SectorBasis& to,
                        const Vec& v, const LocalOperator& op, int site_index) {
  if (!op.homogeneous)
    throw std::invalid_argument("ed expectation: operator mixes charge shifts");
  if (site_index < 1 || site_index > from.L)
    throw std::invalid_argument("ed expectation: site index out of range");
  if (v.size() != Eigen::Index(from.dim()))
    throw std::invalid_argument("ed expectation: state dimension mismatch");
  const int i = site_index - 1;
  const NzCols nz = nonzero_columns(op.matrix);
  Vec w = Vec::Zero(to.dim());
  for (std::size_t col = 0; col < from.dim(); ++col) {
    if (v[col] == 0.0) continue;
    const std::uint64_t s = from.states[col];
    for (const auto& [r, val] : nz[from.digit(s, i)]) {
      const auto row = to.index_of(from.replace(s, i, r));
      if (row >= 0) w[row] += val * v[col];
    }
  }
  return w;
}

}  // namespace

double ed_expectation_local(const SectorBasis& basis, const Vec& state,
                            const LocalOperator& op, int site_index) {
  if (op.charge_shift != 0)
    throw std::invalid_argument("ed_expectation_local: operator must conserve charge");
  Vec w = apply_local_shifted(basis, basis, state, op, site_index);
  return state.dot(w);
}

double ed_expectation_two_point(const SectorBasis& basis, const Vec& state,
                                const LocalOperator& op_i, int i,
                                const LocalOperator& op_j, int j) {
  if (i == j)
    throw std::invalid_argument("ed_expectation_two_point: sites must differ");
  if (op_i.charge_shift + op_j.charge_shift != 0)
    throw std::invalid_argument(
        "ed_expectation_two_point: charge shifts must sum to zero");
  if (op_j.charge_shift == 0) {
    Vec w = apply_local_shifted(basis, basis, state, op_j, j);
    w = apply_local_shifted(basis, basis, w, op_i, i);
    return state.dot(w);
  }
  const SectorBasis mid =
      enumerate_sector(basis.site, basis.L, basis.n_pol + op_j.charge_shift);
  Vec w = apply_local_shifted(basis, mid, state, op_j, j);
  w = apply_local_shifted(mid, basis, w, op_i, i);
  return state.dot(w);
}

// ------------------------------------------------------------ golden results

std::vector<GoldenRow> read_golden_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_golden_csv: cannot open " + path);
  std::vector<GoldenRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {  // skip the column header
      header = false;
      continue;
    }
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9)
      throw std::runtime_error("read_golden_csv: malformed line: " + line);
    GoldenRow r;
    r.L = std::stoi(cells[0]);
    r.n_pol = std::stoi(cells[1]);
    r.g1 = std::stod(cells[2]);
    r.g2 = std::stod(cells[3]);
    r.t = std::stod(cells[4]);
    r.delta = std::stod(cells[5]);
    r.n_max = std::stoi(cells[6]);
    r.level_index = std::stoi(cells[7]);
    r.energy = std::stod(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

void write_golden_csv(const std::string& path, const std::vector<GoldenRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_golden_csv: cannot open " + path);
  out << "L,n_pol,g1,g2,t,delta,n_max,level_index,energy\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.15g,%.15g,%.15g,%.15g,%d,%d,%.15g\n",
                  r.L, r.n_pol, r.g1, r.g2, r.t, r.delta, r.n_max,
                  r.level_index, r.energy);
    out << buf;
  }
}

}  // namespace ckchain
