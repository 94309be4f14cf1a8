#include "ckchain/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ckchain {

// ---------------------------------------------------------------- parameters

void ModelParams::validate() const {
  if (n_max < 1) throw std::invalid_argument("ModelParams: n_max must be >= 1");
  if (omega <= 0.0) throw std::invalid_argument("ModelParams: omega must be > 0");
  if (!(std::isfinite(g1) && std::isfinite(g2) && std::isfinite(t) &&
        std::isfinite(delta)))
    throw std::invalid_argument("ModelParams: couplings must be finite");
}

// ------------------------------------------------------------------- site basis

int level_weight(int level) {
  switch (level) {
    case 1: return 0;
    case 2: return 1;
    case 3: return 1;
    case 4: return 2;
  }
  throw std::invalid_argument("level_weight: level must be in 1..4");
}

int SiteBasis::index(int level, int n) const {
  if (level < 1 || level > 4)
    throw std::invalid_argument("SiteBasis::index: level must be in 1..4");
  if (n < 0 || n > n_max)
    throw std::invalid_argument("SiteBasis::index: photon number out of range");
  return (level - 1) * (n_max + 1) + n;
}

SiteBasis build_site_basis(int n_max) {
  if (n_max < 1) throw std::invalid_argument("build_site_basis: n_max must be >= 1");
  SiteBasis b;
  b.n_max = n_max;
  b.dim = 4 * (n_max + 1);
  b.charge.resize(b.dim);
  for (int level = 1; level <= 4; ++level)
    for (int n = 0; n <= n_max; ++n)
      b.charge[b.index(level, n)] = n + level_weight(level);
  return b;
}

// ------------------------------------------------------------------ operators

LocalOperator make_local_operator(const SiteBasis& basis, const Mat& m,
                                  const std::string& name) {
  if (m.rows() != basis.dim || m.cols() != basis.dim)
    throw std::invalid_argument("make_local_operator: matrix dimension mismatch");
  LocalOperator op;
  op.matrix = m;
  op.name = name;
  bool seen = false;
  for (int c = 0; c < basis.dim; ++c)
    for (int r = 0; r < basis.dim; ++r) {
      if (m(r, c) == 0.0) continue;
      const int shift = basis.charge[r] - basis.charge[c];
      if (!seen) {
        op.charge_shift = shift;
        seen = true;
      } else if (shift != op.charge_shift) {
        op.homogeneous = false;
      }
    }
  if (!seen) op.charge_shift = 0;  // zero operator
  if (!op.homogeneous) op.charge_shift = 0;
  return op;
}

LocalOperator annihilation_op(const SiteBasis& basis) {
  Mat m = Mat::Zero(basis.dim, basis.dim);
  for (int level = 1; level <= 4; ++level)
    for (int n = 1; n <= basis.n_max; ++n)
      m(basis.index(level, n - 1), basis.index(level, n)) = std::sqrt(double(n));
  return make_local_operator(basis, m, "a");
}

LocalOperator creation_op(const SiteBasis& basis) {
  LocalOperator a = annihilation_op(basis);
  return make_local_operator(basis, a.matrix.transpose(), "adag");
}

LocalOperator atomic_op(const SiteBasis& basis, int m, int n) {
  if (m < 1 || m > 4 || n < 1 || n > 4)
    throw std::invalid_argument("atomic_op: levels must be in 1..4");
  Mat mat = Mat::Zero(basis.dim, basis.dim);
  for (int p = 0; p <= basis.n_max; ++p)
    mat(basis.index(m, p), basis.index(n, p)) = 1.0;
  return make_local_operator(basis, mat,
                             "s" + std::to_string(m) + std::to_string(n));
}

LocalOperator photon_number_op(const SiteBasis& basis) {
  Mat m = Mat::Zero(basis.dim, basis.dim);
  for (int i = 0; i < basis.dim; ++i) m(i, i) = basis.photon_of(i);
  return make_local_operator(basis, m, "nphot");
}

LocalOperator polariton_number_op(const SiteBasis& basis) {
  Mat m = Mat::Zero(basis.dim, basis.dim);
  for (int i = 0; i < basis.dim; ++i) m(i, i) = basis.charge[i];
  return make_local_operator(basis, m, "npol");
}

LocalOperator identity_op(const SiteBasis& basis) {
  return make_local_operator(basis, Mat::Identity(basis.dim, basis.dim), "id");
}

// ---------------------------------------------------------------- Hamiltonian

Mat site_hamiltonian(const SiteBasis& basis, const ModelParams& p) {
  p.validate();
  const Mat a = annihilation_op(basis).matrix;
  const Mat ad = creation_op(basis).matrix;
  const Mat s44 = atomic_op(basis, 4, 4).matrix;
  const Mat s23 = atomic_op(basis, 2, 3).matrix;
  const Mat s32 = atomic_op(basis, 3, 2).matrix;
  const Mat s13 = atomic_op(basis, 1, 3).matrix;
  const Mat s31 = atomic_op(basis, 3, 1).matrix;
  return p.delta * s44 + p.omega * (s23 + s32) +
         p.g1 * (s13 * ad + s31 * a);
}

std::vector<BondTerm> bond_terms(const SiteBasis& basis, const ModelParams& p) {
  p.validate();
  std::vector<BondTerm> terms;
  terms.push_back({annihilation_op(basis), creation_op(basis), -p.t});
  terms.push_back({creation_op(basis), annihilation_op(basis), -p.t});
  terms.push_back({atomic_op(basis, 2, 4), creation_op(basis), p.g2});
  terms.push_back({atomic_op(basis, 4, 2), annihilation_op(basis), p.g2});
  return terms;
}

Mat kron_dense(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Mat bond_matrix(const SiteBasis& basis, const ModelParams& p) {
  Mat out = Mat::Zero(basis.dim * basis.dim, basis.dim * basis.dim);
  for (const auto& term : bond_terms(basis, p))
    out += term.coeff * kron_dense(term.left.matrix, term.right.matrix);
  return out;
}

// ------------------------------------------------------------- chain assembly

namespace {

std::uint64_t chain_dim_guarded(const SiteBasis& basis, int L,
                                std::uint64_t max_dim) {
  if (L < 1) throw std::invalid_argument("assemble_chain: L must be >= 1");
  std::uint64_t dim = 1;
  for (int i = 0; i < L; ++i) {
    dim *= std::uint64_t(basis.dim);
    if (dim > max_dim)
      throw std::runtime_error("assemble_chain: product dimension exceeds guard");
  }
  return dim;
}

// digits of a product state, site 0 most significant
void decode(const SiteBasis& basis, int L, std::uint64_t state, int* digits) {
  for (int i = L - 1; i >= 0; --i) {
    digits[i] = int(state % std::uint64_t(basis.dim));
    state /= std::uint64_t(basis.dim);
  }
}

std::uint64_t encode(const SiteBasis& basis, int L, const int* digits) {
  std::uint64_t s = 0;
  for (int i = 0; i < L; ++i) s = s * std::uint64_t(basis.dim) + digits[i];
  return s;
}

using NzCols = std::vector<std::vector<std::pair<int, double>>>;

NzCols nonzero_columns(const Mat& m) {
  NzCols out(m.cols());
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0) out[c].push_back({r, m(r, c)});
  return out;
}

}  // namespace

int chain_charge(const SiteBasis& basis, int L, std::uint64_t state) {
  int total = 0;
  for (int i = 0; i < L; ++i) {
    total += basis.charge[int(state % std::uint64_t(basis.dim))];
    state /= std::uint64_t(basis.dim);
  }
  return total;
}

SpMat assemble_chain(const SiteBasis& basis, const ModelParams& p, int L,
                     std::uint64_t max_dim) {
  const std::uint64_t dim = chain_dim_guarded(basis, L, max_dim);
  const Mat h1 = site_hamiltonian(basis, p);
  const NzCols h1nz = nonzero_columns(h1);
  std::vector<std::pair<NzCols, NzCols>> bondnz;
  std::vector<double> bondcoeff;
  for (const auto& term : bond_terms(basis, p)) {
    bondnz.push_back({nonzero_columns(term.left.matrix),
                      nonzero_columns(term.right.matrix)});
    bondcoeff.push_back(term.coeff);
  }

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> digits(L), nd(L);
  for (std::uint64_t col = 0; col < dim; ++col) {
    decode(basis, L, col, digits.data());
    for (int i = 0; i < L; ++i) {
      for (const auto& [r, v] : h1nz[digits[i]]) {
        nd = digits;
        nd[i] = r;
        trip.emplace_back(encode(basis, L, nd.data()), col, v);
      }
    }
    for (int i = 0; i + 1 < L; ++i) {
      for (std::size_t k = 0; k < bondnz.size(); ++k) {
        for (const auto& [rl, vl] : bondnz[k].first[digits[i]]) {
          for (const auto& [rr, vr] : bondnz[k].second[digits[i + 1]]) {
            nd = digits;
            nd[i] = rl;
            nd[i + 1] = rr;
            trip.emplace_back(encode(basis, L, nd.data()), col,
                              bondcoeff[k] * vl * vr);
          }
        }
      }
    }
  }
  SpMat h(dim, dim);
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

SpMat assemble_total_charge(const SiteBasis& basis, int L,
                            std::uint64_t max_dim) {
  const std::uint64_t dim = chain_dim_guarded(basis, L, max_dim);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(dim);
  for (std::uint64_t s = 0; s < dim; ++s)
    trip.emplace_back(s, s, double(chain_charge(basis, L, s)));
  SpMat n(dim, dim);
  n.setFromTriplets(trip.begin(), trip.end());
  return n;
}

}  // namespace ckchain
