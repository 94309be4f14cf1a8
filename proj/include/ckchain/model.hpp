#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

namespace ckchain {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------- parameters

// Couplings of the cavity-array chain, all in units of the internal drive
// strength omega (kept explicit so rescaled runs remain possible).
struct ModelParams {
  double omega = 1.0;   // two-level drive, sets the energy unit
  double g1 = 0.8;      // intracavity atom-photon coupling
  double g2 = 1.35;     // cross-cavity coupling (level 2<->4 with right neighbour)
  double t = 0.25;      // photon hopping amplitude
  double delta = -2.0;  // detuning of level 4
  int n_max = 3;        // photon cutoff per cavity

  void validate() const;
};

// ------------------------------------------------------------------- site basis

// Local basis: four atomic levels tensored with a truncated photon mode.
// Flat index = (level - 1) * (n_max + 1) + n, i.e. atom-major.
struct SiteBasis {
  int n_max = 3;
  int dim = 16;
  std::vector<int> charge;  // polariton charge per flat index

  int index(int level, int n) const;   // level in 1..4, n in 0..n_max
  int level_of(int idx) const { return idx / (n_max + 1) + 1; }
  int photon_of(int idx) const { return idx % (n_max + 1); }
  int max_charge() const { return n_max + 2; }
};

SiteBasis build_site_basis(int n_max);

// Atomic-level weights entering the conserved polariton number:
// N = sum_i (2 s44 + s33 + s22 + a^dag a)_i.
int level_weight(int level);

// ------------------------------------------------------------------ operators

// Dense one-site operator together with its charge shift.  homogeneous is
// false when matrix elements connect charge sectors by differing amounts
// (such operators cannot participate in the conserving machinery).
struct LocalOperator {
  Mat matrix;
  int charge_shift = 0;
  bool homogeneous = true;
  std::string name;
};

// One term of a nearest-neighbour bond: coeff * left_i * right_{i+1}.
struct BondTerm {
  LocalOperator left;
  LocalOperator right;
  double coeff = 0.0;
};

LocalOperator annihilation_op(const SiteBasis& basis);          // a
LocalOperator creation_op(const SiteBasis& basis);              // a^dag
LocalOperator atomic_op(const SiteBasis& basis, int m, int n);  // |m><n| x 1
LocalOperator photon_number_op(const SiteBasis& basis);         // a^dag a
LocalOperator polariton_number_op(const SiteBasis& basis);      // site charge
LocalOperator identity_op(const SiteBasis& basis);

// Derive the charge shift of an arbitrary matrix on the site basis.
LocalOperator make_local_operator(const SiteBasis& basis, const Mat& m,
                                  const std::string& name);

// ---------------------------------------------------------------- Hamiltonian

// On-site part: delta s44 + omega (s23 + s32) + g1 (s13 a^dag + s31 a).
Mat site_hamiltonian(const SiteBasis& basis, const ModelParams& p);

// Bond part as a list of product terms:
//   -t (a_i a^dag_{i+1} + a^dag_i a_{i+1})
//   +g2 (s24_i a^dag_{i+1} + s42_i a_{i+1})
std::vector<BondTerm> bond_terms(const SiteBasis& basis, const ModelParams& p);

// Dense two-site bond matrix (kron of the term factors); mostly for testing.
Mat bond_matrix(const SiteBasis& basis, const ModelParams& p);

// Full-chain assembly on the product basis (site 0 most significant digit).
// Guarded: refuses chains whose product dimension exceeds max_dim.
SpMat assemble_chain(const SiteBasis& basis, const ModelParams& p, int L,
                     std::uint64_t max_dim = 16777216ull);

// Total polariton number as a diagonal on the product basis, same guard.
SpMat assemble_total_charge(const SiteBasis& basis, int L,
                            std::uint64_t max_dim = 16777216ull);

// Charge of a product-basis state (site 0 most significant digit).
int chain_charge(const SiteBasis& basis, int L, std::uint64_t state);

// Small dense helper for tests.
Mat kron_dense(const Mat& a, const Mat& b);

}  // namespace ckchain
