#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckchain/linalg.hpp"
#include "ckchain/model.hpp"

namespace ckchain {

// ------------------------------------------------------------ sector basis

// All product states of fixed total polariton number, packed 6 bits per site
// (site 0 in the highest bits, so packed order equals lexicographic order).
struct SectorBasis {
  int L = 0;
  int n_pol = 0;
  SiteBasis site;
  std::vector<std::uint64_t> states;  // ascending

  std::size_t dim() const { return states.size(); }
  int digit(std::uint64_t state, int i) const {  // i in 0..L-1
    return int((state >> (6 * (L - 1 - i))) & 0x3f);
  }
  std::uint64_t replace(std::uint64_t state, int i, int d) const {
    const int sh = 6 * (L - 1 - i);
    return (state & ~(std::uint64_t(0x3f) << sh)) | (std::uint64_t(d) << sh);
  }
  std::ptrdiff_t index_of(std::uint64_t state) const;  // -1 if absent
};

SectorBasis enumerate_sector(const SiteBasis& site, int L, int n_pol);

// Hamiltonian restricted to the sector, built column by column.
SpMat sector_hamiltonian(const SectorBasis& basis, const ModelParams& p);

// ------------------------------------------------------------------ solver

struct EdOptions {
  int n_states = 1;
  double tol = 1e-10;                  // residual tolerance (iterative path)
  int max_iter = 2000;
  std::uint64_t seed = 77;
  std::size_t dense_threshold = 4096;  // full diagonalization below this
};

struct EdResult {
  Vec energies;    // ascending
  Mat vectors;     // sector coordinates, one column per state
  Vec residuals;   // explicit |H v - E v|
  bool converged = false;
  bool dense = false;  // which path produced the result
};

EdResult ed_lowest_states(const SectorBasis& basis, const ModelParams& p,
                          const EdOptions& opt = {});

// ------------------------------------------------------------- expectations

// <state| O_i |state> for a charge-conserving local operator (1-based site).
double ed_expectation_local(const SectorBasis& basis, const Vec& state,
                            const LocalOperator& op, int site_index);

// <state| O_i P_j |state> for i != j with charge shifts summing to zero;
// the intermediate vector lives in the shifted sector.
double ed_expectation_two_point(const SectorBasis& basis, const Vec& state,
                                const LocalOperator& op_i, int i,
                                const LocalOperator& op_j, int j);

// ------------------------------------------------------------ golden results

struct GoldenRow {
  int L = 0, n_pol = 0;
  double g1 = 0, g2 = 0, t = 0, delta = 0;
  int n_max = 3, level_index = 0;
  double energy = 0;
};

std::vector<GoldenRow> read_golden_csv(const std::string& path);
void write_golden_csv(const std::string& path, const std::vector<GoldenRow>& rows);

}  // namespace ckchain
