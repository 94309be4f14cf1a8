#pragma once

// Observable evaluation on a converged run: a measuring pass walks the chain
// once more, carrying the stored states through fresh left truncations and
// the recorded right-block reductions, and contracts operators site by site.

#include <vector>

#include "ckchain/dmrg.hpp"

namespace ckchain {

struct SiteRequest {
  LocalOperator op;  // charge conserving
  int i = 1;         // 1-based site
};

struct PairRequest {
  LocalOperator op_i;
  int i = 1;
  LocalOperator op_j;  // charge shifts of the two factors must cancel
  int j = 2;           // i < j
};

struct MeasureBatch {
  std::vector<double> site_values;
  std::vector<double> pair_values;
};

// evaluate all requests in one measuring pass
MeasureBatch measure_batch(const MeasurableState& st,
                           const std::vector<SiteRequest>& sites,
                           const std::vector<PairRequest>& pairs,
                           int target = 0);

std::vector<double> measure_sites(const MeasurableState& st,
                                  const std::vector<SiteRequest>& sites,
                                  int target = 0);
std::vector<double> measure_pairs(const MeasurableState& st,
                                  const std::vector<PairRequest>& pairs,
                                  int target = 0);
double measure_local(const MeasurableState& st, const LocalOperator& op, int i,
                     int target = 0);
double measure_two_point(const MeasurableState& st, const LocalOperator& op_i,
                         int i, const LocalOperator& op_j, int j,
                         int target = 0);

}  // namespace ckchain
