#pragma once

// Finite-size analysis: gap extrapolation in 1/L, location of the
// insulator-superfluid point from the extrapolated charge gap, and the
// exponential-versus-saturation classification of the density-wave order
// parameter together with its grid-scan boundary protocol.

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ckchain {

// ordinary least-squares polynomial y = c0 + c1 x (+ c2 x^2)
struct PolyFit {
  std::vector<double> coef;    // ascending powers
  double intercept = 0.0;      // coef[0], the x -> 0 limit
  double intercept_err = 0.0;  // one-sigma from the fit covariance
  double rss = 0.0;            // residual sum of squares
};

PolyFit fit_polynomial(const std::vector<std::pair<double, double>>& pts,
                       int degree);

// both extrapolations of a gap series against 1/L, plus how far apart the
// two intercepts land
struct GapExtrapolation {
  PolyFit linear;
  PolyFit quadratic;
  double intercept_difference = 0.0;
};

GapExtrapolation extrapolate_gap(
    const std::vector<std::pair<int, double>>& gap_vs_L);

// y = offset + amplitude * exp(-rate * x); pure form keeps offset at zero
struct ExpFit {
  double offset = 0.0;
  double amplitude = 0.0;
  double rate = 0.0;
  double rss = 0.0;
  bool ok = false;
};

ExpFit fit_exponential(const std::vector<std::pair<double, double>>& pts,
                       bool with_offset);

enum class DwClass { vanishing, finite };

struct DwClassification {
  DwClass cls = DwClass::vanishing;
  double rate = 0.0;       // decay rate of the pure fit (vanishing case)
  double asymptote = 0.0;  // fitted offset = order parameter (finite case)
  ExpFit pure;
  ExpFit offset;
};

// The offset model nests the pure one, so it never loses on residuals alone;
// the series counts as finite when the fitted offset clears an absolute
// floor of 1e-3.
DwClassification classify_dw(
    const std::vector<std::pair<int, double>>& mid_vs_L);

struct BoundaryPoint {
  double t = 0.0;
  double g2_star = 0.0;
  std::string method;         // "charge-gap-root" or "dw-first-nonzero"
  double uncertainty = 0.0;
  bool found = false;
  std::string note;           // why no point was reported, when found is false
};

// Root of a straight line through (g2, extrapolated gap) points on the
// gapped side.  The gap must decrease with g2; otherwise the point comes
// back flagged.  Uncertainty propagates the fit covariance through the
// root, with half the mean grid spacing as a floor when the line is exact.
BoundaryPoint locate_critical_g2(
    double t, const std::vector<std::pair<double, double>>& gap_vs_g2);

// Walk g2 upward in steps of dg2; the first grid value the classifier calls
// finite is the boundary, with the grid increment as its uncertainty.
BoundaryPoint dw_boundary_scan(double t, double g2_start, double g2_stop,
                               double dg2,
                               const std::function<DwClass(double)>& classify);

}  // namespace ckchain
