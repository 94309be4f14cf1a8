#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ckchain/scaling.hpp"

using namespace ckchain;

namespace {

double poly_rss(const PolyFit& fit,
                const std::vector<std::pair<double, double>>& pts) {
  double rss = 0.0;
  for (const auto& [x, y] : pts) {
    double model = 0.0, pw = 1.0;
    for (double c : fit.coef) {
      model += c * pw;
      pw *= x;
    }
    rss += (y - model) * (y - model);
  }
  return rss;
}

}  // namespace

TEST_CASE("linear extrapolation recovers an exact line") {
  std::vector<std::pair<int, double>> gaps;
  for (int L : {20, 40, 60, 80, 100}) gaps.emplace_back(L, 0.10 + 0.7 / L);

  const GapExtrapolation ex = extrapolate_gap(gaps);
  CHECK(std::abs(ex.linear.intercept - 0.10) <= 1e-12);
  CHECK(std::abs(ex.linear.coef[1] - 0.7) <= 1e-10);
  CHECK(ex.linear.rss <= 1e-24);
  // the quadratic fit of the same line agrees and adds nothing
  CHECK(std::abs(ex.quadratic.intercept - 0.10) <= 1e-9);
  CHECK(ex.intercept_difference <= 1e-9);
}

TEST_CASE("quadratic extrapolation recovers curvature") {
  std::vector<std::pair<int, double>> gaps;
  for (int L : {40, 50, 60, 70, 80, 90, 100})
    gaps.emplace_back(L, 0.05 + 0.3 / L + 2.0 / double(L) / L);

  const GapExtrapolation ex = extrapolate_gap(gaps);
  CHECK(std::abs(ex.quadratic.intercept - 0.05) <= 1e-10);
  CHECK(std::abs(ex.quadratic.coef[1] - 0.3) <= 1e-7);
  CHECK(std::abs(ex.quadratic.coef[2] - 2.0) <= 1e-5);
  // dropping the curvature term still lands close, as the reported gap
  CHECK(std::abs(ex.linear.intercept - ex.quadratic.intercept) <= 1e-3);
  CHECK(ex.intercept_difference ==
        doctest::Approx(std::abs(ex.linear.intercept - ex.quadratic.intercept))
            .epsilon(1e-12));
}

TEST_CASE("least squares cannot be improved by nudging coefficients") {
  std::vector<std::pair<double, double>> pts;
  for (int k = 0; k < 9; ++k) {
    const double x = 0.01 + 0.004 * k;
    // deterministic wiggle off any exact polynomial
    pts.emplace_back(x, 0.07 + 1.3 * x + std::sin(400.0 * x) * 1e-3);
  }
  for (int degree : {1, 2}) {
    CAPTURE(degree);
    const PolyFit fit = fit_polynomial(pts, degree);
    CHECK(fit.rss == doctest::Approx(poly_rss(fit, pts)).epsilon(1e-9));
    for (std::size_t c = 0; c < fit.coef.size(); ++c) {
      for (double step : {1e-6, -1e-6}) {
        PolyFit bumped = fit;
        bumped.coef[c] += step;
        CHECK(poly_rss(bumped, pts) >= fit.rss - 1e-15);
      }
    }
    CHECK(fit.intercept_err > 0.0);
  }
}

TEST_CASE("fit input validation") {
  std::vector<std::pair<double, double>> two = {{0.1, 1.0}, {0.2, 2.0}};
  CHECK_THROWS_AS(fit_polynomial(two, 2), std::invalid_argument);
  CHECK_THROWS_AS(fit_polynomial(two, 0), std::invalid_argument);
  std::vector<std::pair<double, double>> flat = {{0.1, 1.0}, {0.1, 2.0},
                                                 {0.1, 3.0}};
  CHECK_THROWS_AS(fit_polynomial(flat, 1), std::invalid_argument);
  CHECK_THROWS_AS(
      extrapolate_gap(std::vector<std::pair<int, double>>{{20, 0.1}, {40, 0.2}}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      extrapolate_gap(
          std::vector<std::pair<int, double>>{{20, 0.1}, {0, 0.2}, {40, 0.3}}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      classify_dw(std::vector<std::pair<int, double>>{{40, 0.1}, {80, 0.05}, {120, 0.02}}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      fit_exponential(std::vector<std::pair<double, double>>{{1, 1}, {2, 2}},
                      false),
      std::invalid_argument);
}

TEST_CASE("exponential decay series classify as vanishing") {
  std::vector<std::pair<int, double>> series;
  for (int L : {40, 80, 120, 160, 200})
    series.emplace_back(L, 0.253 * std::exp(-0.065 * L));

  const DwClassification cls = classify_dw(series);
  CHECK(cls.cls == DwClass::vanishing);
  CHECK(std::abs(cls.rate - 0.065) <= 1e-6);
  CHECK(std::abs(cls.pure.amplitude - 0.253) <= 1e-6);
  CHECK(cls.pure.rss <= 1e-16);
  CHECK(cls.pure.ok);

  // a second decay scale for good measure
  series.clear();
  for (int L : {40, 80, 120, 160, 200})
    series.emplace_back(L, 0.241 * std::exp(-0.032 * L));
  const DwClassification slow = classify_dw(series);
  CHECK(slow.cls == DwClass::vanishing);
  CHECK(std::abs(slow.rate - 0.032) <= 1e-6);
}

TEST_CASE("saturating series classify as finite") {
  std::vector<std::pair<int, double>> series;
  for (int L : {40, 80, 120, 160, 200})
    series.emplace_back(L, 0.2 + 0.1 * std::exp(-0.03 * L));

  const DwClassification cls = classify_dw(series);
  CHECK(cls.cls == DwClass::finite);
  CHECK(std::abs(cls.asymptote - 0.2) <= 1e-6);

  // a constant series is the degenerate saturating case
  std::vector<std::pair<int, double>> flat;
  for (int L : {40, 80, 120, 160}) flat.emplace_back(L, 0.2);
  const DwClassification fc = classify_dw(flat);
  CHECK(fc.cls == DwClass::finite);
  CHECK(std::abs(fc.asymptote - 0.2) <= 1e-6);
}

TEST_CASE("critical coupling from the gap root") {
  // exact synthetic line: gap = 0.5 (1.4 - g2)
  std::vector<std::pair<double, double>> gaps;
  for (double g2 : {1.20, 1.25, 1.30, 1.35})
    gaps.emplace_back(g2, 0.5 * (1.4 - g2));
  const BoundaryPoint bp = locate_critical_g2(0.25, gaps);
  CHECK(bp.found);
  CHECK(bp.method == "charge-gap-root");
  CHECK(std::abs(bp.g2_star - 1.4) <= 1e-12);
  CHECK(bp.uncertainty > 0.0);
  CHECK(bp.t == doctest::Approx(0.25));

  // straight-line extrapolation through two points
  const BoundaryPoint two = locate_critical_g2(
      0.25, std::vector<std::pair<double, double>>{{1.30, 0.02}, {1.35, 0.01}});
  CHECK(two.found);
  CHECK(std::abs(two.g2_star - 1.40) <= 1e-12);
  CHECK(two.uncertainty > 0.0);

  // rescaling every gap by a positive constant moves nothing
  std::vector<std::pair<double, double>> scaled = gaps;
  for (auto& [g2, gap] : scaled) gap *= 3.7;
  CHECK(std::abs(locate_critical_g2(0.25, scaled).g2_star - bp.g2_star) <=
        1e-12);

  // a gap that grows with g2 has no root to report
  std::vector<std::pair<double, double>> rising = {{1.2, 0.01}, {1.3, 0.02},
                                                   {1.4, 0.03}};
  const BoundaryPoint none = locate_critical_g2(0.25, rising);
  CHECK_FALSE(none.found);
  CHECK_FALSE(none.note.empty());

  CHECK_THROWS_AS(locate_critical_g2(
                      0.25, std::vector<std::pair<double, double>>{{1.3, 0.1}}),
                  std::invalid_argument);
}

TEST_CASE("boundary scan returns the first finite grid point") {
  const auto stub = [](double g2) {
    return g2 >= 1.2 - 1e-12 ? DwClass::finite : DwClass::vanishing;
  };

  const BoundaryPoint bp = dw_boundary_scan(0.05, 1.0, 1.5, 0.05, stub);
  CHECK(bp.found);
  CHECK(bp.method == "dw-first-nonzero");
  CHECK(std::abs(bp.g2_star - 1.20) <= 1e-12);
  CHECK(bp.uncertainty == doctest::Approx(0.05));
  // the answer sits on the grid
  const double steps = (bp.g2_star - 1.0) / 0.05;
  CHECK(std::abs(steps - std::round(steps)) <= 1e-9);

  // refining the grid moves the answer by less than the coarse increment
  const BoundaryPoint fine = dw_boundary_scan(0.05, 1.0, 1.5, 0.025, stub);
  CHECK(fine.found);
  CHECK(std::abs(fine.g2_star - bp.g2_star) <= 0.05 + 1e-12);

  // nothing finite in range comes back flagged, not thrown
  const BoundaryPoint open = dw_boundary_scan(
      0.05, 1.0, 1.1, 0.05, [](double) { return DwClass::vanishing; });
  CHECK_FALSE(open.found);
  CHECK_FALSE(open.note.empty());

  CHECK_THROWS_AS(dw_boundary_scan(0.05, 1.0, 1.5, 0.0, stub),
                  std::invalid_argument);
  CHECK_THROWS_AS(dw_boundary_scan(0.05, 1.5, 1.0, 0.05, stub),
                  std::invalid_argument);
  CHECK_THROWS_AS(dw_boundary_scan(0.05, 1.0, 1.5, 0.05, nullptr),
                  std::invalid_argument);
}
