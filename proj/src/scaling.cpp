#include "ckchain/scaling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ckchain {

namespace {

Eigen::MatrixXd design_matrix(const std::vector<std::pair<double, double>>& pts,
                              int degree) {
  Eigen::MatrixXd X(pts.size(), degree + 1);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    double pw = 1.0;
    for (int c = 0; c <= degree; ++c) {
      X(r, c) = pw;
      pw *= pts[std::size_t(r)].first;
    }
  }
  return X;
}

// the linear subproblem of the exponential fit at a fixed rate
struct LinSub {
  double offset = 0.0;
  double amplitude = 0.0;
  double rss = std::numeric_limits<double>::infinity();
  bool ok = false;
};

LinSub exp_linear_part(const std::vector<std::pair<double, double>>& pts,
                       double rate, bool with_offset) {
  const Eigen::Index n = Eigen::Index(pts.size());
  Eigen::VectorXd e(n), y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    e[k] = std::exp(-rate * pts[std::size_t(k)].first);
    y[k] = pts[std::size_t(k)].second;
  }

  LinSub out;
  if (with_offset) {
    Eigen::MatrixXd X(n, 2);
    X.col(0).setOnes();
    X.col(1) = e;
    const Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
    if (!c.allFinite()) return out;
    out.offset = c[0];
    out.amplitude = c[1];
    out.rss = (y - X * c).squaredNorm();
  } else {
    const double denom = e.squaredNorm();
    if (denom < 1e-300) {
      out.amplitude = 0.0;
      out.rss = y.squaredNorm();
    } else {
      out.amplitude = e.dot(y) / denom;
      out.rss = (y - out.amplitude * e).squaredNorm();
    }
  }
  out.ok = std::isfinite(out.rss);
  return out;
}

}  // namespace

PolyFit fit_polynomial(const std::vector<std::pair<double, double>>& pts,
                       int degree) {
  if (degree < 1) throw std::invalid_argument("fit_polynomial: degree < 1");
  const int p = degree + 1;
  if (int(pts.size()) < p)
    throw std::invalid_argument("fit_polynomial: too few points");

  const Eigen::MatrixXd X = design_matrix(pts, degree);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) y[r] = pts[std::size_t(r)].second;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p)
    throw std::invalid_argument("fit_polynomial: degenerate design matrix");
  const Eigen::VectorXd c = qr.solve(y);

  PolyFit fit;
  fit.coef.assign(c.data(), c.data() + p);
  fit.intercept = c[0];
  fit.rss = (y - X * c).squaredNorm();
  const Eigen::Index n = X.rows();
  if (n > p) {
    const double sigma2 = fit.rss / double(n - p);
    const Eigen::MatrixXd xtx = X.transpose() * X;
    const Eigen::MatrixXd cov = sigma2 * xtx.fullPivLu().inverse();
    fit.intercept_err = std::sqrt(std::max(0.0, cov(0, 0)));
  }
  return fit;
}

GapExtrapolation extrapolate_gap(
    const std::vector<std::pair<int, double>>& gap_vs_L) {
  if (gap_vs_L.size() < 3)
    throw std::invalid_argument("extrapolate_gap: need at least three sizes");

  std::vector<std::pair<double, double>> pts;
  pts.reserve(gap_vs_L.size());
  for (const auto& [L, gap] : gap_vs_L) {
    if (L <= 0) throw std::invalid_argument("extrapolate_gap: L must be > 0");
    pts.emplace_back(1.0 / L, gap);
  }

  GapExtrapolation out;
  out.linear = fit_polynomial(pts, 1);
  out.quadratic = fit_polynomial(pts, 2);
  out.intercept_difference =
      std::abs(out.linear.intercept - out.quadratic.intercept);
  return out;
}

ExpFit fit_exponential(const std::vector<std::pair<double, double>>& pts,
                       bool with_offset) {
  if (pts.size() < (with_offset ? 4u : 3u))
    throw std::invalid_argument("fit_exponential: too few points");

  // the rate is the only nonlinear parameter: scan it on a fixed grid, then
  // tighten the best bracket by golden sections
  const double b_lo = with_offset ? 1e-4 : 0.0;  // offset form degenerates at 0
  const double b_hi = 2.0;
  const int n_scan = 400;
  double best_b = b_lo, best_rss = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n_scan; ++k) {
    const double b = b_lo + (b_hi - b_lo) * k / n_scan;
    const LinSub s = exp_linear_part(pts, b, with_offset);
    if (s.ok && s.rss < best_rss) {
      best_rss = s.rss;
      best_b = b;
    }
  }

  double lo = std::max(b_lo, best_b - (b_hi - b_lo) / n_scan);
  double hi = std::min(b_hi, best_b + (b_hi - b_lo) / n_scan);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = exp_linear_part(pts, x1, with_offset).rss;
  double f2 = exp_linear_part(pts, x2, with_offset).rss;
  for (int it = 0; it < 120; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = exp_linear_part(pts, x1, with_offset).rss;
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = exp_linear_part(pts, x2, with_offset).rss;
    }
  }
  const double b = 0.5 * (lo + hi);
  const LinSub s = exp_linear_part(pts, b, with_offset);

  ExpFit fit;
  fit.rate = b;
  fit.offset = s.offset;
  fit.amplitude = s.amplitude;
  fit.rss = s.rss;
  fit.ok = s.ok;
  return fit;
}

DwClassification classify_dw(
    const std::vector<std::pair<int, double>>& mid_vs_L) {
  if (mid_vs_L.size() < 4)
    throw std::invalid_argument("classify_dw: need at least four sizes");

  std::vector<std::pair<double, double>> pts;
  pts.reserve(mid_vs_L.size());
  for (const auto& [L, c] : mid_vs_L) pts.emplace_back(double(L), c);

  DwClassification out;
  out.pure = fit_exponential(pts, false);
  out.offset = fit_exponential(pts, true);
  out.rate = out.pure.rate;
  out.asymptote = out.offset.offset;

  // the offset model contains the pure one, so residuals alone always favor
  // it; a series is only called finite when the fitted asymptote clears the
  // absolute floor
  const bool finite = out.offset.ok && out.offset.offset > 1e-3;
  out.cls = finite ? DwClass::finite : DwClass::vanishing;
  return out;
}

BoundaryPoint locate_critical_g2(
    double t, const std::vector<std::pair<double, double>>& gap_vs_g2) {
  if (gap_vs_g2.size() < 2)
    throw std::invalid_argument("locate_critical_g2: need at least two points");

  BoundaryPoint bp;
  bp.t = t;
  bp.method = "charge-gap-root";

  const PolyFit line = fit_polynomial(gap_vs_g2, 1);
  const double a = line.coef[0], b = line.coef[1];
  if (!(b < 0.0)) {
    bp.note = "gap does not decrease with g2; no root reported";
    return bp;
  }

  bp.g2_star = -a / b;
  bp.found = true;

  // covariance of (a, b) pushed through the root -a/b
  const Eigen::MatrixXd X = design_matrix(gap_vs_g2, 1);
  const Eigen::Index n = X.rows();
  double sigma_root = 0.0;
  if (n > 2) {
    const double sigma2 = line.rss / double(n - 2);
    const Eigen::Matrix2d cov =
        sigma2 * (X.transpose() * X).fullPivLu().inverse().topLeftCorner(2, 2);
    const double da = -1.0 / b;          // d(root)/da
    const double db = a / (b * b);       // d(root)/db
    const double var = da * da * cov(0, 0) + 2.0 * da * db * cov(0, 1) +
                       db * db * cov(1, 1);
    sigma_root = std::sqrt(std::max(0.0, var));
  }
  if (sigma_root > 1e-14) {
    bp.uncertainty = sigma_root;
  } else {
    // an exactly interpolating line reports the grid discretization instead
    double span = 0.0;
    for (std::size_t k = 1; k < gap_vs_g2.size(); ++k)
      span += std::abs(gap_vs_g2[k].first - gap_vs_g2[k - 1].first);
    bp.uncertainty = 0.5 * span / double(gap_vs_g2.size() - 1);
  }
  return bp;
}

BoundaryPoint dw_boundary_scan(
    double t, double g2_start, double g2_stop, double dg2,
    const std::function<DwClass(double)>& classify) {
  if (!(dg2 > 0.0))
    throw std::invalid_argument("dw_boundary_scan: increment must be > 0");
  if (g2_stop < g2_start)
    throw std::invalid_argument("dw_boundary_scan: empty scan range");
  if (!classify)
    throw std::invalid_argument("dw_boundary_scan: missing classifier");

  BoundaryPoint bp;
  bp.t = t;
  bp.method = "dw-first-nonzero";
  bp.uncertainty = dg2;

  const int n_steps = int(std::floor((g2_stop - g2_start) / dg2 + 1e-9));
  for (int k = 0; k <= n_steps; ++k) {
    const double g2 = g2_start + k * dg2;
    if (classify(g2) == DwClass::finite) {
      bp.g2_star = g2;
      bp.found = true;
      return bp;
    }
  }
  bp.note = "no finite order parameter on the scanned grid";
  return bp;
}

}  // namespace ckchain
