#include "ckchain/linalg.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ckchain {

namespace {

// project x onto the orthogonal complement of the columns of basis (CGS2)
void orthogonalize(const Mat& basis, Eigen::Index ncols, Vec& x) {
  if (ncols == 0) return;
  const auto b = basis.leftCols(ncols);
  x.noalias() -= b * (b.transpose() * x);
  x.noalias() -= b * (b.transpose() * x);
}

Vec random_unit(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = gauss(rng);
  const double n = v.norm();
  if (n == 0.0) throw std::runtime_error("lanczos: degenerate random vector");
  return v / n;
}

struct SingleResult {
  double value = 0.0;
  Vec vector;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// One Lanczos run for the lowest eigenpair of H restricted to the orthogonal
// complement of locked (deflation space).
SingleResult lanczos_single(Eigen::Index dim, const ApplyFn& apply,
                            double tol, int max_iter, std::mt19937_64& rng,
                            const Vec* start, const Mat& locked,
                            Eigen::Index n_locked) {
  const int kmax = int(std::min<Eigen::Index>(max_iter, dim));
  const int chunk = 32;

  Mat v(dim, std::min(kmax, chunk));
  Vec alpha(kmax), beta(kmax);

  if (n_locked >= dim)
    throw std::invalid_argument("lanczos: deflation space exhausts the space");

  Vec q;
  if (start && start->size() == dim && start->norm() > 0.0) q = *start;
  else q = random_unit(dim, rng);
  orthogonalize(locked, n_locked, q);
  double qn = q.norm();
  while (qn < 1e-8) {  // start lay in the locked space; draw afresh
    q = random_unit(dim, rng);
    orthogonalize(locked, n_locked, q);
    qn = q.norm();
  }
  q /= qn;

  v.col(0) = q;
  Vec w(dim);
  int j = 0;
  double theta = 0.0;
  Vec ritz_small;
  bool have_theta = false;

  Eigen::SelfAdjointEigenSolver<Mat> es;
  for (j = 0; j < kmax; ++j) {
    apply(v.col(j), w);
    alpha[j] = v.col(j).dot(w);
    orthogonalize(locked, n_locked, w);
    orthogonalize(v, j + 1, w);
    beta[j] = w.norm();

    // Ritz estimate from the current tridiagonal; the small solve is cheap
    // early on, so check every step first and then stride once j grows.
    const bool last = (j + 1 == kmax) || (beta[j] <= 1e-13);
    if (last || j < 64 || (j % 4) == 0) {
      es.computeFromTridiagonal(alpha.head(j + 1), beta.head(j));
      theta = es.eigenvalues()[0];
      ritz_small = es.eigenvectors().col(0);
      have_theta = true;
      const double est = beta[j] * std::abs(ritz_small[j]);
      if (est <= tol || beta[j] <= 1e-13) {
        ++j;
        break;
      }
    }
    if (j + 1 < kmax) {
      if (v.cols() <= j + 1)
        v.conservativeResize(Eigen::NoChange,
                             std::min(kmax, int(v.cols()) + chunk));
      v.col(j + 1) = w / beta[j];
    }
  }

  SingleResult out;
  out.iterations = j;
  if (!have_theta) throw std::runtime_error("lanczos: empty Krylov space");
  out.value = theta;
  out.vector.noalias() = v.leftCols(j) * ritz_small.head(j);
  out.vector.normalize();
  apply(out.vector, w);
  out.residual = (w - theta * out.vector).norm();
  out.converged = out.residual <= 10.0 * tol;  // explicit check, small slack
  return out;
}

}  // namespace

LanczosResult davidson_lowest(Eigen::Index dim, const ApplyFn& apply,
                              const Vec& diag, const DavidsonOptions& opt,
                              const Mat* starts) {
  if (dim < 1) throw std::invalid_argument("davidson_lowest: empty space");
  if (diag.size() != dim)
    throw std::invalid_argument("davidson_lowest: diagonal size mismatch");
  if (opt.n_lowest < 1)
    throw std::invalid_argument("davidson_lowest: n_lowest must be >= 1");
  if (opt.tol <= 0.0 || opt.max_iter < 1)
    throw std::invalid_argument("davidson_lowest: bad tolerance or budget");

  const int nb = int(std::min<Eigen::Index>(opt.n_lowest, dim));
  const int cap = int(std::min<Eigen::Index>(
      std::max(opt.max_subspace, 2 * nb + 2), dim));
  auto target_tol = [&](int i) {
    return i == 0 || opt.tol_excited <= 0.0 ? opt.tol : opt.tol_excited;
  };

  std::mt19937_64 rng(opt.seed);
  Mat v(dim, cap), w(dim, cap);  // search space and its image under H
  int k = 0;
  int matvecs = 0;
  Vec tmp(dim), img(dim);

  // orthonormalize x against the space and append it with its image
  auto append = [&](Vec x) -> bool {
    if (k >= cap) return false;
    orthogonalize(v, k, x);
    const double n = x.norm();
    if (n < 1e-10) return false;
    v.col(k) = x / n;
    tmp = v.col(k);
    apply(tmp, img);
    w.col(k) = img;
    ++k;
    ++matvecs;
    return true;
  };

  for (int s = 0; s < nb; ++s) {
    bool ok = false;
    if (starts && starts->cols() > s && starts->rows() == dim &&
        starts->col(s).norm() > 0.0)
      ok = append(starts->col(s));
    while (!ok) ok = append(random_unit(dim, rng));
  }

  Eigen::SelfAdjointEigenSolver<Mat> es;
  Mat ritz, hritz;
  Vec theta(nb), rnorm(nb);
  Vec theta_prev = Vec::Constant(nb, std::numeric_limits<double>::infinity());
  int plateau = 0;
  bool conv = false;

  while (true) {
    Mat s = v.leftCols(k).transpose() * w.leftCols(k);
    s = (0.5 * (s + s.transpose())).eval();
    es.compute(s);
    const Mat& y = es.eigenvectors();
    const int nr = std::min(nb, k);
    ritz.noalias() = v.leftCols(k) * y.leftCols(nr);
    hritz.noalias() = w.leftCols(k) * y.leftCols(nr);
    conv = (nr == nb);
    // the plateau measure scales each target like its residual tolerance,
    // so loosely tracked higher states cannot hold the stop hostage
    double dtheta = std::numeric_limits<double>::infinity();
    if (nr == nb) {
      dtheta = 0.0;
      for (int i = 0; i < nr; ++i) {
        const double scale = target_tol(i) / opt.tol;
        dtheta = std::max(
            dtheta, std::abs(es.eigenvalues()[i] - theta_prev[i]) / scale);
      }
    }
    for (int i = 0; i < nr; ++i) {
      theta[i] = es.eigenvalues()[i];
      theta_prev[i] = theta[i];
      rnorm[i] = (hritz.col(i) - theta[i] * ritz.col(i)).norm();
      conv =
          conv && rnorm[i] <= target_tol(i) * std::max(1.0, std::abs(theta[i]));
    }
    if (opt.dtheta_tol > 0.0 && nr == nb) {
      plateau = dtheta <= opt.dtheta_tol ? plateau + 1 : 0;
      if (plateau >= 2) conv = true;
    }
    if (conv || matvecs >= opt.max_iter || k >= int(dim)) break;

    // collapse onto the leading Ritz vectors once the space fills up
    if (k + nb > cap) {
      const int keep = std::min(k, nb + 2);
      const Mat vk = v.leftCols(k) * y.leftCols(keep);
      const Mat wk = w.leftCols(k) * y.leftCols(keep);
      v.leftCols(keep) = vk;
      w.leftCols(keep) = wk;
      k = keep;
    }

    // expand with the preconditioned residuals of unconverged targets
    bool grew = false;
    for (int i = 0; i < nr && matvecs < opt.max_iter; ++i) {
      if (rnorm[i] <= target_tol(i) * std::max(1.0, std::abs(theta[i])))
        continue;
      Vec t = hritz.col(i) - theta[i] * ritz.col(i);
      for (Eigen::Index r = 0; r < dim; ++r) {
        double d = diag[r] - theta[i];
        if (std::abs(d) < 1e-6) d = (d < 0.0 ? -1e-6 : 1e-6);
        t[r] /= d;
      }
      if (append(std::move(t))) grew = true;
    }
    if (!grew && !append(random_unit(dim, rng))) break;
  }

  LanczosResult res;
  const int nr = std::min(nb, k);
  res.values = theta.head(nr);
  res.vectors = ritz.leftCols(nr);
  res.residuals = rnorm.head(nr);
  res.iterations = matvecs;
  res.converged = conv;
  return res;
}

LanczosResult lanczos_lowest(Eigen::Index dim, const ApplyFn& apply,
                             const LanczosOptions& opt, const Mat* starts,
                             const Mat* deflate) {
  if (dim < 1) throw std::invalid_argument("lanczos_lowest: empty space");
  if (opt.n_lowest < 1)
    throw std::invalid_argument("lanczos_lowest: n_lowest must be >= 1");
  const int n_states = int(std::min<Eigen::Index>(opt.n_lowest, dim));

  std::mt19937_64 rng(opt.seed);
  const Eigen::Index n_ext = deflate ? deflate->cols() : 0;
  Mat locked(dim, n_ext + n_states);
  if (n_ext) locked.leftCols(n_ext) = *deflate;

  LanczosResult res;
  res.values.resize(n_states);
  res.vectors.resize(dim, n_states);
  res.residuals.resize(n_states);
  res.converged = true;

  for (int s = 0; s < n_states; ++s) {
    const Vec* start = nullptr;
    Vec start_col;
    if (starts && starts->cols() > s && starts->rows() == dim) {
      start_col = starts->col(s);
      start = &start_col;
    }
    SingleResult one = lanczos_single(dim, apply, opt.tol, opt.max_iter, rng,
                                      start, locked, n_ext + s);
    res.values[s] = one.value;
    res.vectors.col(s) = one.vector;
    res.residuals[s] = one.residual;
    res.iterations += one.iterations;
    res.converged = res.converged && one.converged;
    locked.col(n_ext + s) = one.vector;
  }
  return res;
}

}  // namespace ckchain
