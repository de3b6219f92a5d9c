#include "fpaccel/gmres.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fpaccel/util.hpp"

namespace fpaccel {

AffineMap linear_fixed_point_map(const Eigen::MatrixXd& p,
                                 const Eigen::MatrixXd& a,
                                 const Eigen::VectorXd& b) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || p.rows() != n || p.cols() != n || b.size() != n) {
    throw std::invalid_argument("linear_fixed_point_map: dimension mismatch");
  }
  AffineMap m;
  m.linear = Eigen::MatrixXd::Identity(n, n) - p * a;
  m.offset = p * b;
  return m;
}

void GmresHistory::write_csv(std::ostream& os) const {
  os << "k,rnorm\n";
  for (std::size_t k = 0; k < residual_norms.size(); ++k) {
    os << k << ',' << format_g17(residual_norms[k]) << '\n';
  }
}

GmresHistory gmres(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   const Eigen::VectorXd& x0, int max_iter, double tol) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.size() != n || x0.size() != n) {
    throw std::invalid_argument("gmres: dimension mismatch");
  }
  max_iter = std::min<int>(max_iter, static_cast<int>(n));

  GmresHistory hist;
  const Eigen::VectorXd r0 = b - a * x0;
  const double beta0 = r0.norm();
  hist.residual_norms.push_back(beta0);
  if (beta0 == 0.0) {
    hist.solution = x0;
    hist.converged = true;
    return hist;
  }

  Eigen::MatrixXd v(n, max_iter + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(max_iter + 1, max_iter);
  v.col(0) = r0 / beta0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(max_iter + 1);
  g[0] = beta0;
  std::vector<double> cs(max_iter), sn(max_iter);

  // Raw Arnoldi coefficients kept aside; h is overwritten by rotations.
  Eigen::MatrixXd h_raw = Eigen::MatrixXd::Zero(max_iter + 1, max_iter);

  int used = 0;  // Arnoldi steps completed
  bool breakdown = false;
  const double breakdown_scale = a.cwiseAbs().maxCoeff();
  for (int j = 0; j < max_iter; ++j) {
    Eigen::VectorXd w = a * v.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const double hij = v.col(i).dot(w);
        h(i, j) += hij;
        w -= hij * v.col(i);
      }
    }
    h(j + 1, j) = w.norm();
    h_raw.col(j).head(j + 2) = h.col(j).head(j + 2);
    breakdown = h(j + 1, j) < 1e-14 * breakdown_scale;
    if (!breakdown) v.col(j + 1) = w / h(j + 1, j);

    // Fold in earlier rotations, then zero the new subdiagonal entry.
    for (int i = 0; i < j; ++i) {
      const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
      h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
      h(i, j) = t;
    }
    const double denom = std::hypot(h(j, j), h(j + 1, j));
    cs[j] = denom == 0.0 ? 1.0 : h(j, j) / denom;
    sn[j] = denom == 0.0 ? 0.0 : h(j + 1, j) / denom;
    h(j, j) = denom;
    h(j + 1, j) = 0.0;
    g[j + 1] = -sn[j] * g[j];
    g[j] = cs[j] * g[j];

    hist.residual_norms.push_back(std::abs(g[j + 1]));
    used = j + 1;
    if (hist.residual_norms.back() <= tol * beta0) {
      hist.converged = true;
      break;
    }
    if (breakdown) break;
  }

  Eigen::VectorXd y = h.topLeftCorner(used, used)
                          .triangularView<Eigen::Upper>()
                          .solve(g.head(used));
  hist.solution = x0 + v.leftCols(used) * y;
  hist.basis = v.leftCols(breakdown ? used : used + 1);
  hist.hessenberg = h_raw.topLeftCorner(used + 1, used);

  if (breakdown && !hist.converged) {
    const double true_res = (b - a * hist.solution).norm();
    if (true_res <= std::max(tol, 1e-10) * beta0) {
      hist.converged = true;  // Krylov space contained the solution
    } else {
      throw NumericalError(
          "gmres: Arnoldi breakdown with residual " + format_g17(true_res) +
          " still above tolerance");
    }
  }
  return hist;
}

Projection project_nonsingular(const Eigen::MatrixXd& a, int num_zero) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("project_nonsingular: not square");
  if (num_zero < 0 || num_zero >= n) {
    throw std::invalid_argument("project_nonsingular: bad exclusion count");
  }

  Projection out;
  if (num_zero == 0) {
    out.q = Eigen::MatrixXd::Identity(n, n);
    out.b = a;
    return out;
  }

  // The span of the retained eigenvectors equals the orthogonal
  // complement of the left eigenvectors of the excluded cluster. The
  // cluster basis is small and well separated, which keeps this route
  // usable when the retained eigenvectors themselves are nearly
  // dependent (tightly clustered nonzero eigenvalues).
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.transpose());
  if (es.info() != Eigen::Success) {
    throw NumericalError("project_nonsingular: eigensolver failed");
  }
  const Eigen::VectorXcd eigs = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return std::abs(eigs[i]) < std::abs(eigs[j]);
  });
  std::vector<bool> excluded(n, false);
  for (int i = 0; i < num_zero; ++i) excluded[order[i]] = true;

  // Real basis of the excluded left-eigenvector cluster; conjugate pairs
  // contribute their (renormalized) real and imaginary parts.
  Eigen::MatrixXd cluster(n, num_zero);
  std::vector<bool> done(n, false);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!excluded[i] || done[i]) continue;
    done[i] = true;
    const double im_scale = 1e-12 * (1.0 + std::abs(eigs[i]));
    if (std::abs(eigs[i].imag()) <= im_scale) {
      cluster.col(col++) = vecs.col(i).real().normalized();
      continue;
    }
    Eigen::Index partner = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || done[j] || !excluded[j]) continue;
      if (std::abs(eigs[j] - std::conj(eigs[i])) <= 1e-9 * (1.0 + std::abs(eigs[i]))) {
        partner = j;
        break;
      }
    }
    if (partner < 0) {
      throw NumericalError(
          "project_nonsingular: the exclusion count splits a complex "
          "conjugate pair");
    }
    done[partner] = true;
    cluster.col(col++) = vecs.col(i).real().normalized();
    cluster.col(col++) = vecs.col(i).imag().normalized();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cluster);
  const double smin = svd.singularValues().tail(1)[0];
  const double smax = svd.singularValues()[0];
  if (smin <= 0.0 || smax / smin > 1e12) {
    // The eigensolver can return a nearly dependent basis for a tight
    // cluster. When the excluded eigenvalues are genuinely (near) zero,
    // the cluster's left eigenspace is null(A^T), which the SVD of A
    // delivers stably. Otherwise give up with the diagnostic.
    const double eig_scale = eigs.cwiseAbs().maxCoeff();
    bool all_tiny = true;
    for (int i = 0; i < num_zero; ++i) {
      all_tiny = all_tiny && std::abs(eigs[order[i]]) <= 1e-8 * (1.0 + eig_scale);
    }
    if (!all_tiny) {
      throw NumericalError(
          "project_nonsingular: eigenvector basis condition estimate " +
          format_g17(smin > 0.0 ? smax / smin
                                : std::numeric_limits<double>::infinity()) +
          " is too large to trust the projection");
    }
    Eigen::BDCSVD<Eigen::MatrixXd> asvd(a, Eigen::ComputeFullU);
    cluster = asvd.matrixU().rightCols(num_zero);
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(cluster);
  const Eigen::MatrixXd q_full = qr.householderQ();
  out.q = q_full.rightCols(n - num_zero);
  out.b = out.q.transpose() * a * out.q;

  // The complement must be invariant under the map or the exclusion set
  // was not a clean cluster; surface that instead of returning garbage.
  const double defect = (a * out.q - out.q * out.b).cwiseAbs().maxCoeff();
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  if (defect > 1e-7 * scale) {
    throw NumericalError(
        "project_nonsingular: projected subspace is not invariant "
        "(defect " + format_g17(defect) + "); the excluded eigenvalues are "
        "too ill-conditioned to separate");
  }
  return out;
}

Rect fov_bounding_rect(const Eigen::MatrixXd& b) {
  if (b.rows() != b.cols()) {
    throw std::invalid_argument("fov_bounding_rect: not square");
  }
  const Eigen::MatrixXd bs = 0.5 * (b + b.transpose());
  const Eigen::MatrixXd ba = 0.5 * (b - b.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bs);
  if (es.info() != Eigen::Success) {
    throw NumericalError("fov_bounding_rect: eigensolver failed");
  }
  Rect r;
  r.re_min = es.eigenvalues().minCoeff();
  r.re_max = es.eigenvalues().maxCoeff();
  // Spectral norm of the antisymmetric part = its largest eigenvalue
  // modulus (all purely imaginary).
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ba);
  r.im_half = ba.size() == 1 ? 0.0 : svd.singularValues()[0];
  return r;
}

std::vector<std::complex<double>> fov_numeric(const Eigen::MatrixXd& b,
                                              int n_angles) {
  if (b.rows() != b.cols()) throw std::invalid_argument("fov_numeric: not square");
  if (n_angles < 8) throw std::invalid_argument("fov_numeric: need >= 8 angles");
  const Eigen::Index n = b.rows();
  const Eigen::MatrixXd bs = 0.5 * (b + b.transpose());
  const Eigen::MatrixXd ba = 0.5 * (b - b.transpose());
  const Eigen::MatrixXcd bc = b.cast<std::complex<double>>();

  std::vector<std::complex<double>> boundary(n_angles);
  std::exception_ptr failure;
  parallel_for(static_cast<std::size_t>(n_angles), [&](std::size_t t) {
    try {
      const double theta =
          2.0 * M_PI * static_cast<double>(t) / static_cast<double>(n_angles);
      Eigen::MatrixXcd herm =
          std::cos(theta) * bs.cast<std::complex<double>>() +
          std::complex<double>(0.0, std::sin(theta)) *
              ba.cast<std::complex<double>>();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
      if (es.info() != Eigen::Success) {
        throw NumericalError("fov_numeric: eigensolver failed");
      }
      const Eigen::VectorXcd v = es.eigenvectors().col(n - 1);  // largest
      boundary[t] = (v.adjoint() * bc * v)(0, 0);
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return boundary;
}

double polygon_distance_to_origin(const std::vector<std::complex<double>>& poly) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::complex<double> a = poly[i];
    const std::complex<double> b = poly[(i + 1) % n];
    const std::complex<double> ab = b - a;
    const double len2 = std::norm(ab);
    double t = 0.0;
    if (len2 > 0.0) {
      t = std::clamp(-(a.real() * ab.real() + a.imag() * ab.imag()) / len2, 0.0,
                     1.0);
    }
    best = std::min(best, std::abs(a + t * ab));
  }
  return best;
}

bool polygon_contains_origin(const std::vector<std::complex<double>>& poly) {
  bool inside = false;  // ray casting along the positive real axis
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = poly[i].real(), yi = poly[i].imag();
    const double xj = poly[j].real(), yj = poly[j].imag();
    if ((yi > 0.0) != (yj > 0.0) &&
        0.0 < (xj - xi) * (0.0 - yi) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

BeckermannBound beckermann_factor(double nu, double r) {
  if (!(nu > 0.0)) {
    throw std::domain_error(
        "beckermann_factor: nu <= 0, so 0 belongs to the field of values and "
        "the bound does not apply");
  }
  if (nu > r) throw std::invalid_argument("beckermann_factor: nu exceeds r");
  BeckermannBound b;
  b.angle = std::acos(std::min(1.0, nu / r));
  b.rho_beta = 2.0 * std::sin(b.angle / (4.0 - 2.0 * b.angle / M_PI));
  b.c_beta = (2.0 + 2.0 / std::sqrt(3.0)) * (2.0 + b.rho_beta);
  return b;
}

FovReport fov_report(const Eigen::MatrixXd& b, int n_angles) {
  FovReport rep;
  rep.boundary = fov_numeric(b, n_angles);
  rep.rect = fov_bounding_rect(b);
  rep.numerical_radius = 0.0;
  for (const auto& z : rep.boundary) {
    rep.numerical_radius = std::max(rep.numerical_radius, std::abs(z));
  }
  // A degenerate (segment-like) field of values through the origin has
  // zero winding, so the boundary-distance fallback decides those cases.
  const double dist = polygon_distance_to_origin(rep.boundary);
  rep.zero_in_fov = polygon_contains_origin(rep.boundary) ||
                    dist <= 1e-12 * rep.numerical_radius;
  rep.nu = rep.zero_in_fov ? 0.0 : dist;
  if (!rep.zero_in_fov && rep.nu > 0.0) {
    const BeckermannBound bound = beckermann_factor(rep.nu, rep.numerical_radius);
    rep.rho_beta = bound.rho_beta;
    rep.c_beta = bound.c_beta;
  } else {
    rep.rho_beta = std::numeric_limits<double>::quiet_NaN();
    rep.c_beta = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

nlohmann::json FovReport::to_json() const {
  nlohmann::json j;
  std::vector<double> re(boundary.size()), im(boundary.size());
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    re[i] = boundary[i].real();
    im[i] = boundary[i].imag();
  }
  j["boundary_re"] = re;
  j["boundary_im"] = im;
  j["rect"] = {{"re_min", rect.re_min},
               {"re_max", rect.re_max},
               {"im_half", rect.im_half}};
  j["nu"] = nu;
  j["r"] = numerical_radius;
  j["rho_beta"] = std::isfinite(rho_beta) ? nlohmann::json(rho_beta) : nullptr;
  j["c_beta"] = std::isfinite(c_beta) ? nlohmann::json(c_beta) : nullptr;
  j["zero_in_fov"] = zero_in_fov;
  return j;
}

}  // namespace fpaccel
