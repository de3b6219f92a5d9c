#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>

#include "fpaccel/gmres.hpp"
#include "fpaccel/rng.hpp"
#include "fpaccel/util.hpp"

using namespace fpaccel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

std::vector<std::complex<double>> eigenvalues_of(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  std::vector<std::complex<double>> out(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    out[i] = es.eigenvalues()[i];
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("gmres");

TEST_CASE("linear map with the exact inverse solves in one application") {
  Rng rng(1);
  MatrixXd a = random_matrix(rng, 4, 4) + 4.0 * MatrixXd::Identity(4, 4);
  const VectorXd b = random_matrix(rng, 4, 1);
  const AffineMap q = linear_fixed_point_map(a.inverse(), a, b);
  const VectorXd sol = a.lu().solve(b);
  const VectorXd x0 = random_matrix(rng, 4, 1);
  CHECK((q(x0) - sol).norm() < 1e-10 * sol.norm());
  CHECK(q.jacobian().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity preconditioner with scaled step matches gradient descent") {
  Rng rng(2);
  MatrixXd root = random_matrix(rng, 5, 5);
  const MatrixXd a = root.transpose() * root + MatrixXd::Identity(5, 5);
  const VectorXd b = random_matrix(rng, 5, 1);
  const double alpha = 0.1;
  const AffineMap q =
      linear_fixed_point_map(alpha * MatrixXd::Identity(5, 5), a, b);
  const VectorXd x = random_matrix(rng, 5, 1);
  const VectorXd grad = a * x - b;  // gradient of x'Ax/2 - b'x
  CHECK((q(x) - (x - alpha * grad)).norm() < 1e-12);
}

TEST_CASE("the linearized fixed point is the linear solution") {
  Rng rng(3);
  MatrixXd a = random_matrix(rng, 6, 6) + 5.0 * MatrixXd::Identity(6, 6);
  const MatrixXd p = MatrixXd::Identity(6, 6) * 0.1;
  const VectorXd b = random_matrix(rng, 6, 1);
  const AffineMap q = linear_fixed_point_map(p, a, b);
  const VectorXd sol = a.lu().solve(b);
  CHECK((q(sol) - sol).norm() < 1e-12 * (1.0 + sol.norm()));
}

TEST_CASE("gmres on the identity converges in one iteration") {
  Rng rng(4);
  const VectorXd b = random_matrix(rng, 5, 1);
  const GmresHistory h =
      gmres(MatrixXd::Identity(5, 5), b, VectorXd::Zero(5), 5, 1e-12);
  CHECK(h.converged);
  CHECK(h.residual_norms.size() == 2);
  CHECK(h.residual_norms[1] < 1e-12 * h.residual_norms[0]);
  CHECK((h.solution - b).norm() < 1e-12);
}

TEST_CASE("gmres on diag(1,2) follows the hand-computed residual path") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 2.0;
  VectorXd b(2);
  b << 1.0, 1.0;
  const GmresHistory h = gmres(a, b, VectorXd::Zero(2), 2, 1e-14);
  REQUIRE(h.residual_norms.size() == 3);
  CHECK(h.residual_norms[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(h.residual_norms[1] == doctest::Approx(std::sqrt(5.0) / 5.0).epsilon(1e-12));
  CHECK(h.residual_norms[2] < 1e-13);
  CHECK(h.converged);
}

TEST_CASE("gmres matches a dense least-squares-per-step oracle") {
  Rng rng(5);
  const Eigen::Index n = 50;
  MatrixXd a = random_matrix(rng, n, n) / std::sqrt(static_cast<double>(n)) +
               2.0 * MatrixXd::Identity(n, n);
  const VectorXd b = random_matrix(rng, n, 1);
  const VectorXd x0 = VectorXd::Zero(n);
  const GmresHistory h = gmres(a, b, x0, 10, 1e-14);

  // Oracle: explicit Krylov basis, minimize |b - A K y| directly.
  const VectorXd r0 = b;
  MatrixXd krylov(n, 11);
  krylov.col(0) = r0;
  for (int j = 1; j <= 10; ++j) krylov.col(j) = a * krylov.col(j - 1);
  for (int k = 1; k <= 10; ++k) {
    const MatrixXd ak = a * krylov.leftCols(k);
    const VectorXd y = ak.colPivHouseholderQr().solve(b);
    const double oracle = (b - ak * y).norm();
    CHECK(h.residual_norms[k] == doctest::Approx(oracle).epsilon(1e-8));
  }
}

TEST_CASE("gmres residual norms never increase") {
  Rng rng(6);
  const MatrixXd a =
      random_matrix(rng, 30, 30) / 5.0 + MatrixXd::Identity(30, 30);
  const VectorXd b = random_matrix(rng, 30, 1);
  const GmresHistory h = gmres(a, b, VectorXd::Zero(30), 30, 1e-14);
  for (std::size_t k = 1; k < h.residual_norms.size(); ++k) {
    CHECK(h.residual_norms[k] <= h.residual_norms[k - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("gmres maintains the Arnoldi relation") {
  Rng rng(7);
  const MatrixXd a =
      random_matrix(rng, 20, 20) / 4.0 + 1.5 * MatrixXd::Identity(20, 20);
  const VectorXd b = random_matrix(rng, 20, 1);
  const GmresHistory h = gmres(a, b, VectorXd::Zero(20), 12, 1e-16);
  const int k = static_cast<int>(h.hessenberg.cols());
  REQUIRE(k >= 12);
  const MatrixXd lhs = a * h.basis.leftCols(k);
  const MatrixXd rhs = h.basis * h.hessenberg;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  // Orthonormality of the basis (one reorthogonalization pass).
  const MatrixXd gram = h.basis.transpose() * h.basis;
  CHECK((gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("gmres reaches the exact solution within n steps") {
  Rng rng(8);
  const MatrixXd a = random_matrix(rng, 12, 12) + 3.0 * MatrixXd::Identity(12, 12);
  const VectorXd b = random_matrix(rng, 12, 1);
  const GmresHistory h = gmres(a, b, VectorXd::Zero(12), 12, 1e-12);
  CHECK(h.converged);
  CHECK((a * h.solution - b).norm() < 1e-9 * b.norm());
}

TEST_CASE("projection removes exactly the near-zero eigenvalues") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  const Projection p = project_nonsingular(a, 1);
  REQUIRE(p.b.rows() == 2);
  auto eigs = eigenvalues_of(p.b);
  std::sort(eigs.begin(), eigs.end(),
            [](auto x, auto y) { return x.real() < y.real(); });
  CHECK(eigs[0].real() == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(eigs[1].real() == doctest::Approx(3.0).epsilon(1e-10));
  // Orthonormal columns.
  CHECK((p.q.transpose() * p.q - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("projection of a normal matrix preserves the nonzero spectrum") {
  Rng rng(9);
  // Normal matrix with a known spectrum: Q D Q' with orthogonal Q.
  const Eigen::Index n = 8;
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, n));
  const MatrixXd q = qr.householderQ();
  VectorXd d(n);
  d << 0.0, 0.0, 0.7, 1.1, 1.4, 1.9, 2.3, 3.0;
  const MatrixXd a = q * d.asDiagonal() * q.transpose();
  const Projection p = project_nonsingular(a, 2);
  auto eigs = eigenvalues_of(p.b);
  std::sort(eigs.begin(), eigs.end(),
            [](auto x, auto y) { return x.real() < y.real(); });
  for (int i = 0; i < 6; ++i) {
    CHECK(eigs[i].real() == doctest::Approx(d[i + 2]).epsilon(1e-9));
    CHECK(std::abs(eigs[i].imag()) < 1e-10);
  }
}

TEST_CASE("projection handles complex conjugate pairs") {
  // Block matrix with a rotation block (eigenvalues 1 +- i), a real
  // eigenvalue, and a zero eigenvalue.
  MatrixXd a = MatrixXd::Zero(4, 4);
  a(0, 0) = 1.0;
  a(0, 1) = 1.0;
  a(1, 0) = -1.0;
  a(1, 1) = 1.0;
  a(2, 2) = 2.0;
  const Projection p = project_nonsingular(a, 1);
  REQUIRE(p.b.rows() == 3);
  auto eigs = eigenvalues_of(p.b);
  std::sort(eigs.begin(), eigs.end(),
            [](auto x, auto y) { return x.imag() < y.imag(); });
  CHECK(eigs[0] == std::complex<double>(1.0, -1.0));
  CHECK(std::abs(eigs[1] - std::complex<double>(2.0, 0.0)) < 1e-10);
  CHECK(eigs[2] == std::complex<double>(1.0, 1.0));
}

TEST_CASE("gmres on the projected system beats the singular system floor") {
  Rng rng(10);
  // Singular consistent system: A has a one-dimensional kernel.
  const Eigen::Index n = 10;
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, n));
  const MatrixXd q = qr.householderQ();
  VectorXd d = VectorXd::LinSpaced(n, 0.5, 3.0);
  d[0] = 0.0;
  const MatrixXd a = q * d.asDiagonal() * q.transpose();
  const VectorXd xtrue = random_matrix(rng, n, 1);
  const VectorXd b = a * xtrue;  // consistent by construction
  const VectorXd x0 = VectorXd::Zero(n);

  const GmresHistory direct = gmres(a, b, x0, n, 1e-13);
  const Projection p = project_nonsingular(a, 1);
  const GmresHistory projected =
      gmres(p.b, p.q.transpose() * b, p.q.transpose() * x0, n - 1, 1e-13);
  CHECK(projected.converged);
  CHECK(projected.residual_norms.back() <= direct.residual_norms.back() + 1e-12);
  // The projected solution solves the original consistent system.
  CHECK((a * (p.q * projected.solution) - b).norm() < 1e-8 * b.norm());
}

TEST_CASE("bounding rectangle of a symmetric matrix degenerates to a segment") {
  Rng rng(11);
  MatrixXd root = random_matrix(rng, 5, 5);
  const MatrixXd s = root + root.transpose();
  const Rect r = fov_bounding_rect(s);
  CHECK(r.im_half < 1e-12);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  CHECK(r.re_min == doctest::Approx(es.eigenvalues().minCoeff()));
  CHECK(r.re_max == doctest::Approx(es.eigenvalues().maxCoeff()));
}

TEST_CASE("bounding rectangle of the standard rotation-plus-identity block") {
  MatrixXd b(2, 2);
  b << 1.0, 1.0, -1.0, 1.0;
  const Rect r = fov_bounding_rect(b);
  CHECK(r.re_min == doctest::Approx(1.0));
  CHECK(r.re_max == doctest::Approx(1.0));
  CHECK(r.im_half == doctest::Approx(1.0));
  for (const auto& ev : eigenvalues_of(b)) {
    CHECK(r.contains(ev, 1e-10));
  }
}

TEST_CASE("bounding rectangle contains all eigenvalues of random matrices") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd b = random_matrix(rng, 7, 7);
    const Rect r = fov_bounding_rect(b);
    for (const auto& ev : eigenvalues_of(b)) {
      CHECK(r.contains(ev, 1e-10));
    }
  }
}

TEST_CASE("numeric field of values of a Hermitian matrix is a real segment") {
  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 2.0;
  const auto boundary = fov_numeric(d, 64);
  for (const auto& z : boundary) {
    CHECK(std::abs(z.imag()) < 1e-12);
    CHECK(z.real() >= 1.0 - 1e-10);
    CHECK(z.real() <= 2.0 + 1e-10);
  }
  double lo = 3.0, hi = 0.0;
  for (const auto& z : boundary) {
    lo = std::min(lo, z.real());
    hi = std::max(hi, z.real());
  }
  CHECK(lo == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(hi == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("field of values of a normal matrix is the hull of its spectrum") {
  // Cyclic permutation: normal, spectrum = cube roots of unity, so the
  // field of values is their triangle.
  MatrixXd perm = MatrixXd::Zero(3, 3);
  perm(0, 1) = 1.0;
  perm(1, 2) = 1.0;
  perm(2, 0) = 1.0;
  const auto boundary = fov_numeric(perm, 256);
  // Hull vertices: cube roots of unity.
  const std::complex<double> w1(1.0, 0.0);
  const std::complex<double> w2(-0.5, std::sqrt(3.0) / 2.0);
  const std::complex<double> w3(-0.5, -std::sqrt(3.0) / 2.0);
  auto inside_hull = [&](std::complex<double> z) {
    // Barycentric test with tolerance.
    auto cross = [](std::complex<double> a, std::complex<double> b) {
      return a.real() * b.imag() - a.imag() * b.real();
    };
    const double s1 = cross(w2 - w1, z - w1);
    const double s2 = cross(w3 - w2, z - w2);
    const double s3 = cross(w1 - w3, z - w3);
    const double tol = 1e-6;
    return (s1 >= -tol && s2 >= -tol && s3 >= -tol) ||
           (s1 <= tol && s2 <= tol && s3 <= tol);
  };
  for (const auto& z : boundary) {
    CHECK(inside_hull(z));
  }
  // All three vertices are attained by some support point.
  for (const auto& w : {w1, w2, w3}) {
    double best = 10.0;
    for (const auto& z : boundary) best = std::min(best, std::abs(z - w));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("numeric boundary stays inside the bounding rectangle") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd b = random_matrix(rng, 6, 6);
    const Rect r = fov_bounding_rect(b);
    for (const auto& z : fov_numeric(b, 128)) {
      CHECK(r.contains(z, 1e-8));
    }
    // Eigenvalues lie inside the numeric boundary polygon's hull; check
    // through the report's distance machinery instead of a full hull
    // test:每 eigenvalue must be inside the rectangle as well.
    for (const auto& ev : eigenvalues_of(b)) {
      CHECK(r.contains(ev, 1e-8));
    }
  }
}

TEST_CASE("convergence bound formula at the tabulated angles") {
  SUBCASE("nu equals r: zero angle") {
    const BeckermannBound b = beckermann_factor(2.0, 2.0);
    CHECK(b.rho_beta == doctest::Approx(0.0));
    CHECK(b.c_beta == doctest::Approx(2.0 * (2.0 + 2.0 / std::sqrt(3.0))));
  }
  SUBCASE("cos beta = 1/2") {
    const BeckermannBound b = beckermann_factor(1.0, 2.0);
    // angle pi/3 maps to 2 sin(pi/10)
    CHECK(std::abs(b.rho_beta - 2.0 * std::sin(M_PI / 10.0)) < 1e-15);
    CHECK(std::abs(b.rho_beta - 0.618034) < 1e-6);
    CHECK(std::abs(b.c_beta - 8.25911) < 1e-5);
    CHECK(b.rho_beta < std::sin(b.angle));
    CHECK(b.c_beta < 10.0);
  }
  SUBCASE("origin inside the field of values is rejected") {
    CHECK_THROWS_AS(beckermann_factor(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(beckermann_factor(-0.1, 1.0), std::domain_error);
  }
}

TEST_CASE("gmres residuals obey the field-of-values bound") {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 12;
    const MatrixXd b_mat =
        MatrixXd::Identity(n, n) + 0.45 * random_matrix(rng, n, n) / std::sqrt(12.0);
    const Rect rect = fov_bounding_rect(b_mat);
    if (rect.re_min <= 0.0) continue;  // not certified, skip
    const FovReport fov = fov_report(b_mat, 128);
    REQUIRE(!fov.zero_in_fov);
    const VectorXd rhs = random_matrix(rng, n, 1);
    const GmresHistory h = gmres(b_mat, rhs, VectorXd::Zero(n), n, 1e-15);
    for (std::size_t k = 0; k < h.residual_norms.size(); ++k) {
      const double bound =
          fov.c_beta * std::pow(fov.rho_beta, static_cast<double>(k));
      CHECK(h.residual_norms[k] / h.residual_norms[0] <= bound + 1e-12);
    }
  }
}

TEST_CASE("fov report flags an origin inside the field of values") {
  MatrixXd b(2, 2);
  b << 1.0, 0.0, 0.0, -1.0;  // spectrum straddles the origin
  const FovReport rep = fov_report(b, 64);
  CHECK(rep.zero_in_fov);
  CHECK(rep.nu == 0.0);
  CHECK(!std::isfinite(rep.rho_beta));
  const nlohmann::json j = rep.to_json();
  CHECK(j["rho_beta"].is_null());
  CHECK(j["zero_in_fov"] == true);
}

TEST_CASE("fov report fields are consistent on a shifted random matrix") {
  Rng rng(15);
  const Eigen::Index n = 9;
  const MatrixXd b =
      2.0 * MatrixXd::Identity(n, n) + 0.5 * random_matrix(rng, n, n) / 3.0;
  const FovReport rep = fov_report(b, 256);
  CHECK(!rep.zero_in_fov);
  CHECK(rep.nu > 0.0);
  CHECK(rep.nu <= rep.numerical_radius);
  CHECK(rep.rho_beta < 1.0);
  CHECK(rep.c_beta < 10.0);
  for (const auto& z : rep.boundary) {
    CHECK(rep.rect.contains(z, 1e-8));
  }
}

TEST_SUITE_END();
