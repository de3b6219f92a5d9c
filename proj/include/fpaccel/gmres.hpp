#pragma once

#include <Eigen/Dense>
#include <complex>
#include <json.hpp>
#include <vector>

namespace fpaccel {

/// Affine iteration x -> Mx + c with its exact Jacobian exposed.
struct AffineMap {
  Eigen::MatrixXd linear;
  Eigen::VectorXd offset;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    return linear * x + offset;
  }
  const Eigen::MatrixXd& jacobian() const { return linear; }
};

/// Preconditioned fixed-point form of a linear system: the returned map
/// evaluates (I - PA)x + Pb, whose fixed point solves PAx = Pb.
AffineMap linear_fixed_point_map(const Eigen::MatrixXd& p,
                                 const Eigen::MatrixXd& a,
                                 const Eigen::VectorXd& b);

struct GmresHistory {
  std::vector<double> residual_norms;  // |r_0|, |r_1|, ...
  Eigen::VectorXd solution;
  bool converged = false;
  Eigen::MatrixXd basis;       // Krylov basis actually built
  Eigen::MatrixXd hessenberg;  // (k+1) x k Arnoldi coefficients

  void write_csv(std::ostream& os) const;  // rows `k,rnorm`
};

/// Full-memory GMRES with modified Gram-Schmidt, one reorthogonalization
/// pass, and Givens-rotation least squares. Stops when the residual drops
/// under tol * |r_0|. A Krylov breakdown with the residual still large
/// raises NumericalError.
GmresHistory gmres(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   const Eigen::VectorXd& x0, int max_iter, double tol);

struct Projection {
  Eigen::MatrixXd b;  // restriction to the nonsingular invariant subspace
  Eigen::MatrixXd q;  // orthonormal basis of that subspace
};

/// Removes the num_zero eigenvalues nearest 0 by restricting to the real
/// invariant subspace of the remaining ones (thin QR of the retained
/// eigenvector basis; conjugate pairs contribute their real and
/// imaginary parts). Throws NumericalError when the eigenvector basis is
/// too ill-conditioned to trust (condition estimate above 1e12).
Projection project_nonsingular(const Eigen::MatrixXd& a, int num_zero);

struct Rect {
  double re_min = 0.0;
  double re_max = 0.0;
  double im_half = 0.0;  // rectangle spans [-im_half, im_half] on the axis

  bool contains(std::complex<double> z, double margin = 0.0) const {
    return z.real() >= re_min - margin && z.real() <= re_max + margin &&
           std::abs(z.imag()) <= im_half + margin;
  }
};

/// [lambda_min(Bs), lambda_max(Bs)] x [-rho(Ba) i, rho(Ba) i] from the
/// symmetric and antisymmetric parts; contains the field of values.
Rect fov_bounding_rect(const Eigen::MatrixXd& b);

/// Boundary support points of the field of values by the rotation
/// method: for each angle, the extreme eigenvector of the Hermitian part
/// of e^{i theta} B yields one boundary point.
std::vector<std::complex<double>> fov_numeric(const Eigen::MatrixXd& b,
                                              int n_angles = 512);

struct BeckermannBound {
  double rho_beta = 0.0;
  double c_beta = 0.0;
  double angle = 0.0;  // beta with cos(beta) = nu / r
};

/// GMRES convergence bound from the field-of-values geometry:
/// rho = 2 sin(beta / (4 - 2 beta/pi)), c = (2 + 2/sqrt(3)) (2 + rho),
/// cos(beta) = nu/r. Requires nu > 0 (origin outside the field of
/// values); throws std::domain_error otherwise.
BeckermannBound beckermann_factor(double nu, double r);

struct FovReport {
  std::vector<std::complex<double>> boundary;
  Rect rect;
  double nu = 0.0;                // distance of the field of values to 0
  double numerical_radius = 0.0;  // max |z| over the field of values
  double rho_beta = 0.0;          // NaN when 0 lies inside
  double c_beta = 0.0;            // NaN when 0 lies inside
  bool zero_in_fov = false;

  nlohmann::json to_json() const;
};

FovReport fov_report(const Eigen::MatrixXd& b, int n_angles = 512);

/// Distance from the origin to a polygon boundary, and membership test.
double polygon_distance_to_origin(const std::vector<std::complex<double>>& poly);
bool polygon_contains_origin(const std::vector<std::complex<double>>& poly);

}  // namespace fpaccel
