#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "fpaccel/tensor.hpp"

namespace fpaccel {

/// Optimization variable of the decomposition: one factor matrix per mode.
/// The canonical flattening concatenates the column-major vectorizations
/// of the factors in mode order; total length rank * sum(dims).
struct FactorPoint {
  std::vector<Eigen::MatrixXd> factors;

  FactorPoint() = default;
  explicit FactorPoint(std::vector<Eigen::MatrixXd> f);

  Eigen::Index rank() const { return factors.empty() ? 0 : factors[0].cols(); }
  Eigen::Index modes() const { return static_cast<Eigen::Index>(factors.size()); }
  Eigen::Index dof() const;

  Eigen::VectorXd flatten() const;
  static FactorPoint unflatten(const Eigen::VectorXd& x,
                               const std::vector<Eigen::Index>& dims,
                               Eigen::Index rank);
};

/// Checkpoint format: `modes N`, `rank r`, `dims n1 ... nN`, then factor
/// values column-major in mode order.
void save_factor_point(std::ostream& os, const FactorPoint& p);
void save_factor_point_file(const std::string& path, const FactorPoint& p);
FactorPoint load_factor_point(std::istream& is);
FactorPoint load_factor_point_file(const std::string& path);

enum class DerivativeMode { Analytic, FiniteDifference };

/// Which fixed-point map to analyze or iterate.
struct FixedPointKind {
  enum class Tag { Sd, Als } tag = Tag::Als;
  double alpha = 0.0;  // SD step length, unused for ALS

  static FixedPointKind sd(double alpha) { return {Tag::Sd, alpha}; }
  static FixedPointKind als() { return {Tag::Als, 0.0}; }
};

/// Raised when fixed-point refinement runs out of its iteration budget.
/// Carries the best iterate reached so far.
class NonConvergenceError : public std::runtime_error {
public:
  NonConvergenceError(std::string msg, FactorPoint best, double gradient_norm)
      : std::runtime_error(std::move(msg)),
        best_point(std::move(best)),
        best_gradient_norm(gradient_norm) {}

  FactorPoint best_point;
  double best_gradient_norm;
};

struct ConditionReport {
  double kappa_bar = 0.0;  // L / ell
  double L = 0.0;          // largest eigenvalue
  double ell = 0.0;        // smallest eigenvalue after exclusion
};

/// L over the smallest eigenvalue that survives excluding the num_zero
/// smallest-magnitude ones. Throws NumericalError when the surviving
/// spectrum contains nonpositive values (message lists them).
ConditionReport modified_condition_number(const Eigen::MatrixXd& hessian,
                                          int num_zero);

/// Least-squares fit of a data tensor by a rank-r tensor,
/// f(x) = 1/2 || Z - [[A1,...,AN]] ||_F^2.
class CpdProblem {
public:
  CpdProblem(DenseTensor data, Eigen::Index rank);

  const DenseTensor& data() const { return data_; }
  Eigen::Index rank() const { return rank_; }
  const std::vector<Eigen::Index>& dims() const { return data_.shape; }
  Eigen::Index dof() const;
  /// Count of structurally degenerate Hessian eigenvalues at a minimizer,
  /// (N-1)*rank, from the per-column scaling indeterminacy.
  int degeneracy_count() const;

  double objective(const FactorPoint& x) const;
  Eigen::VectorXd gradient(const FactorPoint& x) const;
  Eigen::VectorXd gradient_flat(const Eigen::VectorXd& x) const;

  Eigen::MatrixXd hessian(
      const FactorPoint& x,
      DerivativeMode mode = DerivativeMode::FiniteDifference) const;

  FactorPoint q_sd(const FactorPoint& x, double alpha) const;
  /// One full sweep of block least-squares updates in mode order.
  FactorPoint q_als(const FactorPoint& x) const;
  FactorPoint apply(const FixedPointKind& kind, const FactorPoint& x) const;

  /// Jacobian of the chosen map at a fixed point. The analytic ALS form
  /// is I - M^{-1} H with M the lower block triangle (blocks = modes) of
  /// the Hessian; SD is I - alpha H. Requires |grad| <= grad_tol*(1+|x|
  /// scale); throws std::invalid_argument otherwise.
  Eigen::MatrixXd jacobian_fixed_point(
      const FixedPointKind& kind, const FactorPoint& xstar,
      DerivativeMode mode = DerivativeMode::Analytic,
      double grad_tol = 1e-8) const;

  /// Iterates the chosen map until the gradient norm drops below
  /// tol*(1 + initial gradient norm). Throws NonConvergenceError with the
  /// best iterate when max_iter is exhausted.
  FactorPoint refine_fixed_point(const FactorPoint& x0,
                                 const FixedPointKind& kind, int max_iter,
                                 double tol = 1e-13) const;

  void check_shapes(const FactorPoint& x) const;

private:
  DenseTensor data_;
  Eigen::Index rank_;
  std::vector<Eigen::MatrixXd> unfoldings_;  // one per mode

  Eigen::MatrixXd gram_product(const std::vector<Eigen::MatrixXd>& factors,
                               Eigen::Index skip) const;
  Eigen::MatrixXd mttkrp(const std::vector<Eigen::MatrixXd>& factors,
                         Eigen::Index mode) const;
};

/// I - M^{-1} H for a given symmetric block matrix, with M the lower
/// block triangle including the diagonal blocks. Exposed separately so
/// the block Gauss-Seidel identity can be exercised on synthetic input.
Eigen::MatrixXd gauss_seidel_jacobian(const Eigen::MatrixXd& hessian,
                                      const std::vector<Eigen::Index>& block_sizes);

}  // namespace fpaccel
