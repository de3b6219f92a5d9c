#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpaccel/cpd.hpp"

namespace fpaccel {

enum class StationaryVariant { SAA, SNGMRES, SNGMRESR };

std::string to_string(StationaryVariant v);

/// Block companion matrix of a stationary recurrence around a fixed
/// point: identity blocks on the subdiagonal, the derivative of the
/// update in the first block row. Its (modified) spectral radius is the
/// root-convergence factor of the recurrence.
struct CompanionMatrix {
  Eigen::MatrixXd matrix;
  StationaryVariant variant;
  int m = 0;
  Eigen::VectorXd beta;
  Eigen::Index base_dim = 0;
};

/// First block row per variant, with S = sum(beta):
///   SAA:      [(1+S) J, -beta_1 J, ..., -beta_m J]
///   SNGMRES:  [(1+S) J - beta_0 I, -beta_1 I, ..., -beta_m I]
///   SNGMRESR: [(1+S) J, -beta_1 I, ..., -beta_m I]
CompanionMatrix build_companion(const Eigen::MatrixXd& qprime,
                                StationaryVariant variant,
                                const Eigen::VectorXd& beta);

/// Eigenvalues contributed by one eigenvalue mu of the base Jacobian:
/// the block matrix decouples into one (m+1) x (m+1) problem per mu, so
/// these are the roots of the per-mode characteristic polynomial.
Eigen::VectorXcd companion_scalar_roots(std::complex<double> mu,
                                        StationaryVariant variant,
                                        const Eigen::VectorXd& beta);

/// Spectrum summary with a fixed number of eigenvalues excluded near a
/// target (1 for iteration Jacobians and companion matrices, 0 for
/// Hessians). Eigenvalues are stored sorted by distance to the target,
/// excluded ones first.
struct SpectralReport {
  Eigen::VectorXcd eigenvalues;
  int num_excluded = 0;
  double exclusion_target = 0.0;
  double rho = 0.0;                      // max modulus of the survivors
  std::complex<double> dominant{0, 0};   // survivor attaining rho
  std::optional<ConditionReport> condition;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

SpectralReport modified_spectral_radius(const Eigen::MatrixXd& m,
                                        int num_excluded, double target);
SpectralReport modified_spectral_radius(const Eigen::VectorXcd& eigenvalues,
                                        int num_excluded, double target);

struct OptimalCoefficient {
  double beta = 0.0;
  double rho = 0.0;
};

/// Best single fixed coefficient for a real base eigenvalue mu:
///   SAA, 0<mu<1:      rho = 1 - sqrt(1-mu)
///   SAA, mu<0:        rho = sqrt(1-mu) - 1
///   SAA, mu>=1:       rho = sqrt(mu), beta = -1
///   SNGMRESR, |mu|<1: rho = |mu| / (1 + sqrt(1-mu^2))
///   SNGMRESR, |mu|>=1: rho = 1, beta = -1
/// SAA with mu = 0 is rejected.
OptimalCoefficient optimal_beta_step1_real(double mu, StationaryVariant variant);

enum class SdAcceleration {
  SaaAlphaOneOverL,  // step 1/L
  SaaOptimal,        // step 4/(3L+ell)
  SngmresrOptimal,   // step 2/(L+ell)
};

struct SdParams {
  double alpha = 0.0;
  double beta = 0.0;
  double rho = 0.0;
};

/// Closed-form optimal (step, coefficient, factor) for one-step
/// acceleration of gradient descent on a spectrum [ell, L].
SdParams optimal_sd_params(double L, double ell, SdAcceleration variant);

/// Plain gradient descent factor (kappa-1)/(kappa+1) at step 2/(L+ell).
double sd_convergence_factor(double kappa_bar);

/// Lower bound on the optimal factor when the base Jacobian has complex
/// spectrum with spectral radius rho_qprime attained at a real
/// eigenvalue. For the weaker variant that only assumes a largest
/// nonnegative real eigenvalue, pass that eigenvalue instead.
OptimalCoefficient complex_lower_bound(double rho_qprime,
                                       StationaryVariant variant);

/// Bounds on the optimal one-step reduced-NGMRES factor when the base
/// spectrum fits in [-r1,r1] x [-i r2, i r2]. delta2 is minimized over a
/// log-spaced grid of the free parameter a in (max(r1,r2), 1); it is
/// absent when r1 == r2 or the admissible range is empty.
struct RectBounds {
  double delta1 = 0.0;
  std::optional<double> delta2;
  std::optional<double> a_star;
};

RectBounds rect_bounds_sngmres_r1(double r1, double r2, int a_grid = 400);

struct GridSpec {
  double start = -1.0;
  double stop = 1.0;
  double step = 0.05;

  std::vector<double> values() const;
};

struct BruteForceResult {
  Eigen::VectorXd beta;
  double rho = 0.0;
};

/// Exhaustive search of the stationary coefficients over a product grid
/// (one or two coefficients, so SAA/SNGMRESR with m in {1,2} or SNGMRES
/// with m in {0,1}), minimizing the modified spectral radius of the
/// companion matrix. Ties break toward the lexicographically smallest
/// coefficient vector. The spectrum overload uses the per-eigenvalue
/// factorization of the companion matrix; the matrix overload
/// eigendecomposes once and delegates.
BruteForceResult brute_force_beta(const Eigen::MatrixXd& qprime,
                                  StationaryVariant variant, int m,
                                  const GridSpec& grid, int num_excluded);
BruteForceResult brute_force_beta_spectrum(const Eigen::VectorXcd& spectrum,
                                           StationaryVariant variant, int m,
                                           const GridSpec& grid,
                                           int num_excluded);

}  // namespace fpaccel
