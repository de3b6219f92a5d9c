#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace fpaccel {

enum class MethodKind {
  FixedPoint,
  AA,
  NGMRES,
  NesterovRestart,
  SAA,
  SNGMRES,
  SNGMRESR,
};

struct LineSearchParams {
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_steps = 20;
  double initial_step = 1.0;
};

/// Method selector for the run drivers. Window m applies to AA/NGMRES and
/// the stationary kinds; kUnboundedWindow keeps the whole history.
/// Stationary kinds carry fixed coefficients: m for SAA and SNGMRESR,
/// m+1 for SNGMRES (the extra leading one multiplies q(x_k) - x_k).
struct MethodSpec {
  MethodKind kind = MethodKind::FixedPoint;
  int window = 0;
  std::vector<double> beta;
  bool globalize = false;
  LineSearchParams line_search{};

  static constexpr int kUnboundedWindow = -1;

  void validate() const;  // throws std::invalid_argument

  static MethodSpec fixed_point();
  static MethodSpec aa(int m, bool globalize = false);
  static MethodSpec ngmres(int m, bool globalize = false);
  static MethodSpec nesterov();
  static MethodSpec saa(std::vector<double> beta);
  static MethodSpec sngmres(std::vector<double> beta);
  static MethodSpec sngmresr(std::vector<double> beta);
};

enum class RunStatus { Converged, MaxIter, Diverged };

struct TraceRecord {
  int k = 0;
  double f = 0.0;      // objective, or 1/2|r|^2 when no objective is given
  double gnorm = 0.0;  // NaN when no gradient map is given
  double rnorm = 0.0;  // |x - q(x)|
  double mix_norm = 0.0;  // NaN except for AA/NGMRES steps: minimized residual
  std::optional<Eigen::VectorXd> x;
};

struct Trace {
  std::vector<TraceRecord> records;
  RunStatus status = RunStatus::MaxIter;

  int iterations() const { return static_cast<int>(records.size()) - 1; }
  double final_f() const { return records.back().f; }

  /// CSV rows `k,f,gnorm,rnorm,fgap`, 17 significant digits. The gap
  /// column is f - f_star; without a reference it falls back to the
  /// smallest f in the trace.
  void write_csv(std::ostream& os, std::optional<double> f_star = {}) const;
};

/// The fixed-point problem handed to the drivers. Only q is mandatory;
/// grad is needed for NGMRES, Nesterov and globalization, f for traces,
/// restarts and globalization. Without f, traces record 1/2|r|^2.
struct FixedPointSystem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> q;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<double(const Eigen::VectorXd&)> f;
};

struct MixingResult {
  Eigen::VectorXd beta;
  double objective = 0.0;  // squared norm of the minimized combination
};

/// Minimizes |anchor + sum_i beta_i (anchor - past[i])|^2. Near-dependent
/// difference columns are dropped (their coefficient stays 0) instead of
/// blowing up the solve.
MixingResult solve_mixing(const Eigen::VectorXd& anchor,
                          const std::vector<Eigen::VectorXd>& past);

struct LineSearchResult {
  double step = 0.0;
  bool wolfe_satisfied = false;
  int evaluations = 0;
};

/// Cubic-interpolation line search for the strong Wolfe conditions.
/// phi must be a descent direction at 0 (dphi(0) < 0; throws otherwise).
/// Returns the best step found with a flag when the budget runs out.
LineSearchResult line_search_cubic(const std::function<double(double)>& phi,
                                   const std::function<double(double)>& dphi,
                                   const LineSearchParams& params = {});

/// Driver for the nonstationary methods (FixedPoint, AA, NGMRES,
/// NesterovRestart). Stops when f <= f_tol or the iterate goes
/// non-finite (status Diverged, partial trace kept).
Trace run_accelerated(const FixedPointSystem& sys, const MethodSpec& spec,
                      const Eigen::VectorXd& x0, int max_iter,
                      double f_tol = 0.0, bool record_iterates = false);

/// Driver for the stationary recurrences (SAA, SNGMRES, SNGMRESR) with
/// fixed coefficients. The first m steps are plain fixed-point steps.
Trace run_stationary(const FixedPointSystem& sys, const MethodSpec& spec,
                     const Eigen::VectorXd& x0, int max_iter,
                     double f_tol = 0.0, bool record_iterates = false);

/// Root-convergence factor estimate from the trace's objective gaps:
/// gaps contract with rho^2, so rho = exp(mean log gap ratio / 2) over
/// the last `window` ratios whose gaps exceed the floor. Throws
/// std::invalid_argument with fewer than 5 usable ratios.
double estimate_convergence_factor(const Trace& trace, double f_star,
                                   int window, double gap_floor = 1e-26);

}  // namespace fpaccel
