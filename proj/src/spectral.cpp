#include "fpaccel/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpaccel/util.hpp"

namespace fpaccel {

std::string to_string(StationaryVariant v) {
  switch (v) {
    case StationaryVariant::SAA: return "saa";
    case StationaryVariant::SNGMRES: return "sngmres";
    case StationaryVariant::SNGMRESR: return "sngmresr";
  }
  return "?";
}

namespace {

int window_of(StationaryVariant variant, Eigen::Index coeffs) {
  // SNGMRES carries the extra leading coefficient beta_0.
  return variant == StationaryVariant::SNGMRES ? static_cast<int>(coeffs) - 1
                                               : static_cast<int>(coeffs);
}

}  // namespace

CompanionMatrix build_companion(const Eigen::MatrixXd& qprime,
                                StationaryVariant variant,
                                const Eigen::VectorXd& beta) {
  if (qprime.rows() != qprime.cols()) {
    throw std::invalid_argument("build_companion: Jacobian must be square");
  }
  const int m = window_of(variant, beta.size());
  if (m < 0) throw std::invalid_argument("build_companion: missing beta_0");
  if (variant != StationaryVariant::SNGMRES && m == 0) {
    throw std::invalid_argument("build_companion: window must be >= 1");
  }
  const Eigen::Index n = qprime.rows();
  const double sum = beta.sum();

  CompanionMatrix out;
  out.variant = variant;
  out.m = m;
  out.beta = beta;
  out.base_dim = n;
  out.matrix = Eigen::MatrixXd::Zero((m + 1) * n, (m + 1) * n);

  Eigen::MatrixXd lead = (1.0 + sum) * qprime;
  if (variant == StationaryVariant::SNGMRES) {
    lead.diagonal().array() -= beta[0];
  }
  out.matrix.block(0, 0, n, n) = lead;
  const int tail_offset = variant == StationaryVariant::SNGMRES ? 1 : 0;
  for (int i = 1; i <= m; ++i) {
    const double bi = beta[tail_offset + i - 1];
    if (variant == StationaryVariant::SAA) {
      out.matrix.block(0, i * n, n, n) = -bi * qprime;
    } else {
      out.matrix.block(0, i * n, n, n) =
          -bi * Eigen::MatrixXd::Identity(n, n);
    }
  }
  for (int i = 1; i <= m; ++i) {
    out.matrix.block(i * n, (i - 1) * n, n, n) =
        Eigen::MatrixXd::Identity(n, n);
  }
  return out;
}

Eigen::VectorXcd companion_scalar_roots(std::complex<double> mu,
                                        StationaryVariant variant,
                                        const Eigen::VectorXd& beta) {
  const int m = window_of(variant, beta.size());
  if (m < 0) throw std::invalid_argument("companion_scalar_roots: missing beta_0");
  const double sum = beta.sum();
  const int tail_offset = variant == StationaryVariant::SNGMRES ? 1 : 0;

  // lambda^{m+1} - lead*lambda^m + sum_i tail_i lambda^{m-i} = 0
  std::complex<double> lead = (1.0 + sum) * mu;
  if (variant == StationaryVariant::SNGMRES) lead -= beta[0];
  std::vector<std::complex<double>> tail(m);
  for (int i = 1; i <= m; ++i) {
    const double bi = beta[tail_offset + i - 1];
    tail[i - 1] = variant == StationaryVariant::SAA
                      ? std::complex<double>(bi) * mu
                      : std::complex<double>(bi);
  }

  if (m == 0) {
    Eigen::VectorXcd r(1);
    r[0] = lead;
    return r;
  }
  if (m == 1) {  // quadratic formula
    const std::complex<double> disc = lead * lead - 4.0 * tail[0];
    const std::complex<double> s = std::sqrt(disc);
    Eigen::VectorXcd r(2);
    r[0] = 0.5 * (lead + s);
    r[1] = 0.5 * (lead - s);
    return r;
  }
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(m + 1, m + 1);
  t(0, 0) = lead;
  for (int i = 1; i <= m; ++i) {
    t(0, i) = -tail[i - 1];
    t(i, i - 1) = 1.0;
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(t, false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("companion_scalar_roots: eigensolver failed");
  }
  return es.eigenvalues();
}

SpectralReport modified_spectral_radius(const Eigen::VectorXcd& eigenvalues,
                                        int num_excluded, double target) {
  const Eigen::Index n = eigenvalues.size();
  if (num_excluded < 0 || num_excluded >= n) {
    throw std::invalid_argument(
        "modified_spectral_radius: exclusion count out of range");
  }
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(eigenvalues[a] - target) < std::abs(eigenvalues[b] - target);
  });

  SpectralReport rep;
  rep.eigenvalues.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) rep.eigenvalues[i] = eigenvalues[order[i]];
  rep.num_excluded = num_excluded;
  rep.exclusion_target = target;

  for (Eigen::Index i = 0; i < num_excluded; ++i) {
    const double dist = std::abs(rep.eigenvalues[i] - target);
    if (dist > 1e-6) {
      rep.warnings.push_back("excluded eigenvalue " +
                             format_g17(rep.eigenvalues[i].real()) + (
                                 rep.eigenvalues[i].imag() >= 0 ? "+" : "") +
                             format_g17(rep.eigenvalues[i].imag()) +
                             "i lies " + format_g17(dist) + " from the target " +
                             format_g17(target));
    }
  }
  rep.rho = 0.0;
  for (Eigen::Index i = num_excluded; i < n; ++i) {
    const double mod = std::abs(rep.eigenvalues[i]);
    if (mod >= rep.rho) {
      rep.rho = mod;
      rep.dominant = rep.eigenvalues[i];
    }
  }
  return rep;
}

SpectralReport modified_spectral_radius(const Eigen::MatrixXd& m,
                                        int num_excluded, double target) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("modified_spectral_radius: eigensolver failed");
  }
  return modified_spectral_radius(Eigen::VectorXcd(es.eigenvalues()),
                                  num_excluded, target);
}

nlohmann::json SpectralReport::to_json() const {
  nlohmann::json j;
  std::vector<double> re(eigenvalues.size()), im(eigenvalues.size());
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    re[i] = eigenvalues[i].real();
    im[i] = eigenvalues[i].imag();
  }
  j["eigs_re"] = re;
  j["eigs_im"] = im;
  j["excluded"] = num_excluded;
  j["rho"] = rho;
  j["kappa_bar"] = condition ? nlohmann::json(condition->kappa_bar) : nullptr;
  j["L"] = condition ? nlohmann::json(condition->L) : nullptr;
  j["ell"] = condition ? nlohmann::json(condition->ell) : nullptr;
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

OptimalCoefficient optimal_beta_step1_real(double mu,
                                           StationaryVariant variant) {
  if (variant == StationaryVariant::SNGMRES) {
    throw std::invalid_argument(
        "optimal_beta_step1_real: no closed form for the unreduced variant");
  }
  if (variant == StationaryVariant::SAA) {
    if (mu == 0.0) {
      throw std::invalid_argument("optimal_beta_step1_real: mu = 0 is degenerate");
    }
    if (mu >= 1.0) return {-1.0, std::sqrt(mu)};
    const double s = std::sqrt(1.0 - mu);
    const double beta = (1.0 - s) / (1.0 + s);
    return {beta, mu > 0.0 ? 1.0 - s : s - 1.0};
  }
  // Reduced NGMRES
  const double amu = std::abs(mu);
  if (amu >= 1.0) return {-1.0, 1.0};
  const double s = std::sqrt(1.0 - mu * mu);
  return {(1.0 - s) / (1.0 + s), amu / (1.0 + s)};
}

double sd_convergence_factor(double kappa_bar) {
  if (kappa_bar < 1.0) {
    throw std::invalid_argument("sd_convergence_factor: kappa_bar must be >= 1");
  }
  return (kappa_bar - 1.0) / (kappa_bar + 1.0);
}

SdParams optimal_sd_params(double L, double ell, SdAcceleration variant) {
  if (!(ell > 0.0 && L > ell)) {
    throw std::invalid_argument("optimal_sd_params: need 0 < ell < L");
  }
  const double kappa = L / ell;
  SdParams p;
  switch (variant) {
    case SdAcceleration::SaaAlphaOneOverL: {
      p.alpha = 1.0 / L;
      const double s = std::sqrt(ell / L);
      p.beta = (1.0 - s) / (1.0 + s);
      p.rho = 1.0 - s;
      break;
    }
    case SdAcceleration::SaaOptimal: {
      p.alpha = 4.0 / (3.0 * L + ell);
      const double s = std::sqrt(p.alpha * ell);
      p.beta = (1.0 - s) / (1.0 + s);
      p.rho = 1.0 - s;  // equals (sqrt(3k+1)-2)/sqrt(3k+1)
      break;
    }
    case SdAcceleration::SngmresrOptimal: {
      p.alpha = 2.0 / (L + ell);
      const double sk = std::sqrt(kappa);
      p.rho = (sk - 1.0) / (sk + 1.0);
      p.beta = p.rho * p.rho;
      break;
    }
  }
  return p;
}

OptimalCoefficient complex_lower_bound(double rho_qprime,
                                       StationaryVariant variant) {
  if (!(rho_qprime > 0.0 && rho_qprime < 1.0)) {
    throw std::invalid_argument("complex_lower_bound: need rho in (0,1)");
  }
  if (variant == StationaryVariant::SAA) {
    const double s = std::sqrt(1.0 - rho_qprime);
    return {(1.0 - s) / (1.0 + s), 1.0 - s};
  }
  if (variant == StationaryVariant::SNGMRESR) {
    const double s = std::sqrt(1.0 - rho_qprime * rho_qprime);
    return {(1.0 - s) / (1.0 + s), rho_qprime / (1.0 + s)};
  }
  throw std::invalid_argument(
      "complex_lower_bound: no closed form for the unreduced variant");
}

RectBounds rect_bounds_sngmres_r1(double r1, double r2, int a_grid) {
  if (!(r1 >= 0.0 && r1 < 1.0 && r2 >= 0.0 && r2 < 1.0)) {
    throw std::invalid_argument("rect_bounds: need r1, r2 in [0,1)");
  }
  if (r1 == 0.0 && r2 == 0.0) {
    throw std::invalid_argument("rect_bounds: r1 and r2 must not both vanish");
  }
  RectBounds out;
  if (r1 == r2) {
    out.delta1 = r1 / (1.0 + std::sqrt(1.0 - r1 * r1));
    return out;  // no upper bound in the square case
  }
  const double eta0 = 2.0 / (1.0 + std::sqrt(1.0 - r1 * r1 + r2 * r2));
  const double eta1 = 1.0 - eta0;
  const double disc1 = std::max(0.0, r2 * eta0 * r2 * eta0 - 4.0 * eta1);
  out.delta1 = 2.0 * eta1 / (r2 * eta0 - std::sqrt(disc1));

  const double a_lo = std::max(r1, r2) + 1e-6;
  const double a_hi = 1.0 - 1e-6;
  if (a_lo >= a_hi || a_grid < 1) return out;  // no admissible range

  double best = std::numeric_limits<double>::infinity();
  double best_a = 0.0;
  for (int i = 0; i < a_grid; ++i) {
    const double t = a_grid == 1 ? 0.0 : static_cast<double>(i) / (a_grid - 1);
    const double a = a_lo * std::pow(a_hi / a_lo, t);
    const double under = a * a - r1 * r1;
    if (under <= 0.0) continue;
    const double b = a * r2 / std::sqrt(under);
    const double tau0 = 2.0 / (1.0 + std::sqrt(1.0 - a * a + b * b));
    const double tau1 = 1.0 - tau0;
    double val;
    if (r1 > r2) {
      const double disc = std::max(0.0, a * tau0 * a * tau0 + 4.0 * tau1);
      const double denom = -a * tau0 + std::sqrt(disc);
      if (denom == 0.0) continue;
      val = 2.0 * tau1 / denom;
    } else {
      const double disc = std::max(0.0, b * tau0 * b * tau0 - 4.0 * tau1);
      const double denom = b * tau0 - std::sqrt(disc);
      if (denom == 0.0) continue;
      val = 2.0 * tau1 / denom;
    }
    if (std::isfinite(val) && val > 0.0 && val < best) {
      best = val;
      best_a = a;
    }
  }
  if (std::isfinite(best)) {
    out.delta2 = best;
    out.a_star = best_a;
  }
  return out;
}

std::vector<double> GridSpec::values() const {
  if (step <= 0.0 || stop < start) {
    throw std::invalid_argument("GridSpec: need step > 0 and stop >= start");
  }
  std::vector<double> v;
  const double eps = 0.5 * step;
  for (int i = 0;; ++i) {
    const double x = start + i * step;
    if (x > stop + eps) break;
    v.push_back(x);
  }
  return v;
}

BruteForceResult brute_force_beta_spectrum(const Eigen::VectorXcd& spectrum,
                                           StationaryVariant variant, int m,
                                           const GridSpec& grid,
                                           int num_excluded) {
  const int coeffs = variant == StationaryVariant::SNGMRES ? m + 1 : m;
  if (coeffs < 1 || coeffs > 2) {
    throw std::invalid_argument(
        "brute_force_beta: the product grid supports 1 or 2 coefficients");
  }
  const std::vector<double> axis = grid.values();
  if (axis.empty()) throw std::invalid_argument("brute_force_beta: empty grid");

  std::size_t cells = 1;
  for (int c = 0; c < coeffs; ++c) cells *= axis.size();

  std::vector<double> rho(cells);
  parallel_for(cells, [&](std::size_t cell) {
    Eigen::VectorXd beta(coeffs);
    std::size_t rest = cell;
    // Lexicographic cell order: last coefficient varies fastest.
    for (int c = coeffs - 1; c >= 0; --c) {
      beta[c] = axis[rest % axis.size()];
      rest /= axis.size();
    }
    Eigen::VectorXcd all(spectrum.size() * (m + 1));
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
      const Eigen::VectorXcd roots =
          companion_scalar_roots(spectrum[i], variant, beta);
      all.segment(at, roots.size()) = roots;
      at += roots.size();
    }
    rho[cell] = modified_spectral_radius(all, num_excluded, 1.0).rho;
  });

  std::size_t best = 0;
  for (std::size_t cell = 1; cell < cells; ++cell) {
    if (rho[cell] < rho[best]) best = cell;  // first hit wins ties: lexicographic
  }
  BruteForceResult out;
  out.rho = rho[best];
  out.beta.resize(coeffs);
  std::size_t rest = best;
  for (int c = coeffs - 1; c >= 0; --c) {
    out.beta[c] = axis[rest % axis.size()];
    rest /= axis.size();
  }
  return out;
}

BruteForceResult brute_force_beta(const Eigen::MatrixXd& qprime,
                                  StationaryVariant variant, int m,
                                  const GridSpec& grid, int num_excluded) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(qprime, false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("brute_force_beta: eigensolver failed");
  }
  return brute_force_beta_spectrum(es.eigenvalues(), variant, m, grid,
                                   num_excluded);
}

}  // namespace fpaccel
