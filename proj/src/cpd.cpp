#include "fpaccel/cpd.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fpaccel/util.hpp"

namespace fpaccel {

FactorPoint::FactorPoint(std::vector<Eigen::MatrixXd> f) : factors(std::move(f)) {
  for (const auto& m : factors) {
    if (m.cols() != factors[0].cols()) {
      throw std::invalid_argument("factor matrices must share a column count");
    }
  }
}

Eigen::Index FactorPoint::dof() const {
  Eigen::Index n = 0;
  for (const auto& m : factors) n += m.size();
  return n;
}

Eigen::VectorXd FactorPoint::flatten() const {
  Eigen::VectorXd x(dof());
  Eigen::Index off = 0;
  for (const auto& m : factors) {
    x.segment(off, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    off += m.size();
  }
  return x;
}

FactorPoint FactorPoint::unflatten(const Eigen::VectorXd& x,
                                   const std::vector<Eigen::Index>& dims,
                                   Eigen::Index rank) {
  Eigen::Index expected = 0;
  for (Eigen::Index d : dims) expected += d * rank;
  if (x.size() != expected) {
    throw std::invalid_argument("unflatten: length does not match dims*rank");
  }
  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(dims.size());
  Eigen::Index off = 0;
  for (Eigen::Index d : dims) {
    factors.push_back(Eigen::Map<const Eigen::MatrixXd>(x.data() + off, d, rank));
    off += d * rank;
  }
  return FactorPoint(std::move(factors));
}

void save_factor_point(std::ostream& os, const FactorPoint& p) {
  os << "modes " << p.modes() << "\nrank " << p.rank() << "\ndims";
  for (const auto& f : p.factors) os << ' ' << f.rows();
  os << '\n';
  for (const auto& f : p.factors) {
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      os << format_g17(f.data()[i]) << '\n';
    }
  }
}

void save_factor_point_file(const std::string& path, const FactorPoint& p) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_factor_point(os, p);
}

FactorPoint load_factor_point(std::istream& is) {
  std::string tag;
  Eigen::Index modes = 0, rank = 0;
  is >> tag >> modes;
  if (tag != "modes" || modes < 1) throw std::runtime_error("checkpoint: bad 'modes'");
  is >> tag >> rank;
  if (tag != "rank" || rank < 1) throw std::runtime_error("checkpoint: bad 'rank'");
  is >> tag;
  if (tag != "dims") throw std::runtime_error("checkpoint: expected 'dims'");
  std::vector<Eigen::Index> dims(modes);
  for (auto& d : dims) {
    if (!(is >> d) || d < 1) throw std::runtime_error("checkpoint: bad extent");
  }
  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(modes);
  for (Eigen::Index d : dims) {
    Eigen::MatrixXd f(d, rank);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (!(is >> f.data()[i])) throw std::runtime_error("checkpoint: too few values");
    }
    factors.push_back(std::move(f));
  }
  return FactorPoint(std::move(factors));
}

FactorPoint load_factor_point_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_factor_point(is);
}

ConditionReport modified_condition_number(const Eigen::MatrixXd& hessian,
                                          int num_zero) {
  if (hessian.rows() != hessian.cols()) {
    throw std::invalid_argument("modified_condition_number: matrix not square");
  }
  if (num_zero < 0 || num_zero >= hessian.rows()) {
    throw std::invalid_argument("modified_condition_number: bad exclusion count");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
  if (es.info() != Eigen::Success) {
    throw NumericalError("modified_condition_number: eigensolver failed");
  }
  std::vector<double> eigs(es.eigenvalues().data(),
                           es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(eigs.begin(), eigs.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });
  eigs.erase(eigs.begin(), eigs.begin() + num_zero);

  ConditionReport rep;
  rep.L = *std::max_element(eigs.begin(), eigs.end());
  rep.ell = *std::min_element(eigs.begin(), eigs.end());
  if (rep.ell <= 0.0) {
    std::ostringstream msg;
    msg << "modified_condition_number: nonpositive eigenvalues remain after "
           "excluding "
        << num_zero << ":";
    for (double e : eigs) {
      if (e <= 0.0) msg << ' ' << format_g17(e);
    }
    throw NumericalError(msg.str());
  }
  rep.kappa_bar = rep.L / rep.ell;
  return rep;
}

CpdProblem::CpdProblem(DenseTensor data, Eigen::Index rank)
    : data_(std::move(data)), rank_(rank) {
  if (rank_ < 1) throw std::invalid_argument("CpdProblem: rank must be >= 1");
  if (data_.size() == 0) throw std::invalid_argument("CpdProblem: empty tensor");
  unfoldings_.reserve(data_.order());
  for (Eigen::Index m = 0; m < data_.order(); ++m) {
    unfoldings_.push_back(unfold(data_, m));
  }
}

Eigen::Index CpdProblem::dof() const {
  Eigen::Index n = 0;
  for (Eigen::Index d : data_.shape) n += d * rank_;
  return n;
}

int CpdProblem::degeneracy_count() const {
  return static_cast<int>((data_.order() - 1) * rank_);
}

void CpdProblem::check_shapes(const FactorPoint& x) const {
  if (x.modes() != data_.order() || x.rank() != rank_) {
    throw std::invalid_argument("factor point does not match problem shape");
  }
  for (Eigen::Index m = 0; m < x.modes(); ++m) {
    if (x.factors[m].rows() != data_.shape[m]) {
      throw std::invalid_argument("factor point does not match problem shape");
    }
  }
}

Eigen::MatrixXd CpdProblem::gram_product(
    const std::vector<Eigen::MatrixXd>& factors, Eigen::Index skip) const {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Ones(rank_, rank_);
  for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(factors.size()); ++m) {
    if (m == skip) continue;
    gamma.array() *= (factors[m].transpose() * factors[m]).array();
  }
  return gamma;
}

Eigen::MatrixXd CpdProblem::mttkrp(const std::vector<Eigen::MatrixXd>& factors,
                                   Eigen::Index mode) const {
  std::vector<Eigen::MatrixXd> others;
  others.reserve(factors.size() - 1);
  for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(factors.size()); ++m) {
    if (m != mode) others.push_back(factors[m]);
  }
  return unfoldings_[mode] * khatri_rao_fold(others);
}

double CpdProblem::objective(const FactorPoint& x) const {
  check_shapes(x);
  DenseTensor fit = kruskal_full(x.factors);
  return 0.5 * (data_.values - fit.values).squaredNorm();
}

Eigen::VectorXd CpdProblem::gradient(const FactorPoint& x) const {
  check_shapes(x);
  Eigen::VectorXd g(dof());
  Eigen::Index off = 0;
  for (Eigen::Index n = 0; n < data_.order(); ++n) {
    Eigen::MatrixXd block =
        x.factors[n] * gram_product(x.factors, n) - mttkrp(x.factors, n);
    g.segment(off, block.size()) =
        Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
    off += block.size();
  }
  return g;
}

Eigen::VectorXd CpdProblem::gradient_flat(const Eigen::VectorXd& x) const {
  return gradient(FactorPoint::unflatten(x, data_.shape, rank_));
}

Eigen::MatrixXd CpdProblem::hessian(const FactorPoint& x,
                                    DerivativeMode mode) const {
  check_shapes(x);
  const Eigen::Index n = dof();
  Eigen::MatrixXd h(n, n);

  if (mode == DerivativeMode::FiniteDifference) {
    const Eigen::VectorXd x0 = x.flatten();
    h = fd_jacobian([this](const Eigen::VectorXd& v) { return gradient_flat(v); },
                    x0, 1e-6);
  } else {
    const Eigen::Index order = data_.order();
    std::vector<Eigen::Index> offsets(order, 0);
    for (Eigen::Index m = 1; m < order; ++m) {
      offsets[m] = offsets[m - 1] + data_.shape[m - 1] * rank_;
    }
    for (Eigen::Index a = 0; a < order; ++a) {
      const Eigen::Index na = data_.shape[a];
      // Diagonal block: Gamma^(a) (x) I.
      Eigen::MatrixXd gamma = gram_product(x.factors, a);
      for (Eigen::Index t = 0; t < rank_; ++t) {
        for (Eigen::Index u = 0; u < rank_; ++u) {
          h.block(offsets[a] + t * na, offsets[a] + u * na, na, na) =
              gamma(t, u) * Eigen::MatrixXd::Identity(na, na);
        }
      }
      for (Eigen::Index b = a + 1; b < order; ++b) {
        const Eigen::Index nb = data_.shape[b];
        // Gram product over every mode except a and b.
        Eigen::MatrixXd gamma_ab = Eigen::MatrixXd::Ones(rank_, rank_);
        for (Eigen::Index m = 0; m < order; ++m) {
          if (m == a || m == b) continue;
          gamma_ab.array() *=
              (x.factors[m].transpose() * x.factors[m]).array();
        }
        // Per-column contraction of the data tensor over all modes
        // except a and b: W_t[i,j] = sum Z[..i..j..] prod_p A^(p)[k_p,t].
        std::vector<Eigen::MatrixXd> w(rank_, Eigen::MatrixXd::Zero(na, nb));
        std::vector<Eigen::Index> idx(order, 0);
        for (Eigen::Index lin = 0; lin < data_.size(); ++lin) {
          const double zval = data_.values[lin];
          if (zval != 0.0) {
            for (Eigen::Index t = 0; t < rank_; ++t) {
              double prod = zval;
              for (Eigen::Index m = 0; m < order; ++m) {
                if (m == a || m == b) continue;
                prod *= x.factors[m](idx[m], t);
              }
              w[t](idx[a], idx[b]) += prod;
            }
          }
          for (Eigen::Index m = 0; m < order; ++m) {
            if (++idx[m] < data_.shape[m]) break;
            idx[m] = 0;
          }
        }
        for (Eigen::Index t = 0; t < rank_; ++t) {
          // delta_{t,u} part: A^(a) diag(gamma_ab[:,t]) A^(b)^T - W_t.
          Eigen::MatrixXd diag_part =
              x.factors[a] * gamma_ab.col(t).asDiagonal() *
                  x.factors[b].transpose() -
              w[t];
          for (Eigen::Index u = 0; u < rank_; ++u) {
            Eigen::MatrixXd block = gamma_ab(u, t) * x.factors[a].col(u) *
                                    x.factors[b].col(t).transpose();
            if (t == u) block += diag_part;
            h.block(offsets[a] + t * na, offsets[b] + u * nb, na, nb) = block;
            h.block(offsets[b] + u * nb, offsets[a] + t * na, nb, na) =
                block.transpose();
          }
        }
      }
    }
  }
  return 0.5 * (h + h.transpose());
}

FactorPoint CpdProblem::q_sd(const FactorPoint& x, double alpha) const {
  const Eigen::VectorXd next = x.flatten() - alpha * gradient(x);
  return FactorPoint::unflatten(next, data_.shape, rank_);
}

FactorPoint CpdProblem::q_als(const FactorPoint& x) const {
  check_shapes(x);
  std::vector<Eigen::MatrixXd> factors = x.factors;
  for (Eigen::Index n = 0; n < data_.order(); ++n) {
    Eigen::MatrixXd gamma = gram_product(factors, n);
    Eigen::MatrixXd rhs = mttkrp(factors, n);  // solve A Gamma = rhs
    Eigen::LLT<Eigen::MatrixXd> llt(gamma);
    if (llt.info() != Eigen::Success) {
      const double ridge = 1e-12 * gamma.trace() / static_cast<double>(rank_);
      gamma.diagonal().array() += ridge;
      llt.compute(gamma);
      if (llt.info() != Eigen::Success) {
        throw NumericalError(
            "q_als: normal matrix for mode " + std::to_string(n) +
            " is singular beyond ridge regularization");
      }
    }
    factors[n] = llt.solve(rhs.transpose()).transpose();
  }
  return FactorPoint(std::move(factors));
}

FactorPoint CpdProblem::apply(const FixedPointKind& kind,
                              const FactorPoint& x) const {
  return kind.tag == FixedPointKind::Tag::Sd ? q_sd(x, kind.alpha) : q_als(x);
}

Eigen::MatrixXd gauss_seidel_jacobian(const Eigen::MatrixXd& hessian,
                                      const std::vector<Eigen::Index>& block_sizes) {
  const Eigen::Index n = hessian.rows();
  Eigen::Index total = 0;
  for (Eigen::Index b : block_sizes) total += b;
  if (total != n || hessian.cols() != n) {
    throw std::invalid_argument("gauss_seidel_jacobian: block sizes do not tile");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < block_sizes.size(); ++i) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      m.block(row, col, block_sizes[i], block_sizes[j]) =
          hessian.block(row, col, block_sizes[i], block_sizes[j]);
      col += block_sizes[j];
    }
    row += block_sizes[i];
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  if (std::abs(lu.determinant()) == 0.0) {
    throw NumericalError("gauss_seidel_jacobian: singular block lower triangle");
  }
  return Eigen::MatrixXd::Identity(n, n) - lu.solve(hessian);
}

Eigen::MatrixXd CpdProblem::jacobian_fixed_point(const FixedPointKind& kind,
                                                 const FactorPoint& xstar,
                                                 DerivativeMode mode,
                                                 double grad_tol) const {
  check_shapes(xstar);
  const Eigen::VectorXd g = gradient(xstar);
  const double scale = 1.0 + xstar.flatten().norm();
  if (g.norm() > grad_tol * scale) {
    throw std::invalid_argument(
        "jacobian_fixed_point: gradient norm " + format_g17(g.norm()) +
        " exceeds tolerance; not a fixed point");
  }
  if (mode == DerivativeMode::FiniteDifference) {
    const Eigen::VectorXd x0 = xstar.flatten();
    auto map = [this, &kind](const Eigen::VectorXd& v) {
      return apply(kind, FactorPoint::unflatten(v, data_.shape, rank_)).flatten();
    };
    return fd_jacobian(map, x0, 1e-6);
  }
  const Eigen::MatrixXd h = hessian(xstar, DerivativeMode::Analytic);
  if (kind.tag == FixedPointKind::Tag::Sd) {
    return Eigen::MatrixXd::Identity(h.rows(), h.cols()) - kind.alpha * h;
  }
  std::vector<Eigen::Index> blocks;
  blocks.reserve(data_.order());
  for (Eigen::Index d : data_.shape) blocks.push_back(d * rank_);
  return gauss_seidel_jacobian(h, blocks);
}

FactorPoint CpdProblem::refine_fixed_point(const FactorPoint& x0,
                                           const FixedPointKind& kind,
                                           int max_iter, double tol) const {
  check_shapes(x0);
  const double g0 = gradient(x0).norm();
  const double target = tol * (1.0 + g0);
  FactorPoint x = x0;
  FactorPoint best = x0;
  double best_gnorm = g0;
  if (g0 <= target) return x;
  for (int k = 0; k < max_iter; ++k) {
    x = apply(kind, x);
    const double gnorm = gradient(x).norm();
    if (!std::isfinite(gnorm)) {
      throw NumericalError("refine_fixed_point: iteration diverged");
    }
    if (gnorm < best_gnorm) {
      best_gnorm = gnorm;
      best = x;
    }
    if (gnorm <= target) return x;
  }
  throw NonConvergenceError(
      "refine_fixed_point: gradient norm " + format_g17(best_gnorm) +
          " above target " + format_g17(target) + " after " +
          std::to_string(max_iter) + " iterations",
      std::move(best), best_gnorm);
}

}  // namespace fpaccel
