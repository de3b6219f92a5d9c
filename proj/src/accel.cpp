#include "fpaccel/accel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "fpaccel/util.hpp"

namespace fpaccel {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

int required_coeffs(MethodKind kind, int window) {
  switch (kind) {
    case MethodKind::SAA:
    case MethodKind::SNGMRESR:
      return window;
    case MethodKind::SNGMRES:
      return window + 1;
    default:
      return 0;
  }
}

bool is_stationary(MethodKind kind) {
  return kind == MethodKind::SAA || kind == MethodKind::SNGMRES ||
         kind == MethodKind::SNGMRESR;
}

}  // namespace

void MethodSpec::validate() const {
  const bool unbounded = window == kUnboundedWindow;
  if (window < 0 && !unbounded) {
    throw std::invalid_argument("MethodSpec: negative window");
  }
  if (is_stationary(kind)) {
    if (unbounded) {
      throw std::invalid_argument("MethodSpec: stationary window must be finite");
    }
    const int need = required_coeffs(kind, window);
    if (static_cast<int>(beta.size()) != need) {
      throw std::invalid_argument("MethodSpec: expected " + std::to_string(need) +
                                  " coefficients, got " +
                                  std::to_string(beta.size()));
    }
  } else if (!beta.empty()) {
    throw std::invalid_argument("MethodSpec: coefficients only apply to stationary kinds");
  }
  if (!(line_search.c1 > 0.0 && line_search.c1 < line_search.c2 &&
        line_search.c2 < 1.0)) {
    throw std::invalid_argument("MethodSpec: need 0 < c1 < c2 < 1");
  }
}

MethodSpec MethodSpec::fixed_point() { return {}; }
MethodSpec MethodSpec::aa(int m, bool globalize) {
  MethodSpec s;
  s.kind = MethodKind::AA;
  s.window = m;
  s.globalize = globalize;
  return s;
}
MethodSpec MethodSpec::ngmres(int m, bool globalize) {
  MethodSpec s;
  s.kind = MethodKind::NGMRES;
  s.window = m;
  s.globalize = globalize;
  return s;
}
MethodSpec MethodSpec::nesterov() {
  MethodSpec s;
  s.kind = MethodKind::NesterovRestart;
  return s;
}
MethodSpec MethodSpec::saa(std::vector<double> beta) {
  MethodSpec s;
  s.kind = MethodKind::SAA;
  s.window = static_cast<int>(beta.size());
  s.beta = std::move(beta);
  return s;
}
MethodSpec MethodSpec::sngmres(std::vector<double> beta) {
  MethodSpec s;
  s.kind = MethodKind::SNGMRES;
  s.window = static_cast<int>(beta.size()) - 1;
  s.beta = std::move(beta);
  return s;
}
MethodSpec MethodSpec::sngmresr(std::vector<double> beta) {
  MethodSpec s;
  s.kind = MethodKind::SNGMRESR;
  s.window = static_cast<int>(beta.size());
  s.beta = std::move(beta);
  return s;
}

void Trace::write_csv(std::ostream& os, std::optional<double> f_star) const {
  double ref;
  if (f_star) {
    ref = *f_star;
  } else {
    ref = std::numeric_limits<double>::infinity();
    for (const auto& r : records) ref = std::min(ref, r.f);
  }
  os << "k,f,gnorm,rnorm,fgap\n";
  for (const auto& r : records) {
    os << r.k << ',' << format_g17(r.f) << ',' << format_g17(r.gnorm) << ','
       << format_g17(r.rnorm) << ',' << format_g17(r.f - ref) << '\n';
  }
}

MixingResult solve_mixing(const Eigen::VectorXd& anchor,
                          const std::vector<Eigen::VectorXd>& past) {
  const auto p = static_cast<Eigen::Index>(past.size());
  MixingResult out;
  out.beta = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    out.objective = anchor.squaredNorm();
    return out;
  }
  const Eigen::Index n = anchor.size();
  Eigen::MatrixXd diffs(n, p);
  double max_norm = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (past[j].size() != n) {
      throw std::invalid_argument("solve_mixing: history length mismatch");
    }
    diffs.col(j) = anchor - past[j];
    max_norm = std::max(max_norm, diffs.col(j).norm());
  }
  if (max_norm == 0.0) {
    out.objective = anchor.squaredNorm();
    return out;
  }

  // Gram-Schmidt with one reorthogonalization pass; columns whose
  // projected residual falls under 1e-10 of the largest column are
  // dropped and keep coefficient zero.
  Eigen::MatrixXd q(n, p);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(p, p);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = diffs.col(j);
    const auto m = static_cast<Eigen::Index>(kept.size());
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(m);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < m; ++i) {
        const double h = q.col(i).dot(v);
        proj[i] += h;
        v -= h * q.col(i);
      }
    }
    const double vn = v.norm();
    if (vn < 1e-10 * max_norm) continue;
    r.block(0, m, m, 1) = proj;
    r(m, m) = vn;
    q.col(m) = v / vn;
    kept.push_back(j);
  }

  const auto m = static_cast<Eigen::Index>(kept.size());
  if (m > 0) {
    Eigen::VectorXd rhs = -(q.leftCols(m).transpose() * anchor);
    Eigen::VectorXd beta_kept =
        r.topLeftCorner(m, m).triangularView<Eigen::Upper>().solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i) out.beta[kept[i]] = beta_kept[i];
  }
  out.objective = (anchor + diffs * out.beta).squaredNorm();
  return out;
}

namespace {

// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb); NaN when
// degenerate so the caller can fall back to bisection.
double cubic_minimizer(double a, double fa, double ga, double b, double fb,
                       double gb) {
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  if (disc < 0.0) return kNan;
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = gb - ga + 2.0 * d2;
  if (denom == 0.0) return kNan;
  return b - (b - a) * (gb + d2 - d1) / denom;
}

}  // namespace

LineSearchResult line_search_cubic(const std::function<double(double)>& phi,
                                   const std::function<double(double)>& dphi,
                                   const LineSearchParams& params) {
  const double f0 = phi(0.0);
  const double g0 = dphi(0.0);
  if (!(g0 < 0.0)) {
    throw std::invalid_argument("line_search_cubic: not a descent direction");
  }
  LineSearchResult best{0.0, false, 0};
  double best_f = f0;
  int budget = params.max_steps;

  auto sufficient = [&](double t, double ft) {
    return ft <= f0 + params.c1 * t * g0;
  };
  auto curvature = [&](double gt) { return std::abs(gt) <= params.c2 * -g0; };
  auto note = [&](double t, double ft) {
    if (ft < best_f) {
      best_f = ft;
      best.step = t;
    }
  };

  // Zoom phase: lo always satisfies sufficient decrease with the lowest f.
  auto zoom = [&](double lo, double flo, double glo, double hi, double fhi,
                  double ghi) -> LineSearchResult {
    while (budget-- > 0) {
      double t = cubic_minimizer(lo, flo, glo, hi, fhi, ghi);
      const double lo_end = std::min(lo, hi), hi_end = std::max(lo, hi);
      const double span = hi_end - lo_end;
      if (!std::isfinite(t) || t <= lo_end + 0.05 * span ||
          t >= hi_end - 0.05 * span) {
        t = 0.5 * (lo + hi);
      }
      const double ft = phi(t), gt = dphi(t);
      ++best.evaluations;
      note(t, ft);
      if (!sufficient(t, ft) || ft >= flo) {
        hi = t;
        fhi = ft;
        ghi = gt;
      } else {
        if (curvature(gt)) return {t, true, best.evaluations};
        if (gt * (hi - lo) >= 0.0) {
          hi = lo;
          fhi = flo;
          ghi = glo;
        }
        lo = t;
        flo = ft;
        glo = gt;
      }
      if (std::abs(hi - lo) < 1e-14 * std::max(1.0, std::abs(lo))) break;
    }
    return best;
  };

  double t_prev = 0.0, f_prev = f0, g_prev = g0;
  double t = params.initial_step;
  constexpr double t_max = 1e8;
  while (budget-- > 0) {
    const double ft = phi(t), gt = dphi(t);
    ++best.evaluations;
    note(t, ft);
    if (!sufficient(t, ft) || (t_prev > 0.0 && ft >= f_prev)) {
      return zoom(t_prev, f_prev, g_prev, t, ft, gt);
    }
    if (curvature(gt)) return {t, true, best.evaluations};
    if (gt >= 0.0) return zoom(t, ft, gt, t_prev, f_prev, g_prev);
    t_prev = t;
    f_prev = ft;
    g_prev = gt;
    t = std::min(2.0 * t, t_max);
    if (t_prev >= t_max) break;
  }
  return best;
}

namespace {

struct DriverState {
  const FixedPointSystem& sys;
  Trace trace;
  bool record_iterates;

  double eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& r) const {
    return sys.f ? sys.f(x) : 0.5 * r.squaredNorm();
  }

  void push(int k, const Eigen::VectorXd& x, double f, double gnorm,
            double rnorm, double mix_norm) {
    TraceRecord rec;
    rec.k = k;
    rec.f = f;
    rec.gnorm = gnorm;
    rec.rnorm = rnorm;
    rec.mix_norm = mix_norm;
    if (record_iterates) rec.x = x;
    trace.records.push_back(std::move(rec));
  }
};

// Accept, line-search, or fall back to the plain step. `base` is q(x_k).
Eigen::VectorXd globalize_step(const FixedPointSystem& sys,
                               const LineSearchParams& params,
                               const Eigen::VectorXd& base,
                               const Eigen::VectorXd& candidate) {
  const double f_base = sys.f(base);
  if (sys.f(candidate) <= f_base) return candidate;
  const Eigen::VectorXd dir = candidate - base;
  auto phi = [&](double t) { return sys.f(base + t * dir); };
  auto dphi = [&](double t) { return sys.grad(base + t * dir).dot(dir); };
  if (!(dphi(0.0) < 0.0)) return base;
  const LineSearchResult ls = line_search_cubic(phi, dphi, params);
  if (ls.wolfe_satisfied && phi(ls.step) <= f_base) return base + ls.step * dir;
  return base;
}

}  // namespace

Trace run_accelerated(const FixedPointSystem& sys, const MethodSpec& spec,
                      const Eigen::VectorXd& x0, int max_iter, double f_tol,
                      bool record_iterates) {
  spec.validate();
  if (!sys.q) throw std::invalid_argument("run_accelerated: q is required");
  const bool needs_grad = spec.kind == MethodKind::NGMRES ||
                          spec.kind == MethodKind::NesterovRestart ||
                          spec.globalize;
  if (needs_grad && !sys.grad) {
    throw std::invalid_argument("run_accelerated: this method needs a gradient map");
  }
  if ((spec.kind == MethodKind::NesterovRestart || spec.globalize) && !sys.f) {
    throw std::invalid_argument("run_accelerated: this method needs an objective");
  }
  if (is_stationary(spec.kind)) {
    throw std::invalid_argument("run_accelerated: use run_stationary for fixed coefficients");
  }

  DriverState st{sys, {}, record_iterates};
  Eigen::VectorXd x = x0;

  std::deque<Eigen::VectorXd> q_hist;  // AA: q(x_j), newest first after push_front
  std::deque<Eigen::VectorXd> r_hist;  // AA: r(x_j)
  std::deque<Eigen::VectorXd> x_hist;  // NGMRES: x_j
  std::deque<Eigen::VectorXd> g_hist;  // NGMRES: g(x_j)
  bool have_prev = false;              // Nesterov memory
  Eigen::VectorXd q_prev;
  double gnorm_prev = 0.0;

  const bool unbounded = spec.window == MethodSpec::kUnboundedWindow;
  const auto cap = static_cast<std::size_t>(unbounded ? 0 : spec.window);

  for (int k = 0; k <= max_iter; ++k) {
    const Eigen::VectorXd qx = sys.q(x);
    const Eigen::VectorXd r = x - qx;
    const double f = st.eval_f(x, r);
    const Eigen::VectorXd g = sys.grad ? sys.grad(x) : Eigen::VectorXd();
    const double gnorm = sys.grad ? g.norm() : kNan;

    if (!std::isfinite(f) || !x.allFinite()) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      st.trace.status = RunStatus::Diverged;
      return st.trace;
    }
    if (f <= f_tol) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      st.trace.status = RunStatus::Converged;
      return st.trace;
    }
    if (k == max_iter) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      break;
    }

    Eigen::VectorXd x_next;
    double mix_norm = kNan;
    switch (spec.kind) {
      case MethodKind::FixedPoint:
        x_next = qx;
        break;
      case MethodKind::AA: {
        const auto w = unbounded ? r_hist.size()
                                 : std::min(r_hist.size(), cap);
        std::vector<Eigen::VectorXd> past(r_hist.begin(), r_hist.begin() + w);
        const MixingResult mix = solve_mixing(r, past);
        mix_norm = std::sqrt(mix.objective);
        x_next = qx;
        for (std::size_t i = 0; i < w; ++i) {
          x_next += mix.beta[static_cast<Eigen::Index>(i)] * (qx - q_hist[i]);
        }
        if (spec.globalize) x_next = globalize_step(sys, spec.line_search, qx, x_next);
        break;
      }
      case MethodKind::NGMRES: {
        // Sources are g(x_k), g(x_{k-1}), ...: the i = 0 term uses the
        // current iterate.
        const auto w = unbounded ? x_hist.size()
                                 : std::min(x_hist.size(), cap);
        const Eigen::VectorXd gq = sys.grad(qx);
        std::vector<Eigen::VectorXd> past;
        past.reserve(w + 1);
        past.push_back(g);
        for (std::size_t i = 0; i < w; ++i) past.push_back(g_hist[i]);
        const MixingResult mix = solve_mixing(gq, past);
        mix_norm = std::sqrt(mix.objective);
        x_next = qx + mix.beta[0] * (qx - x);
        for (std::size_t i = 0; i < w; ++i) {
          x_next += mix.beta[static_cast<Eigen::Index>(i) + 1] * (qx - x_hist[i]);
        }
        if (spec.globalize) x_next = globalize_step(sys, spec.line_search, qx, x_next);
        break;
      }
      case MethodKind::NesterovRestart: {
        if (have_prev && gnorm_prev > 0.0) {
          const double beta_k = std::min(1.0, gnorm / gnorm_prev);
          const Eigen::VectorXd candidate = qx + beta_k * (qx - q_prev);
          if (sys.f(candidate) > f) {
            x_next = qx;  // function restart: drop the momentum memory
            have_prev = false;
          } else {
            x_next = candidate;
          }
        } else {
          x_next = qx;
          have_prev = true;
        }
        break;
      }
      default:
        throw std::logic_error("unreachable");
    }

    st.push(k, x, f, gnorm, r.norm(), mix_norm);

    if (spec.kind == MethodKind::AA) {
      q_hist.push_front(qx);
      r_hist.push_front(r);
      if (!unbounded && q_hist.size() > cap && cap > 0) {
        q_hist.pop_back();
        r_hist.pop_back();
      }
      if (cap == 0 && !unbounded) {
        q_hist.clear();
        r_hist.clear();
      }
    } else if (spec.kind == MethodKind::NGMRES) {
      x_hist.push_front(x);
      g_hist.push_front(g);
      if (!unbounded && x_hist.size() > cap && cap > 0) {
        x_hist.pop_back();
        g_hist.pop_back();
      }
      if (cap == 0 && !unbounded) {
        x_hist.clear();
        g_hist.clear();
      }
    } else if (spec.kind == MethodKind::NesterovRestart && have_prev) {
      q_prev = qx;
      gnorm_prev = gnorm;
    }

    x = std::move(x_next);
  }
  st.trace.status = RunStatus::MaxIter;
  return st.trace;
}

Trace run_stationary(const FixedPointSystem& sys, const MethodSpec& spec,
                     const Eigen::VectorXd& x0, int max_iter, double f_tol,
                     bool record_iterates) {
  spec.validate();
  if (!is_stationary(spec.kind)) {
    throw std::invalid_argument("run_stationary: spec is not a stationary kind");
  }
  if (!sys.q) throw std::invalid_argument("run_stationary: q is required");

  DriverState st{sys, {}, record_iterates};
  Eigen::VectorXd x = x0;
  const int m = spec.window;
  std::deque<Eigen::VectorXd> q_hist;  // SAA: q(x_{k-1}), q(x_{k-2}), ...
  std::deque<Eigen::VectorXd> x_hist;  // SNGMRES(+R): x_{k-1}, x_{k-2}, ...

  for (int k = 0; k <= max_iter; ++k) {
    const Eigen::VectorXd qx = sys.q(x);
    const Eigen::VectorXd r = x - qx;
    const double f = st.eval_f(x, r);
    const double gnorm = sys.grad ? sys.grad(x).norm() : kNan;

    if (!std::isfinite(f) || !x.allFinite()) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      st.trace.status = RunStatus::Diverged;
      return st.trace;
    }
    if (f <= f_tol) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      st.trace.status = RunStatus::Converged;
      return st.trace;
    }
    if (k == max_iter) {
      st.push(k, x, f, gnorm, r.norm(), kNan);
      break;
    }
    st.push(k, x, f, gnorm, r.norm(), kNan);

    Eigen::VectorXd x_next;
    if (k < m) {
      x_next = qx;  // warm start: the recurrences begin at k = m
    } else {
      x_next = qx;
      switch (spec.kind) {
        case MethodKind::SAA:
          for (int i = 1; i <= m; ++i) {
            x_next += spec.beta[i - 1] * (qx - q_hist[i - 1]);
          }
          break;
        case MethodKind::SNGMRES:
          x_next += spec.beta[0] * (qx - x);
          for (int i = 1; i <= m; ++i) {
            x_next += spec.beta[i] * (qx - x_hist[i - 1]);
          }
          break;
        case MethodKind::SNGMRESR:
          for (int i = 1; i <= m; ++i) {
            x_next += spec.beta[i - 1] * (qx - x_hist[i - 1]);
          }
          break;
        default:
          throw std::logic_error("unreachable");
      }
    }

    if (m > 0) {
      q_hist.push_front(qx);
      x_hist.push_front(x);
      if (static_cast<int>(q_hist.size()) > m) {
        q_hist.pop_back();
        x_hist.pop_back();
      }
    }
    x = std::move(x_next);
  }
  st.trace.status = RunStatus::MaxIter;
  return st.trace;
}

double estimate_convergence_factor(const Trace& trace, double f_star,
                                   int window, double gap_floor) {
  if (window < 1) throw std::invalid_argument("estimate: window must be >= 1");
  std::vector<double> log_ratios;
  for (std::size_t i = 1; i < trace.records.size(); ++i) {
    const double g_prev = trace.records[i - 1].f - f_star;
    const double g_cur = trace.records[i].f - f_star;
    if (g_prev > gap_floor && g_cur > gap_floor) {
      log_ratios.push_back(std::log(g_cur / g_prev));
    }
  }
  if (log_ratios.size() < 5) {
    throw std::invalid_argument(
        "estimate: only " + std::to_string(log_ratios.size()) +
        " usable objective-gap ratios above the floor; need at least 5");
  }
  const auto take = std::min<std::size_t>(window, log_ratios.size());
  double sum = 0.0;
  for (std::size_t i = log_ratios.size() - take; i < log_ratios.size(); ++i) {
    sum += log_ratios[i];
  }
  return std::exp(0.5 * sum / static_cast<double>(take));
}

}  // namespace fpaccel
