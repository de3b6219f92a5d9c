#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fpaccel {

/// Raised when an iterative routine fails for numerical reasons
/// (singular solve, eigensolver breakdown, ill-conditioned basis).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits, enough to round-trip.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Central-difference Jacobian of a vector map, column by column.
/// Step for coordinate i is h_rel*(1+|x_i|).
inline Eigen::MatrixXd
fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& map,
            const Eigen::VectorXd& x, double h_rel = 1e-6) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd probe = map(x);
  Eigen::MatrixXd jac(probe.size(), n);
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = h_rel * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    jac.col(i) = (map(xp) - map(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return jac;
}

/// Number of worker threads: FPACCEL_THREADS if set, otherwise the
/// hardware count. Always at least 1.
inline int thread_budget() {
  if (const char* env = std::getenv("FPACCEL_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs body(i) for i in [0, count). Work is chunked over the thread
/// budget; each index writes only its own slot so results are
/// deterministic regardless of the thread count.
inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t)>& body) {
  const int threads = std::min<std::size_t>(thread_budget(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fpaccel
