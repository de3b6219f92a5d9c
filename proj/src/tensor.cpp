#include "fpaccel/tensor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fpaccel/rng.hpp"
#include "fpaccel/util.hpp"

namespace fpaccel {

namespace {

Eigen::Index product(const std::vector<Eigen::Index>& dims) {
  Eigen::Index p = 1;
  for (Eigen::Index d : dims) p *= d;
  return p;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Eigen::Index> dims, Eigen::VectorXd vals)
    : shape(std::move(dims)), values(std::move(vals)) {
  for (Eigen::Index d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
  }
  if (values.size() != product(shape)) {
    throw std::invalid_argument("value count does not match tensor extents");
  }
}

DenseTensor DenseTensor::zeros(const std::vector<Eigen::Index>& dims) {
  return DenseTensor(dims, Eigen::VectorXd::Zero(product(dims)));
}

double& DenseTensor::at(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
  return values[i + shape[0] * (j + shape[1] * k)];
}

double DenseTensor::at(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
  return values[i + shape[0] * (j + shape[1] * k)];
}

Eigen::MatrixXd khatri_rao(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("khatri_rao: column counts differ");
  }
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), c, b.rows(), 1) = a(i, c) * b.col(c);
    }
  }
  return out;
}

Eigen::MatrixXd khatri_rao_fold(const std::vector<Eigen::MatrixXd>& factors) {
  if (factors.empty()) {
    throw std::invalid_argument("khatri_rao_fold: no factors");
  }
  Eigen::MatrixXd acc = factors.back();
  for (auto it = factors.rbegin() + 1; it != factors.rend(); ++it) {
    acc = khatri_rao(acc, *it);
  }
  return acc;
}

Eigen::MatrixXd unfold(const DenseTensor& t, Eigen::Index mode) {
  const Eigen::Index order = t.order();
  if (mode < 0 || mode >= order) {
    throw std::invalid_argument("unfold: mode out of range");
  }
  const Eigen::Index rows = t.shape[mode];
  const Eigen::Index cols = t.size() / rows;
  Eigen::MatrixXd out(rows, cols);

  // Row stride of the mode index inside the linearization, and the
  // column built from the remaining indices with lower modes fastest.
  std::vector<Eigen::Index> idx(order, 0);
  for (Eigen::Index lin = 0; lin < t.size(); ++lin) {
    Eigen::Index col = 0, stride = 1;
    for (Eigen::Index m = 0; m < order; ++m) {
      if (m == mode) continue;
      col += idx[m] * stride;
      stride *= t.shape[m];
    }
    out(idx[mode], col) = t.values[lin];
    for (Eigen::Index m = 0; m < order; ++m) {  // odometer increment
      if (++idx[m] < t.shape[m]) break;
      idx[m] = 0;
    }
  }
  return out;
}

DenseTensor refold(const Eigen::MatrixXd& m,
                   const std::vector<Eigen::Index>& shape, Eigen::Index mode) {
  DenseTensor t = DenseTensor::zeros(shape);
  const Eigen::Index order = t.order();
  if (mode < 0 || mode >= order) {
    throw std::invalid_argument("refold: mode out of range");
  }
  if (m.rows() != shape[mode] || m.cols() != t.size() / shape[mode]) {
    throw std::invalid_argument("refold: matrix shape does not match");
  }
  std::vector<Eigen::Index> idx(order, 0);
  for (Eigen::Index lin = 0; lin < t.size(); ++lin) {
    Eigen::Index col = 0, stride = 1;
    for (Eigen::Index k = 0; k < order; ++k) {
      if (k == mode) continue;
      col += idx[k] * stride;
      stride *= shape[k];
    }
    t.values[lin] = m(idx[mode], col);
    for (Eigen::Index k = 0; k < order; ++k) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return t;
}

DenseTensor kruskal_full(const std::vector<Eigen::MatrixXd>& factors) {
  if (factors.empty()) throw std::invalid_argument("kruskal_full: no factors");
  const Eigen::Index r = factors.front().cols();
  std::vector<Eigen::Index> shape;
  shape.reserve(factors.size());
  for (const auto& f : factors) {
    if (f.cols() != r) {
      throw std::invalid_argument("kruskal_full: inconsistent ranks");
    }
    shape.push_back(f.rows());
  }
  if (factors.size() == 1) {
    // Degenerate one-way case: row sums of the single factor.
    return DenseTensor(shape, factors[0].rowwise().sum());
  }
  std::vector<Eigen::MatrixXd> rest(factors.begin() + 1, factors.end());
  Eigen::MatrixXd mode0 = factors[0] * khatri_rao_fold(rest).transpose();
  return refold(mode0, shape, 0);
}

void SyntheticSpec::validate() const {
  if (dims.empty()) throw std::invalid_argument("synthetic: dims empty");
  Eigen::Index min_dim = dims.front();
  for (Eigen::Index d : dims) {
    if (d <= 0) throw std::invalid_argument("synthetic: extents must be positive");
    min_dim = std::min(min_dim, d);
  }
  if (rank < 1) throw std::invalid_argument("synthetic: rank must be >= 1");
  if (rank > min_dim) {
    throw std::invalid_argument(
        "synthetic: rank exceeds the smallest extent; orthonormalization needs "
        "rank <= min(dims)");
  }
  if (collinearity < 0.0 || collinearity >= 1.0) {
    throw std::invalid_argument("synthetic: collinearity must lie in [0,1)");
  }
  if (noise_homo < 0.0 || noise_homo >= 100.0 || noise_hetero < 0.0 ||
      noise_hetero >= 100.0) {
    throw std::invalid_argument("synthetic: noise ratios must lie in [0,100)");
  }
}

SyntheticProblem generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index r = spec.rank;
  const auto n_modes = static_cast<Eigen::Index>(spec.dims.size());
  Rng rng(spec.seed);

  // Gram matrix with unit diagonal and constant off-diagonal, and its
  // upper Cholesky factor C so that (Q C)^T (Q C) = K exactly.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Constant(r, r, spec.collinearity);
  gram.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("synthetic: Cholesky of the collinearity Gram failed");
  }
  const Eigen::MatrixXd chol_upper = llt.matrixU();

  SyntheticProblem out;
  out.truth.reserve(n_modes);
  for (Eigen::Index m = 0; m < n_modes; ++m) {
    Eigen::MatrixXd raw(spec.dims[m], r);
    for (Eigen::Index c = 0; c < r; ++c) {
      for (Eigen::Index i = 0; i < spec.dims[m]; ++i) raw(i, c) = rng.uniform();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ() *
                        Eigen::MatrixXd::Identity(spec.dims[m], r);
    out.truth.push_back(q * chol_upper);
  }

  DenseTensor z = kruskal_full(out.truth);

  auto add_noise = [&](DenseTensor& base, double ratio, bool elementwise) {
    if (ratio == 0.0) return;
    DenseTensor noise = DenseTensor::zeros(base.shape);
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
      noise.values[i] = rng.normal();
    }
    if (elementwise) noise.values.array() *= base.values.array();
    const double nn = noise.frobenius_norm();
    if (nn == 0.0) return;
    const double scale =
        std::pow(100.0 / ratio - 1.0, -0.5) * base.frobenius_norm() / nn;
    base.values += scale * noise.values;
  };

  add_noise(z, spec.noise_homo, /*elementwise=*/false);
  add_noise(z, spec.noise_hetero, /*elementwise=*/true);
  out.tensor = std::move(z);
  return out;
}

void save_tensor(std::ostream& os, const DenseTensor& t, Eigen::Index rank) {
  os << "dims";
  for (Eigen::Index d : t.shape) os << ' ' << d;
  os << "\nrank " << rank << '\n';
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    os << format_g17(t.values[i]) << '\n';
  }
}

void save_tensor_file(const std::string& path, const DenseTensor& t,
                      Eigen::Index rank) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_tensor(os, t, rank);
}

LoadedTensor load_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("tensor file: empty");
  std::istringstream dims_line(line);
  std::string tag;
  dims_line >> tag;
  if (tag != "dims") throw std::runtime_error("tensor file: expected 'dims'");
  std::vector<Eigen::Index> shape;
  for (long long d; dims_line >> d;) shape.push_back(d);
  if (shape.empty()) throw std::runtime_error("tensor file: no extents");

  if (!std::getline(is, line)) throw std::runtime_error("tensor file: truncated");
  std::istringstream rank_line(line);
  long long rank = 0;
  rank_line >> tag >> rank;
  if (tag != "rank" || rank < 1) {
    throw std::runtime_error("tensor file: expected 'rank r'");
  }

  DenseTensor t = DenseTensor::zeros(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (!(is >> t.values[i])) {
      throw std::runtime_error("tensor file: too few values");
    }
  }
  return LoadedTensor{std::move(t), static_cast<Eigen::Index>(rank)};
}

LoadedTensor load_tensor_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open tensor file: " + path);
  return load_tensor(is);
}

}  // namespace fpaccel
