#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace fpaccel {

/// Dense N-way array. Values are stored with the first index fastest
/// (the N-way generalization of column-major order).
struct DenseTensor {
  std::vector<Eigen::Index> shape;
  Eigen::VectorXd values;

  DenseTensor() = default;
  DenseTensor(std::vector<Eigen::Index> dims, Eigen::VectorXd vals);

  static DenseTensor zeros(const std::vector<Eigen::Index>& dims);

  Eigen::Index order() const { return static_cast<Eigen::Index>(shape.size()); }
  Eigen::Index size() const { return values.size(); }
  double frobenius_norm() const { return values.norm(); }

  /// Element access for 3-way tensors.
  double& at(Eigen::Index i, Eigen::Index j, Eigen::Index k);
  double at(Eigen::Index i, Eigen::Index j, Eigen::Index k) const;
};

/// Column-wise Kronecker product: column j of the result is
/// kron(a_j, b_j), with B's index running fastest.
Eigen::MatrixXd khatri_rao(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Khatri-Rao product of factors.back() down to factors.front(), so the
/// first matrix's row index runs fastest. Matches the column ordering of
/// mode unfoldings below.
Eigen::MatrixXd khatri_rao_fold(const std::vector<Eigen::MatrixXd>& factors);

/// Mode-`mode` matricization (modes are 0-based). Row index is i_mode;
/// the column index runs over the remaining indices with the lowest mode
/// fastest.
Eigen::MatrixXd unfold(const DenseTensor& t, Eigen::Index mode);

/// Exact inverse of unfold.
DenseTensor refold(const Eigen::MatrixXd& m,
                   const std::vector<Eigen::Index>& shape, Eigen::Index mode);

/// Assembles the full tensor Sum_j a1_j (outer) a2_j (outer) ... from
/// factor matrices sharing a common column count.
DenseTensor kruskal_full(const std::vector<Eigen::MatrixXd>& factors);

/// Parameters for the randomized low-rank-plus-noise test problem.
struct SyntheticSpec {
  std::vector<Eigen::Index> dims;
  Eigen::Index rank = 0;
  double collinearity = 0.0;  // common inner product c of factor columns
  double noise_homo = 0.0;    // homoscedastic noise ratio l1, percent-like
  double noise_hetero = 0.0;  // heteroscedastic noise ratio l2
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument on bad fields
};

struct SyntheticProblem {
  DenseTensor tensor;
  std::vector<Eigen::MatrixXd> truth;  // noiseless factor matrices
};

/// Builds the data tensor: factor columns are unit vectors with pairwise
/// inner products exactly `collinearity` (uniform random matrices in
/// [0,1), orthonormalized by QR, multiplied by the Cholesky factor of the
/// collinearity Gram), followed by two optional noise stages with the
/// stated ratios. Fully deterministic given the seed.
SyntheticProblem generate_synthetic(const SyntheticSpec& spec);

/// Text tensor cache: header lines `dims n1 ... nN` and `rank r`, then
/// one value per line in storage order, 17 significant digits.
void save_tensor(std::ostream& os, const DenseTensor& t, Eigen::Index rank);
void save_tensor_file(const std::string& path, const DenseTensor& t,
                      Eigen::Index rank);
struct LoadedTensor {
  DenseTensor tensor;
  Eigen::Index rank;
};
LoadedTensor load_tensor(std::istream& is);
LoadedTensor load_tensor_file(const std::string& path);

}  // namespace fpaccel
