#include <doctest.h>

#include <Eigen/Dense>
#include <sstream>

#include "fpaccel/rng.hpp"
#include "fpaccel/tensor.hpp"

using namespace fpaccel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("khatri_rao matches the column-wise Kronecker definition") {
  MatrixXd a(2, 1), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  const MatrixXd kr = khatri_rao(a, b);
  REQUIRE(kr.rows() == 4);
  CHECK(kr(0, 0) == 3);
  CHECK(kr(1, 0) == 4);
  CHECK(kr(2, 0) == 6);
  CHECK(kr(3, 0) == 8);
}

TEST_CASE("khatri_rao with a 1-row first factor is an elementwise scale") {
  Rng rng(7);
  const MatrixXd ones = MatrixXd::Ones(1, 3);
  const MatrixXd b = random_matrix(rng, 1, 3);
  CHECK((khatri_rao(ones, b) - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("khatri_rao equals the triple-loop oracle on random input") {
  Rng rng(11);
  const MatrixXd a = random_matrix(rng, 3, 2);
  const MatrixXd b = random_matrix(rng, 2, 2);
  const MatrixXd kr = khatri_rao(a, b);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index j = 0; j < 2; ++j) {
        CHECK(kr(i * 2 + j, c) == doctest::Approx(a(i, c) * b(j, c)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("khatri_rao rejects mismatched column counts") {
  CHECK_THROWS_AS(khatri_rao(MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 3)),
                  std::invalid_argument);
}

TEST_CASE("khatri_rao Gram identity (A(x)B)'(A(x)B) = A'A .* B'B") {
  Rng rng(13);
  const MatrixXd a = random_matrix(rng, 6, 4);
  const MatrixXd b = random_matrix(rng, 5, 4);
  const MatrixXd kr = khatri_rao(a, b);
  const MatrixXd lhs = kr.transpose() * kr;
  const MatrixXd rhs =
      ((a.transpose() * a).array() * (b.transpose() * b).array()).matrix();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * lhs.cwiseAbs().maxCoeff());
}

TEST_CASE("mode-0 unfold of a rank-1 tensor is a * kron(c,b)^T") {
  Rng rng(17);
  const MatrixXd a = random_matrix(rng, 4, 1);
  const MatrixXd b = random_matrix(rng, 3, 1);
  const MatrixXd c = random_matrix(rng, 2, 1);
  const DenseTensor t = kruskal_full({a, b, c});
  const MatrixXd m0 = unfold(t, 0);
  const MatrixXd expect = a * khatri_rao(c, b).transpose();
  CHECK((m0 - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("unfold then refold restores the tensor bitwise") {
  Rng rng(19);
  DenseTensor t = DenseTensor::zeros({3, 4, 2});
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values[i] = rng.normal();
  for (Eigen::Index mode = 0; mode < 3; ++mode) {
    const DenseTensor back = refold(unfold(t, mode), t.shape, mode);
    CHECK((back.values - t.values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("unfold of a 2x2x2 with entries 1..8 matches the index map") {
  DenseTensor t = DenseTensor::zeros({2, 2, 2});
  for (Eigen::Index i = 0; i < 8; ++i) t.values[i] = static_cast<double>(i + 1);
  const MatrixXd m0 = unfold(t, 0);
  // column = j + 2*k for indices (i, j, k), first index fastest in storage
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        CHECK(m0(i, j + 2 * k) == t.at(i, j, k));
      }
    }
  }
  const MatrixXd m1 = unfold(t, 1);
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        CHECK(m1(j, i + 2 * k) == t.at(i, j, k));
      }
    }
  }
}

TEST_CASE("unfold Frobenius norm is invariant over modes") {
  Rng rng(23);
  DenseTensor t = DenseTensor::zeros({4, 3, 5});
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values[i] = rng.normal();
  for (Eigen::Index mode = 0; mode < 3; ++mode) {
    CHECK(unfold(t, mode).norm() == doctest::Approx(t.frobenius_norm()).epsilon(1e-14));
  }
}

TEST_CASE("unfold rejects out-of-range modes") {
  const DenseTensor t = DenseTensor::zeros({2, 2});
  CHECK_THROWS_AS(unfold(t, 2), std::invalid_argument);
  CHECK_THROWS_AS(unfold(t, -1), std::invalid_argument);
}

TEST_CASE("kruskal_full of a single outer product") {
  Rng rng(29);
  const MatrixXd a = random_matrix(rng, 3, 1);
  const MatrixXd b = random_matrix(rng, 4, 1);
  const MatrixXd c = random_matrix(rng, 2, 1);
  const DenseTensor t = kruskal_full({a, b, c});
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        CHECK(t.at(i, j, k) == doctest::Approx(a(i) * b(j) * c(k)).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("kruskal_full with an all-zero factor is the zero tensor") {
  Rng rng(31);
  const DenseTensor t = kruskal_full(
      {random_matrix(rng, 3, 2), MatrixXd::Zero(4, 2), random_matrix(rng, 2, 2)});
  CHECK(t.frobenius_norm() == 0.0);
}

TEST_CASE("kruskal_full equals the brute-force quadruple loop") {
  Rng rng(37);
  const MatrixXd a = random_matrix(rng, 2, 2);
  const MatrixXd b = random_matrix(rng, 2, 2);
  const MatrixXd c = random_matrix(rng, 2, 2);
  const DenseTensor t = kruskal_full({a, b, c});
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        double expect = 0.0;
        for (Eigen::Index col = 0; col < 2; ++col) {
          expect += a(i, col) * b(j, col) * c(k, col);
        }
        CHECK(t.at(i, j, k) == doctest::Approx(expect).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("kruskal_full splits into per-column contributions") {
  Rng rng(41);
  std::vector<MatrixXd> factors{random_matrix(rng, 3, 3), random_matrix(rng, 4, 3),
                                random_matrix(rng, 2, 3)};
  const DenseTensor whole = kruskal_full(factors);
  VectorXd sum = VectorXd::Zero(whole.size());
  for (Eigen::Index c = 0; c < 3; ++c) {
    std::vector<MatrixXd> col{factors[0].col(c), factors[1].col(c),
                              factors[2].col(c)};
    sum += kruskal_full(col).values;
  }
  CHECK((whole.values - sum).cwiseAbs().maxCoeff() <
        1e-12 * whole.frobenius_norm());
}

TEST_CASE("kruskal_full rejects inconsistent ranks") {
  CHECK_THROWS_AS(kruskal_full({MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 3)}),
                  std::invalid_argument);
}

TEST_CASE("synthetic factors with c=0 have orthonormal columns") {
  SyntheticSpec spec;
  spec.dims = {10, 10, 10};
  spec.rank = 3;
  spec.collinearity = 0.0;
  spec.seed = 1001;
  const SyntheticProblem p = generate_synthetic(spec);
  for (const MatrixXd& f : p.truth) {
    const MatrixXd gram = f.transpose() * f;
    CHECK((gram - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("synthetic factors with c=0.5 have the prescribed Gram") {
  SyntheticSpec spec;
  spec.dims = {12, 11, 10};
  spec.rank = 3;
  spec.collinearity = 0.5;
  spec.seed = 1002;
  const SyntheticProblem p = generate_synthetic(spec);
  for (const MatrixXd& f : p.truth) {
    const MatrixXd gram = f.transpose() * f;
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j) {
        const double want = i == j ? 1.0 : 0.5;
        CHECK(gram(i, j) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("homoscedastic noise hits the requested relative magnitude") {
  SyntheticSpec spec;
  spec.dims = {8, 8, 8};
  spec.rank = 2;
  spec.collinearity = 0.3;
  spec.noise_homo = 1.0;
  spec.noise_hetero = 0.0;
  spec.seed = 1003;
  const SyntheticProblem p = generate_synthetic(spec);
  const DenseTensor clean = kruskal_full(p.truth);
  const double rel =
      (p.tensor.values - clean.values).norm() / clean.frobenius_norm();
  CHECK(rel == doctest::Approx(std::pow(99.0, -0.5)).epsilon(1e-12));
}

TEST_CASE("zero noise ratios skip the noise stages") {
  SyntheticSpec spec;
  spec.dims = {6, 6, 6};
  spec.rank = 2;
  spec.collinearity = 0.2;
  spec.seed = 1004;
  const SyntheticProblem p = generate_synthetic(spec);
  const DenseTensor clean = kruskal_full(p.truth);
  CHECK((p.tensor.values - clean.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synthetic generation is seed-deterministic") {
  SyntheticSpec spec;
  spec.dims = {7, 7, 7};
  spec.rank = 2;
  spec.collinearity = 0.5;
  spec.noise_homo = 1.0;
  spec.noise_hetero = 1.0;
  spec.seed = 1005;
  const SyntheticProblem a = generate_synthetic(spec);
  const SyntheticProblem b = generate_synthetic(spec);
  CHECK((a.tensor.values - b.tensor.values).cwiseAbs().maxCoeff() == 0.0);
  spec.seed = 1006;
  const SyntheticProblem c = generate_synthetic(spec);
  CHECK((a.tensor.values - c.tensor.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.dims = {4, 4, 4};
  spec.rank = 5;  // exceeds min extent
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.rank = 2;
  spec.collinearity = 1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.collinearity = 0.5;
  spec.noise_homo = 100.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.noise_homo = 1.0;
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("tensor cache round-trips through the text format") {
  SyntheticSpec spec;
  spec.dims = {3, 4, 2};
  spec.rank = 2;
  spec.collinearity = 0.4;
  spec.noise_homo = 2.0;
  spec.seed = 1007;
  const SyntheticProblem p = generate_synthetic(spec);
  std::stringstream ss;
  save_tensor(ss, p.tensor, spec.rank);
  const LoadedTensor back = load_tensor(ss);
  CHECK(back.rank == 2);
  CHECK(back.tensor.shape == p.tensor.shape);
  CHECK((back.tensor.values - p.tensor.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
