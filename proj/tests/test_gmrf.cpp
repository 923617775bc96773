#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maxsmooth/error.hpp"
#include "maxsmooth/gmrf.hpp"
#include "test_util.hpp"

using namespace maxsmooth;

TEST(RwStructure, MatchesDefinition) {
  Mat r3(3, 3);
  r3 << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_EQ(rw_structure(3).to_dense(), r3);
  EXPECT_EQ(rw_structure(2).to_dense(), (Mat(2, 2) << 1, -1, -1, 1).finished());
  for (Index m = 2; m < 12; ++m) {
    EXPECT_NEAR(rw_structure(m).to_dense().rowwise().sum().cwiseAbs().maxCoeff(), 0.0, 0.0);
  }
  EXPECT_THROW(rw_structure(1), InvalidArgument);
}

TEST(RwStructure, ZeroBoundary) {
  EXPECT_EQ(rw_structure_zero_boundary(2).to_dense(), (Mat(2, 2) << 2, -1, -1, 2).finished());
  EXPECT_EQ(rw_structure_zero_boundary(1).to_dense(), Mat::Constant(1, 1, 2.0));
  EXPECT_NO_THROW(chol(rw_structure_zero_boundary(100)));
  EXPECT_THROW(rw_structure_zero_boundary(0), InvalidArgument);
}

TEST(RwStructure, EigenvaluesMatchDense) {
  for (Index m = 2; m < 9; ++m) {
    for (auto b : {Boundary::Free, Boundary::Zero}) {
      const Mat d = (b == Boundary::Free ? rw_structure(m) : rw_structure_zero_boundary(m)).to_dense();
      Eigen::SelfAdjointEigenSolver<Mat> es(d);
      Vec got = rw_eigenvalues(m, b);
      std::sort(got.data(), got.data() + got.size());
      EXPECT_LE((got - es.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Lattice, ZeroBoundaryTwoByTwo) {
  Mat want(4, 4);
  want << 4, -1, -1, 0, -1, 4, 0, -1, -1, 0, 4, -1, 0, -1, -1, 4;
  EXPECT_EQ(lattice_structure(2, 2, Boundary::Zero).to_dense(), want);
}

TEST(Lattice, FreeBoundaryTwoByTwoEigenvalues) {
  Eigen::SelfAdjointEigenSolver<Mat> es(lattice_structure(2, 2, Boundary::Free).to_dense());
  const Vec want = (Vec(4) << 0, 2, 2, 4).finished();
  EXPECT_LE((es.eigenvalues() - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lattice, InteriorDegreeAndNeighbourAverage) {
  const Index n1 = 5, n2 = 5;
  const auto q = lattice_structure(n1, n2, Boundary::Free);
  const Index i = 2 + n1 * 2;
  EXPECT_EQ(q.coeff(i, i), 4.0);
  // Full conditional mean -Σ_j Q_ij x_j / Q_ii is the four-neighbour average.
  EXPECT_EQ(q.coeff(i, i - 1), -1.0);
  EXPECT_EQ(q.coeff(i, i + 1), -1.0);
  EXPECT_EQ(q.coeff(i, i - n1), -1.0);
  EXPECT_EQ(q.coeff(i, i + n1), -1.0);
  EXPECT_EQ(q.matrix().col(i).nonZeros(), 5);
}

TEST(Lattice, FreeBoundaryNullVectorAndRank) {
  for (Index n1 = 2; n1 <= 6; ++n1) {
    for (Index n2 = 2; n2 <= 6; ++n2) {
      const auto q = lattice_structure(n1, n2, Boundary::Free);
      EXPECT_LE((q * Vec::Ones(n1 * n2)).cwiseAbs().maxCoeff(), 1e-14);
      Eigen::SelfAdjointEigenSolver<Mat> es(q.to_dense());
      EXPECT_EQ((es.eigenvalues().array() > 1e-9).count(), n1 * n2 - 1);
    }
  }
}

TEST(Lattice, ZeroBoundaryIsPositiveDefinite) {
  for (Index n : {1, 2, 5, 10, 25, 50}) {
    EXPECT_NO_THROW(chol(lattice_structure(n, n, Boundary::Zero)));
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(lattice_structure(4, 3, Boundary::Zero).to_dense());
  EXPECT_NEAR(es.eigenvalues().array().log().sum(), zero_boundary_logdet(4, 3), 1e-10);
}

TEST(IgmrfEigenvalues, MatchDenseEigensolve) {
  const Vec two = igmrf_eigenvalues(2, 2);
  EXPECT_NEAR(two[0], 0, 1e-15);
  EXPECT_NEAR(two[1], 2, 1e-14);
  EXPECT_NEAR(two[2], 2, 1e-14);
  EXPECT_NEAR(two[3], 4, 1e-14);
  for (Index n1 = 2; n1 <= 6; ++n1) {
    for (Index n2 = 2; n2 <= 6; ++n2) {
      Vec got = igmrf_eigenvalues(n1, n2);
      EXPECT_EQ(got[0], 0.0);
      std::sort(got.data(), got.data() + got.size());
      Eigen::SelfAdjointEigenSolver<Mat> es(lattice_structure(n1, n2, Boundary::Free).to_dense());
      EXPECT_LE((got - es.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
      double dense_pdet = 0;
      for (Index k = 1; k < es.eigenvalues().size(); ++k) dense_pdet += std::log(es.eigenvalues()[k]);
      EXPECT_NEAR(igmrf_log_pseudodet(n1, n2), dense_pdet, 1e-8);
    }
  }
  EXPECT_THROW(igmrf_eigenvalues(1, 3), InvalidArgument);
}

TEST(IgmrfEigenvalues, EigenvectorsFollowIndexConvention) {
  // Eigenvalue i of the closed form pairs with the separable DCT vector
  // v_{k1} ⊗ v_{k2} under i = k1 + n1 k2.
  const Index n1 = 4, n2 = 3;
  const Vec lambda = igmrf_eigenvalues(n1, n2);
  const Mat q = lattice_structure(n1, n2, Boundary::Free).to_dense();
  const Mat v1 = dct_basis(n1), v2 = dct_basis(n2);
  for (Index k2 = 0; k2 < n2; ++k2) {
    for (Index k1 = 0; k1 < n1; ++k1) {
      Mat u = v1.col(k1) * v2.col(k2).transpose();
      const Vec x = Eigen::Map<Vec>(u.data(), n1 * n2);
      EXPECT_LE((q * x - lambda[k1 + n1 * k2] * x).norm(), 1e-12);
    }
  }
}

TEST(IgmrfLogdensity, ZeroFieldAndHandValue) {
  const Index n1 = 2, n2 = 2;
  const double log2pi = std::log(2 * std::numbers::pi);
  const double norm = -1.5 * log2pi + 0.5 * (std::log(2.0) + std::log(2.0) + std::log(4.0));
  EXPECT_NEAR(igmrf_logdensity(Vec::Zero(4), 1.0, n1, n2), norm, 1e-12);
  const Vec u = (Vec(4) << 1, -1, -1, 1).finished();
  EXPECT_NEAR(lattice_structure(2, 2, Boundary::Free).quad_form(u), 16.0, 1e-12);
  EXPECT_NEAR(igmrf_logdensity(u, 1.0, n1, n2), norm - 8.0, 1e-12);
  EXPECT_THROW(igmrf_logdensity(u, 0.0, n1, n2), InvalidArgument);
}

TEST(IgmrfLogdensity, SigmaDoublingDecomposes) {
  const Index n1 = 3, n2 = 4, N = 12;
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n01;
  Vec u(N);
  for (Index i = 0; i < N; ++i) u[i] = n01(gen);
  const double s = 0.7;
  const double quad = lattice_structure(n1, n2, Boundary::Free).quad_form(u);
  const double diff = igmrf_logdensity(u, 2 * s, n1, n2) - igmrf_logdensity(u, s, n1, n2);
  // normalizing term: -(N-1) log 2; quadratic term: +(3/8) σ⁻² uᵀQu.
  EXPECT_NEAR(diff, -(N - 1) * std::log(2.0) + 0.375 * quad / (s * s), 1e-10);
}

TEST(IgmrfLogdensity, QuadraticTermIgnoresConstantShift) {
  const auto q = lattice_structure(4, 5, Boundary::Free);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n01;
  Vec u(20);
  for (Index i = 0; i < 20; ++i) u[i] = n01(gen);
  for (double c : {-3.0, 0.5, 10.0}) {
    EXPECT_NEAR(q.quad_form(u + Vec::Constant(20, c)), q.quad_form(u), 1e-10);
  }
}

TEST(Rw1Precision, Scaling) {
  EXPECT_EQ(rw1_precision(3, 1.0).to_dense(), rw_structure(3).to_dense());
  EXPECT_TRUE(rw1_precision(3, 2.0).to_dense().isApprox(0.25 * rw_structure(3).to_dense()));
  for (Index T = 2; T < 10; ++T) {
    EXPECT_NEAR(rw1_precision(T, 0.3).to_dense().rowwise().sum().cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
  EXPECT_THROW(rw1_precision(3, -1.0), InvalidArgument);
}

TEST(Simulation, IgmrfDrawsHaveTheRightCovariance) {
  const Index n1 = 3, n2 = 3, N = 9;
  Rng rng(5);
  const int S = 40000;
  Mat draws(S, N);
  for (int s = 0; s < S; ++s) draws.row(s) = sample_igmrf_lattice(n1, n2, 0.5, rng).transpose();
  // Every draw is orthogonal to the null vector.
  EXPECT_LE(draws.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  // Covariance equals the pseudo-inverse of σ⁻² Q_u.
  Eigen::SelfAdjointEigenSolver<Mat> es(lattice_structure(n1, n2, Boundary::Free).to_dense() / 0.25);
  Mat pinv = Mat::Zero(N, N);
  for (Index k = 1; k < N; ++k) {
    pinv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / es.eigenvalues()[k];
  }
  const Mat c = testutil::sample_cov(draws);
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < N; ++j) {
      const double se = std::sqrt((pinv(i, j) * pinv(i, j) + pinv(i, i) * pinv(j, j)) / S);
      EXPECT_NEAR(c(i, j), pinv(i, j), 5 * se);
    }
  }
}

TEST(Simulation, ZeroBoundaryDrawsHaveTheRightCovariance) {
  const Index n1 = 3, n2 = 2, N = 6;
  Rng rng(6);
  const int S = 40000;
  Mat draws(S, N);
  for (int s = 0; s < S; ++s) draws.row(s) = sample_zero_boundary_lattice(n1, n2, 2.0, rng).transpose();
  const Mat sigma = (2.0 * lattice_structure(n1, n2, Boundary::Zero).to_dense()).inverse();
  const Mat c = testutil::sample_cov(draws);
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < N; ++j) {
      const double se = std::sqrt((sigma(i, j) * sigma(i, j) + sigma(i, i) * sigma(j, j)) / S);
      EXPECT_NEAR(c(i, j), sigma(i, j), 5 * se);
    }
  }
}
