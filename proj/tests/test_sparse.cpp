#include <gtest/gtest.h>

#include <cmath>

#include "maxsmooth/error.hpp"
#include "maxsmooth/gmrf.hpp"
#include "maxsmooth/sparse.hpp"
#include "test_util.hpp"

using namespace maxsmooth;

namespace {

Mat m22() { return (Mat(2, 2) << 4, 2, 2, 3).finished(); }

}  // namespace

TEST(Kron, IdentityTimesIdentity) {
  const auto k = kron(SparseSymMatrix::identity(2), SparseSymMatrix::identity(2));
  EXPECT_TRUE(k.to_dense().isApprox(Mat::Identity(4, 4)));
}

TEST(Kron, ZeroBoundaryLatticeByHand) {
  const auto r = SparseSymMatrix::from_dense((Mat(2, 2) << 2, -1, -1, 2).finished());
  const auto i2 = SparseSymMatrix::identity(2);
  const Mat got = (kron(r, i2) + kron(i2, r)).to_dense();
  Mat want(4, 4);
  want << 4, -1, -1, 0, -1, 4, 0, -1, -1, 0, 4, -1, 0, -1, -1, 4;
  EXPECT_EQ(got, want);
}

TEST(Kron, TimesOneByOneIdentity) {
  std::mt19937_64 rng(3);
  const auto a = testutil::random_spd(7, 0.3, rng);
  EXPECT_EQ(kron(a, SparseSymMatrix::identity(1)).to_dense(), a.to_dense());
}

TEST(Kron, MatchesDenseKroneckerExactly) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const auto a = testutil::random_spd(4 + rep, 0.4, rng);
    const auto b = testutil::random_spd(3 + rep, 0.5, rng);
    EXPECT_EQ(kron(a, b).to_dense(), testutil::dense_kron(a.to_dense(), b.to_dense()));
  }
}

TEST(Bdiag, Basics) {
  const std::vector<SparseSymMatrix> ids{SparseSymMatrix::identity(2), SparseSymMatrix::identity(3)};
  EXPECT_TRUE(bdiag(ids).to_dense().isApprox(Mat::Identity(5, 5)));
  const std::vector<SparseSymMatrix> one{SparseSymMatrix::identity(1, 2.0)};
  EXPECT_EQ(bdiag(one).to_dense()(0, 0), 2.0);
  EXPECT_THROW(bdiag(std::vector<SparseSymMatrix>{}), InvalidArgument);
}

TEST(Bdiag, TwoRandomWalkBlocksDoNotCouple) {
  const std::vector<SparseSymMatrix> blocks{rw_structure(3), rw_structure(3)};
  const Mat d = bdiag(blocks).to_dense();
  const Mat r = rw_structure(3).to_dense();
  EXPECT_EQ(d.topLeftCorner(3, 3), r);
  EXPECT_EQ(d.bottomRightCorner(3, 3), r);
  EXPECT_EQ(d.topRightCorner(3, 3), Mat::Zero(3, 3));
  EXPECT_EQ(d.bottomLeftCorner(3, 3), Mat::Zero(3, 3));
}

TEST(Chol, IdentityFactor) {
  const auto f = chol(SparseSymMatrix::identity(3));
  EXPECT_TRUE(f.lower_dense().isApprox(Mat::Identity(3, 3)));
}

TEST(Chol, TwoByTwoHandFactor) {
  const auto q = SparseSymMatrix::from_dense(m22());
  const auto f = chol(q, Ordering::Natural);
  Mat want(2, 2);
  want << 2, 0, 1, std::sqrt(2.0);
  EXPECT_TRUE(f.lower_dense().isApprox(want, 1e-14));
  // Under the default ordering the factor reproduces Q after permutation.
  const auto g = chol(q);
  const Mat l = g.lower_dense();
  const Eigen::VectorXi p = g.permutation_indices();
  Mat rebuilt(2, 2);
  const Mat llt = l * l.transpose();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) rebuilt(p[i], p[j]) = llt(i, j);
  }
  EXPECT_TRUE(rebuilt.isApprox(m22(), 1e-14));
}

TEST(Chol, RankDeficientThrows) {
  const auto q = SparseSymMatrix::from_dense((Mat(2, 2) << 1, -1, -1, 1).finished());
  EXPECT_THROW(chol(q), NotPositiveDefinite);
}

TEST(Chol, ReconstructsRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto q = testutil::random_spd(10 + 2 * rep, 0.15, rng);
    const auto f = chol(q);
    const Mat l = f.lower_dense();
    EXPECT_TRUE((l.diagonal().array() > 0).all());
    const Eigen::VectorXi p = f.permutation_indices();
    const Mat llt = l * l.transpose();
    Mat rebuilt(q.dim(), q.dim());
    for (Index i = 0; i < q.dim(); ++i) {
      for (Index j = 0; j < q.dim(); ++j) rebuilt(p[i], p[j]) = llt(i, j);
    }
    EXPECT_LE((rebuilt - q.to_dense()).norm(), 1e-10 * q.to_dense().norm());
  }
}

TEST(CholJitter, RecordsJitterOnlyWhenNeeded) {
  const auto ok = chol_jitter(SparseSymMatrix::identity(3));
  EXPECT_EQ(ok.jitter, 0.0);
  // Singular but PSD: some δ in the ladder makes it factorizable.
  const auto r = chol_jitter(rw_structure(5));
  EXPECT_GE(r.jitter, 1e-10);
  EXPECT_LE(r.jitter, 1e-6);
  const auto bad = SparseSymMatrix::from_dense((Mat(2, 2) << 1, 2, 2, 1).finished());
  EXPECT_THROW(chol_jitter(bad), NotPositiveDefinite);
}

TEST(Solve, Examples) {
  const Vec b = (Vec(3) << 1, 2, 3).finished();
  EXPECT_TRUE(solve(chol(SparseSymMatrix::identity(3)), b).isApprox(b));
  const Vec x = solve(chol(SparseSymMatrix::from_dense(m22())), (Vec(2) << 8, 7).finished());
  EXPECT_NEAR(x[0], 1.25, 1e-14);
  EXPECT_NEAR(x[1], 1.5, 1e-14);
  EXPECT_EQ(solve(chol(SparseSymMatrix::from_dense(m22())), Vec::Zero(2)), Vec::Zero(2));
  EXPECT_THROW(solve(chol(SparseSymMatrix::identity(3)), Vec::Zero(2)), DimensionMismatch);
}

TEST(Solve, MatchesDenseInverseOnRandomMatrices) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 5 + rep % 46;
    const auto q = testutil::random_spd(n, 0.1, rng);
    Vec b(n);
    for (Index i = 0; i < n; ++i) b[i] = n01(rng);
    const Vec x = solve(chol(q), b);
    const Vec want = q.to_dense().inverse() * b;
    EXPECT_LE((x - want).norm(), 1e-8 * want.norm());
    EXPECT_LE((q * x - b).lpNorm<Eigen::Infinity>(), 1e-8 * b.lpNorm<Eigen::Infinity>());
  }
}

TEST(Logdet, Examples) {
  EXPECT_NEAR(logdet(chol(SparseSymMatrix::identity(5))), 0.0, 1e-15);
  EXPECT_NEAR(logdet(chol(SparseSymMatrix::from_dense(m22()))), std::log(8.0), 1e-14);
  EXPECT_NEAR(logdet(chol(SparseSymMatrix::identity(3, 2.0))), 3 * std::log(2.0), 1e-14);
}

TEST(Logdet, MatchesDenseEigenvalues) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const auto q = testutil::random_spd(5 + rep, 0.2, rng);
    Eigen::SelfAdjointEigenSolver<Mat> es(q.to_dense());
    const double want = es.eigenvalues().array().log().sum();
    EXPECT_NEAR(logdet(chol(q)), want, 1e-8 * std::max(1.0, std::abs(want)));
  }
}

TEST(SampleCanonical, StandardNormal) {
  const auto f = chol(SparseSymMatrix::identity(1));
  Rng rng(1);
  const int n = 100000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_canonical(f, Vec::Zero(1), rng)[0];
    s += x;
    ss += x * x;
  }
  const double m = s / n;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(ss / n - m * m, 1.0, 0.02);
}

TEST(SampleCanonical, ScaledCanonicalForm) {
  const auto f = chol(SparseSymMatrix::identity(1, 4.0));
  Rng rng(2);
  const int n = 100000;
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = sample_canonical(f, Vec::Constant(1, 4.0), rng)[0];
  double s = 0, ss = 0;
  for (double x : v) s += x;
  const double m = s / n;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = ss / (n - 1);
  // mean 1, variance 0.25; var of the sample variance is 2σ⁴/n.
  EXPECT_NEAR(m, 1.0, 3 * std::sqrt(0.25 / n));
  EXPECT_NEAR(var, 0.25, 3 * std::sqrt(2 * 0.0625 / n));
}

TEST(SampleCanonical, CovarianceMatchesDenseInverse) {
  std::mt19937_64 gen(19);
  const auto q = testutil::random_spd(5, 0.6, gen);
  const auto f = chol(q);
  Rng rng(7);
  const int n = 100000;
  const Vec b = (Vec(5) << 1, -1, 0.5, 0, 2).finished();
  Mat draws(n, 5);
  for (int i = 0; i < n; ++i) draws.row(i) = sample_canonical(f, b, rng).transpose();
  const Mat sigma = q.to_dense().inverse();
  const Vec mu = sigma * b;
  const Mat c = testutil::sample_cov(draws);
  const Vec m = draws.colwise().mean();
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(m[i], mu[i], 5 * std::sqrt(sigma(i, i) / n));
    for (int j = 0; j < 5; ++j) {
      const double se = std::sqrt((sigma(i, j) * sigma(i, j) + sigma(i, i) * sigma(j, j)) / n);
      EXPECT_NEAR(c(i, j), sigma(i, j), 5 * se);
    }
  }
}

TEST(SampleCanonical, DeterministicUnderSeed) {
  std::mt19937_64 gen(23);
  const auto f = chol(testutil::random_spd(20, 0.2, gen));
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) {
    const Vec x = sample_canonical(f, Vec::Ones(20), a);
    const Vec y = sample_canonical(f, Vec::Ones(20), b);
    EXPECT_EQ(x, y);
  }
}

TEST(CholeskyPattern, ReusesOrdering) {
  std::mt19937_64 gen(29);
  const auto q = testutil::random_spd(30, 0.1, gen);
  const CholeskyPattern pattern(q);
  const auto q2 = q.scaled(3.0);
  EXPECT_NEAR(pattern.factorize(q2).logdet(), chol(q2).logdet(), 1e-10);
}

TEST(SparseSymMatrix, RejectsAsymmetricInput) {
  EXPECT_THROW(SparseSymMatrix::from_dense((Mat(2, 2) << 1, 2, 3, 1).finished()), InvalidArgument);
  const std::vector<Triplet> t{{0, 1, 1.0}, {1, 0, 2.0}};
  // Lower entries are read as upper ones, so both land on (0,1) and sum.
  EXPECT_EQ(SparseSymMatrix::from_triplets(2, t).coeff(1, 0), 3.0);
}
