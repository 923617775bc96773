#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "maxsmooth/error.hpp"
#include "maxsmooth/gmrf.hpp"
#include "maxsmooth/smooth.hpp"
#include "maxsmooth/stats.hpp"
#include "pseudo_oracle.hpp"
#include "test_util.hpp"

using namespace maxsmooth;

namespace {

GroupApprox scalar_group(double mean, double precision) {
  GroupApprox g;
  g.mean = Vec::Constant(1, mean);
  g.precision = Mat::Constant(1, 1, precision);
  return g;
}

// G scalar groups, Z = I, Q_ν = θ_0·S, Q_ε = θ_1·I (both precisions).
PseudoModel identity_model(const Vec& eta_hat, double qy, const SparseSymMatrix& s, bool eps_zero) {
  const Index n = eta_hat.size();
  std::vector<GroupApprox> gs;
  for (Index i = 0; i < n; ++i) gs.push_back(scalar_group(eta_hat[i], qy));
  PseudoModel m;
  m.stacked = stack(gs, 1, n);
  SpMat z(n, n);
  z.setIdentity();
  m.Z = z;
  m.mu_nu = Vec::Zero(n);
  NuBlock b;
  b.structure = s;
  b.theta_index = 0;
  b.scale = ScaleKind::Precision;
  m.nu_blocks.push_back(b);
  m.theta.push_back({"q_nu"});
  m.eps_zero = eps_zero;
  if (!eps_zero) {
    m.eps_blocks.push_back({n, 1, ScaleKind::Precision});
    m.theta.push_back({"q_eps"});
  }
  m.validate();
  return m;
}

}  // namespace

TEST(ConditionalSystem, TwoByTwoHandSolve) {
  const auto m = identity_model(Vec::Ones(1), 1.0, SparseSymMatrix::identity(1), false);
  const Vec th = Vec::Ones(2);
  const auto sys = conditional_system(m, th);
  EXPECT_EQ(sys.Q.to_dense(), (Mat(2, 2) << 2, -1, -1, 2).finished());
  const auto mom = conditional_moments(m, th);
  EXPECT_NEAR(mom.mean[0], 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(mom.mean[1], 1.0 / 3.0, 1e-14);
}

TEST(ConditionalSystem, NoDataLimitReturnsPriorMean) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = testutil::random_pseudo_model(rng);
    std::vector<Triplet> t;
    for (Index i = 0; i < m.dim_eta(); ++i) t.emplace_back(i, i, 1e-12);
    m.stacked.q_etay = SparseSymMatrix::from_triplets(m.dim_eta(), t);
    const Vec th = testutil::random_theta(m, rng);
    const auto mom = conditional_moments(m, th);
    Vec prior(m.dim_x());
    prior.head(m.dim_eta()) = m.Z * m.mu_nu;
    prior.tail(m.dim_nu()) = m.mu_nu;
    EXPECT_LE((mom.mean - prior).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ConditionalSystem, MatchesDenseOracleOnRandomInstances) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto m = testutil::random_pseudo_model(rng);
    const Vec th = testutil::random_theta(m, rng);
    const auto got = conditional_moments(m, th);
    const auto want = testutil::dense_oracle(m, th);
    const double scale = std::max(1.0, want.cov.cwiseAbs().maxCoeff());
    EXPECT_LE((got.mean - want.mean).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, want.mean.cwiseAbs().maxCoeff()))
        << rep;
    EXPECT_LE((got.cov - want.cov).cwiseAbs().maxCoeff(), 1e-8 * scale) << rep;
  }
}

TEST(ThetaLogMarginal, MatchesDenseMarginalOverThetaGrid) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto m = testutil::random_pseudo_model(rng);
    if (rep % 2 == 0) m.prepare();
    const Vec base = testutil::random_theta(m, rng);
    double offset = 0.0;
    for (int g = 0; g < 20; ++g) {
      const Vec th = (base.array() * std::exp(-1.0 + 0.1 * g)).matrix();
      const double diff = theta_log_marginal(m, th) - testutil::dense_oracle(m, th).log_marginal;
      if (g == 0) offset = diff;
      EXPECT_NEAR(diff, offset, 1e-8) << rep << " " << g;
    }
    // Proper priors and full normalizing constants: the offset itself is zero.
    EXPECT_NEAR(offset, 0.0, 1e-8);
  }
}

TEST(ThetaLogMarginal, IndependentOfEvaluationPoint) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = testutil::random_pseudo_model(rng);
    const Vec th = testutil::random_theta(m, rng);
    const double at0 = theta_log_marginal(m, th);
    for (int k = 0; k < 5; ++k) {
      Vec v(m.dim_system());
      for (Index i = 0; i < v.size(); ++i) v[i] = 2.0 * n01(rng);
      EXPECT_NEAR(theta_log_marginal_at(m, th, v), at0, 1e-8);
    }
  }
}

TEST(ThetaLogMarginal, ScalarConjugateClosedForm) {
  const double eta_hat = 1.3;
  const auto m = identity_model(Vec::Constant(1, eta_hat), 1.0, SparseSymMatrix::identity(1), true);
  double offset = 0.0;
  for (int g = 0; g < 25; ++g) {
    const double th = std::exp(-3.0 + 0.25 * g);
    const double var = 1.0 / th + 1.0;
    const double want = -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * eta_hat * eta_hat / var;
    const double diff = theta_log_marginal(m, Vec::Constant(1, th)) - want;
    if (g == 0) offset = diff;
    EXPECT_NEAR(diff, offset, 1e-12);
  }
}

TEST(ThetaLogMarginal, NuFormAgreesWithXForm) {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int rep = 0; rep < 30; ++rep) {
    testutil::RandomModelOptions opt;
    opt.diagonal_qy = rep % 2 == 0;
    opt.force_eps_zero = rep % 2 == 1;
    auto m = testutil::random_pseudo_model(rng, opt);
    if (rep % 3 == 0) m.prepare();
    const Vec base = testutil::random_theta(m, rng);
    double offset = 0.0;
    for (int g = 0; g < 10; ++g) {
      const Vec th = (base.array() * std::exp(-0.5 + 0.1 * g)).matrix();
      const double diff = theta_log_marginal(m, th) - theta_log_marginal_nu_form(m, th);
      if (g == 0) offset = diff;
      EXPECT_NEAR(diff, offset, 1e-8);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 300);
}

TEST(ThetaLogMarginal, NuFormRejectsCoupledLikelihood) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    testutil::RandomModelOptions opt;
    opt.allow_eps_zero = false;
    const auto m = testutil::random_pseudo_model(rng, opt);
    if (m.stacked.M < 2) continue;
    EXPECT_THROW(theta_log_marginal_nu_form(m, Vec::Ones(m.dim_theta())), InvalidArgument);
    return;
  }
  FAIL() << "no M = 2 instance drawn";
}

TEST(KappaTarget, FailedFactorizationIsNegativeInfinity) {
  // A singular structure without eigenvalues cannot be factorized.
  auto m = identity_model(Vec::Ones(3), 1.0, rw_structure(3), true);
  EXPECT_THROW(theta_log_marginal(m, Vec::Ones(1)), NotPositiveDefinite);
  EXPECT_EQ(kappa_log_target(m, Vec::Zero(1)), -std::numeric_limits<double>::infinity());
}

TEST(KappaTarget, IntrinsicBlockWithEigenvalues) {
  // RW1 prior with eigenvalues: rank-deficient Q_ν is fine once data enter.
  auto m = identity_model((Vec(4) << 0.1, 0.5, 0.2, 0.9).finished(), 2.0, rw_structure(4), true);
  m.nu_blocks[0].eigenvalues = rw_eigenvalues(4, Boundary::Free);
  EXPECT_EQ(m.q_nu_rank(), 3);
  const double a = theta_log_marginal(m, Vec::Constant(1, 0.7));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  Vec v(4);
  for (Index i = 0; i < 4; ++i) v[i] = n01(rng);
  EXPECT_NEAR(theta_log_marginal_at(m, Vec::Constant(1, 0.7), v), a, 1e-10);
}

TEST(GridSample, UniformWeightsGiveUniformFrequencies) {
  const std::vector<Vec> axes{Vec::LinSpaced(5, 0, 4), Vec::LinSpaced(4, 0, 3)};
  Rng rng(8);
  const Index S = 10000;
  const auto d = grid_sample([](const Vec&) { return 0.0; }, {{0, 1}}, axes, Vec::Zero(2), S, rng);
  std::vector<int> counts(20, 0);
  for (Index s = 0; s < S; ++s) ++counts[static_cast<std::size_t>(d.theta(s, 0) * 4 + d.theta(s, 1))];
  const double p = 1.0 / 20.0;
  for (int c : counts) EXPECT_NEAR(c, S * p, 4 * std::sqrt(S * p * (1 - p)));
  EXPECT_EQ(d.method, "grid");
}

TEST(GridSample, GaussianLogWeights) {
  const std::vector<Vec> axes{Vec::LinSpaced(2001, -8, 12)};
  Rng rng(9);
  const Index S = 20000;
  const double mu = 2.0, sd = 1.5;
  const auto d = grid_sample([&](const Vec& v) { return -0.5 * std::pow((v[0] - mu) / sd, 2); }, {{0}}, axes,
                             Vec::Zero(1), S, rng);
  const Vec x = d.theta.col(0);
  const double m = x.mean();
  const double s = std::sqrt((x.array() - m).square().sum() / (S - 1));
  EXPECT_NEAR(m, mu, 3 * sd / std::sqrt(S));
  EXPECT_NEAR(s, sd, 3 * sd / std::sqrt(2.0 * S));
}

TEST(GridSample, CapAndAllNegativeInfinity) {
  const std::vector<Vec> axes{Vec::LinSpaced(100, 0, 1), Vec::LinSpaced(100, 0, 1)};
  Rng rng(10);
  EXPECT_THROW(grid_sample([](const Vec&) { return 0.0; }, {{0, 1}}, axes, Vec::Zero(2), 10, rng, 5000),
               InvalidArgument);
  EXPECT_THROW(grid_sample([](const Vec&) { return -std::numeric_limits<double>::infinity(); }, {{0, 1}}, axes,
                           Vec::Zero(2), 10, rng),
               Error);
}

TEST(GridSample, DeterministicUnderSeed) {
  std::mt19937_64 gen(11);
  const auto m = testutil::random_pseudo_model(gen);
  Rng a(5), b(5);
  GridSettings gs;
  gs.points = 9;
  const auto da = grid_sample_theta(m, 200, a, gs);
  const auto db = grid_sample_theta(m, 200, b, gs);
  EXPECT_EQ(da.theta, db.theta);
  EXPECT_EQ(da.theta.rows(), 200);
  EXPECT_TRUE((da.theta.array() > 0).all());
}

TEST(Metropolis, StandardGaussianTarget) {
  Rng rng(12);
  const Index S = 20000;
  const Index d = 2;
  const Mat cov = (2.382 * 2.382 / d) * Mat::Identity(d, d);
  const auto r = metropolis([](const Vec& v) { return -0.5 * v.squaredNorm(); }, Vec::Zero(d), cov, S, S / 5, rng);
  EXPECT_GE(r.acceptance_rate, 0.15);
  EXPECT_LE(r.acceptance_rate, 0.45);
  for (Index j = 0; j < d; ++j) {
    const Vec x = r.theta.col(j);
    const std::span<const double> sp(x.data(), x.size());
    EXPECT_NEAR(mean(sp), 0.0, 3 * batch_means_se(sp));
    std::vector<double> sq(x.size());
    for (Index i = 0; i < x.size(); ++i) sq[i] = x[i] * x[i];
    EXPECT_NEAR(mean(sq), 1.0, 3 * batch_means_se(sq));
  }
  EXPECT_EQ(r.lag1_autocorrelation.size(), d);
}

TEST(Metropolis, DeterministicAndNonFiniteStart) {
  const auto f = [](const Vec& v) { return -0.5 * v.squaredNorm(); };
  Rng a(13), b(13);
  const auto ra = metropolis(f, Vec::Zero(1), Mat::Identity(1, 1), 500, 100, a);
  const auto rb = metropolis(f, Vec::Zero(1), Mat::Identity(1, 1), 500, 100, b);
  EXPECT_EQ(ra.theta, rb.theta);
  Rng c(1);
  EXPECT_THROW(metropolis([](const Vec&) { return std::nan(""); }, Vec::Zero(1), Mat::Identity(1, 1), 10, 0, c),
               NonFiniteObjective);
}

TEST(Metropolis, PseudoModelDrawsArePositive) {
  std::mt19937_64 gen(14);
  const auto m = testutil::random_pseudo_model(gen);
  Rng rng(3);
  const auto d = metropolis_sample_theta(m, 1000, -1, rng);
  EXPECT_EQ(d.theta.rows(), 1000);
  EXPECT_TRUE((d.theta.array() > 0).all());
  EXPECT_GT(d.acceptance_rate, 0.05);
  EXPECT_EQ(d.method, "metropolis");
}

TEST(FindMode, QuadraticWithCoupling) {
  const Mat a = (Mat(2, 2) << 2, 0.5, 0.5, 1).finished();
  const Vec c = (Vec(2) << 1, -2).finished();
  const auto f = [&](const Vec& v) { return -0.5 * (v - c).dot(a * (v - c)); };
  const auto r = find_mode(f, Vec::Zero(2), {{0, 1}});
  EXPECT_LE((r.mode - c).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((r.neg_hessian - a).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SampleLatent, MatchesDenseOracleMoments) {
  std::mt19937_64 gen(15);
  testutil::RandomModelOptions opt;
  opt.max_groups = 2;
  opt.max_m = 1;
  opt.allow_eps_zero = false;
  PseudoModel m;
  do {
    m = testutil::random_pseudo_model(gen, opt);
  } while (m.dim_x() != 4);
  const Vec th = testutil::random_theta(m, gen);
  const auto want = testutil::dense_oracle(m, th);
  ThetaDraws td;
  const Index S = 100000;
  td.theta = th.transpose().replicate(S, 1);
  Rng rng(16);
  const auto d = sample_latent(m, td, rng);
  const Vec mean = d.x.colwise().mean();
  const Mat c = testutil::sample_cov(d.x);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(mean[i], want.mean[i], 5 * std::sqrt(want.cov(i, i) / S));
    for (Index j = 0; j < 4; ++j) {
      const double se = std::sqrt((want.cov(i, j) * want.cov(i, j) + want.cov(i, i) * want.cov(j, j)) / S);
      EXPECT_NEAR(c(i, j), want.cov(i, j), 5 * se);
    }
  }
}

TEST(SampleLatent, DataDominantLimit) {
  const Vec eta_hat = (Vec(3) << 0.3, -1.2, 2.0).finished();
  auto m = identity_model(eta_hat, 1e8, SparseSymMatrix::identity(3), false);
  ThetaDraws td;
  td.theta = Mat::Ones(50, 2);
  Rng rng(17);
  const auto d = sample_latent(m, td, rng);
  for (Index s = 0; s < 50; ++s) {
    EXPECT_LT((d.x.row(s).head(3).transpose() - eta_hat).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(SampleLatent, DeterministicAcrossCacheEvictions) {
  std::mt19937_64 gen(18);
  const auto m = testutil::random_pseudo_model(gen);
  ThetaDraws td;
  const Index S = 300;
  td.theta.resize(S, m.dim_theta());
  // 100 distinct θ values revisited: forces LRU evictions.
  for (Index s = 0; s < S; ++s) td.theta.row(s) = Vec::Constant(m.dim_theta(), 0.5 + 0.01 * (s % 100)).transpose();
  Rng a(19), b(19);
  const auto da = sample_latent(m, td, a);
  const auto db = sample_latent(m, td, b);
  EXPECT_EQ(da.x, db.x);
  // Each draw equals an uncached draw with the same normal deviates.
  Rng c(19);
  for (Index s = 0; s < 3; ++s) {
    ThetaDraws one;
    one.theta = td.theta.row(s);
    const auto x = sample_latent(m, one, c);
    EXPECT_LE((x.x.row(0) - da.x.row(s)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ConditionalMoments, EtaScalarHandArithmetic) {
  const auto m = identity_model(Vec::Constant(1, 2.0), 1.0, SparseSymMatrix::identity(1), false);
  const auto mom = eta_conditional_moments(m, Vec::Ones(2));
  // Cov(η) = 2, Var(η̂ | η) = 1: mean 2·2/3, precision 1/2 + 1.
  EXPECT_NEAR(mom.mean[0], 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(mom.precision(0, 0), 1.5, 1e-14);
}

TEST(ConditionalMoments, ShrinkageLimit) {
  std::mt19937_64 gen(20);
  testutil::RandomModelOptions opt;
  opt.allow_eps_zero = false;
  auto m = testutil::random_pseudo_model(gen, opt);
  m.mu_nu.setZero();
  m.stacked.q_etay = m.stacked.q_etay.scaled(1e8);
  const auto mom = eta_conditional_moments(m, Vec::Ones(m.dim_theta()));
  EXPECT_LT((mom.mean - m.stacked.eta_hat).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ConditionalMoments, ClosedFormsMatchDenseOracle) {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 30; ++rep) {
    const auto m = testutil::random_pseudo_model(gen);
    const Vec th = testutil::random_theta(m, gen);
    const auto o = testutil::dense_oracle(m, th);
    const Index n = m.dim_eta(), k = m.dim_nu();
    const auto nu = nu_conditional_moments(m, th);
    EXPECT_LE((nu.mean - o.mean.tail(k)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((nu.precision.inverse() - o.cov.bottomRightCorner(k, k)).cwiseAbs().maxCoeff(), 1e-8);
    // With ε = 0 and fewer ν than η coordinates Cov(η) is singular.
    if (!m.eps_zero) {
      const auto eta = eta_conditional_moments(m, th);
      EXPECT_LE((eta.mean - o.mean.head(n)).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((eta.precision.inverse() - o.cov.topLeftCorner(n, n)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Fit, DrawCountAndDeterminism) {
  std::mt19937_64 gen(22);
  const auto m = testutil::random_pseudo_model(gen);
  for (auto sampler : {Sampler::Grid, Sampler::Metropolis}) {
    Rng a(1), b(1);
    const auto ra = fit(m, sampler, 123, a);
    const auto rb = fit(m, sampler, 123, b);
    EXPECT_EQ(ra.theta.theta.rows(), 123);
    EXPECT_EQ(ra.latent.x.rows(), 123);
    EXPECT_EQ(ra.latent.x, rb.latent.x);
  }
  EXPECT_EQ(parse_sampler("grid"), Sampler::Grid);
  EXPECT_THROW(parse_sampler("gibbs"), InvalidArgument);
}
