#include "maxsmooth/exact_ref.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "maxsmooth/error.hpp"
#include "maxsmooth/gmrf.hpp"
#include "maxsmooth/models.hpp"
#include "maxsmooth/priors.hpp"
#include "maxsmooth/stats.hpp"

namespace maxsmooth {

DensePseudoOracle dense_pseudo_oracle(const PseudoModel& m, const Vec& theta) {
  const Index n = m.dim_eta();
  const Index k = m.dim_nu();
  if (n + k > 200) throw InvalidArgument("dense_pseudo_oracle: dim x exceeds 200");
  if (theta.size() != m.dim_theta()) throw DimensionMismatch("dense_pseudo_oracle: wrong θ length");
  auto spd_inverse = [](const Mat& a, const char* what) {
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string("dense_pseudo_oracle: ") + what + " is singular");
    return Mat(llt.solve(Mat::Identity(a.rows(), a.cols())));
  };
  if (m.q_nu_rank() < k) throw NotPositiveDefinite("dense_pseudo_oracle: Q_ν is intrinsic (rank deficient)");
  const Mat z = Mat(m.Z);
  const Mat snu = spd_inverse(m.q_nu(theta).to_dense(), "Q_ν");
  Mat seta = z * snu * z.transpose();
  if (!m.eps_zero) seta.diagonal() += m.q_eps_diagonal(theta).cwiseInverse();
  const Mat sy = spd_inverse(m.stacked.q_etay.to_dense(), "Q_ηy");

  // Joint covariance of x = (η, ν) and its cross-covariance with η̂.
  Mat cxx(n + k, n + k);
  cxx.topLeftCorner(n, n) = seta;
  cxx.topRightCorner(n, k) = z * snu;
  cxx.bottomLeftCorner(k, n) = snu * z.transpose();
  cxx.bottomRightCorner(k, k) = snu;
  const Mat cxh = cxx.leftCols(n);
  const Mat chh = seta + sy;

  Vec mx(n + k);
  mx.head(n) = z * m.mu_nu;
  mx.tail(k) = m.mu_nu;
  const Vec r = m.stacked.eta_hat - mx.head(n);
  const Eigen::LLT<Mat> llt(chh);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("dense_pseudo_oracle: Cov(η̂) is singular");

  DensePseudoOracle o;
  o.mean = mx + cxh * llt.solve(r);
  o.cov = cxx - cxh * llt.solve(cxh.transpose());
  o.cov_eta_hat = chh;
  const Mat L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  o.log_marginal = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet -
                   0.5 * r.dot(llt.solve(r));
  for (Index j = 0; j < m.dim_theta(); ++j) {
    o.log_marginal += theta_prior_logdensity(m.theta[static_cast<std::size_t>(j)], theta[j]);
  }
  return o;
}

// ---------------------------------------------------------------------------

namespace {

// Log-density of every observation of one site, summed.
double site_loglik(const double* y, Index T, double x) {
  const double sd = std::exp(0.5 * x);
  double s = 0.0;
  for (Index t = 0; t < T; ++t) s += normal_logdensity(y[t], 0.0, sd);
  return s;
}

}  // namespace

double draw_tau_conditional(const Vec& x, const SparseSymMatrix& q, double shape, double rate, Rng& rng) {
  if (x.size() != q.dim()) throw DimensionMismatch("draw_tau_conditional: x and Q differ in size");
  const double a = shape + 0.5 * static_cast<double>(x.size());
  const double b = rate + 0.5 * q.quad_form(x);
  return std::gamma_distribution<double>(a, 1.0 / b)(rng);
}

ExactResult exact_mcmc_logvar(const Mat& y, Index n1, Index n2, const ExactOptions& opt, Rng& rng) {
  const Index N = n1 * n2;
  const Index T = y.cols();
  if (n1 < 1 || n2 < 1 || y.rows() != N) throw DimensionMismatch("exact_mcmc_logvar: y must have n1*n2 rows");
  if (T < 1) throw InvalidArgument("exact_mcmc_logvar: need T >= 1");
  if (!y.allFinite()) throw InvalidArgument("exact_mcmc_logvar: non-finite data");
  if (opt.samples < 1) throw InvalidArgument("exact_mcmc_logvar: samples must be >= 1");
  if (!(opt.tau_shape > 0.0) || !(opt.tau_rate > 0.0)) throw InvalidArgument("exact_mcmc_logvar: bad prior");

  const SparseSymMatrix qs = lattice_structure(n1, n2, Boundary::Zero);
  const SpMat& q = qs.matrix();
  // Row-major copy so each site's observations are contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> yr = y;

  Vec x(N);
  for (Index i = 0; i < N; ++i) {
    const double ms = yr.row(i).squaredNorm() / static_cast<double>(T);
    x[i] = std::log(std::max(ms, 1e-300));
  }
  double tau = opt.tau_shape / opt.tau_rate;
  Vec ll(N);
  for (Index i = 0; i < N; ++i) ll[i] = site_loglik(yr.row(i).data(), T, x[i]);
  Vec step(N);
  for (Index i = 0; i < N; ++i) {
    step[i] = 2.4 / std::sqrt(0.5 * static_cast<double>(T) + tau * q.coeff(i, i));
  }

  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Index> accepted(static_cast<std::size_t>(N), 0);

  auto sweep = [&]() {
    for (Index i = 0; i < N; ++i) {
      double nb = 0.0;  // Σ_{j≠i} Q_ij x_j
      double qii = 0.0;
      for (SpMat::InnerIterator it(q, i); it; ++it) {
        if (it.row() == i) {
          qii = it.value();
        } else {
          nb += it.value() * x[it.row()];
        }
      }
      const double xo = x[i];
      const double xn = xo + step[i] * z(rng);
      const double lln = site_loglik(yr.row(i).data(), T, xn);
      const double lp = -0.5 * tau * (qii * (xn * xn - xo * xo) + 2.0 * (xn - xo) * nb);
      const double logr = lln - ll[i] + lp;
      if (logr >= 0.0 || std::log(u(rng)) < logr) {
        x[i] = xn;
        ll[i] = lln;
        ++accepted[static_cast<std::size_t>(i)];
      }
    }
    tau = draw_tau_conditional(x, qs, opt.tau_shape, opt.tau_rate, rng);
  };

  // Pilot: per-site scale adjustments toward 30-50% acceptance.
  constexpr Index kBatch = 50;
  for (Index b = 0; b < opt.pilot_batches; ++b) {
    std::fill(accepted.begin(), accepted.end(), 0);
    for (Index s = 0; s < kBatch; ++s) sweep();
    for (Index i = 0; i < N; ++i) {
      const double rate = static_cast<double>(accepted[static_cast<std::size_t>(i)]) / kBatch;
      if (rate < 0.3) step[i] *= 0.75;
      if (rate > 0.5) step[i] *= 1.3;
    }
  }
  const Index burnin = opt.burnin < 0 ? opt.samples / 5 : opt.burnin;
  for (Index s = 0; s < burnin; ++s) sweep();

  ExactResult r;
  r.tau.method = "exact";
  r.tau.theta.resize(opt.samples, 1);
  r.tau.log_density = Vec::Zero(opt.samples);
  r.x.names = {{"x", 0, N}};
  if (opt.store_draws) r.x.x.resize(opt.samples, N);
  Vec mean = Vec::Zero(N);
  Vec m2 = Vec::Zero(N);
  std::fill(accepted.begin(), accepted.end(), 0);
  for (Index s = 0; s < opt.samples; ++s) {
    sweep();
    r.tau.theta(s, 0) = tau;
    if (opt.store_draws) r.x.x.row(s) = x.transpose();
    const Vec d = x - mean;
    mean += d / static_cast<double>(s + 1);
    m2 += d.cwiseProduct(x - mean);
  }
  Index total = 0;
  for (Index a : accepted) total += a;
  r.acceptance = static_cast<double>(total) / static_cast<double>(N * opt.samples);
  r.tau.acceptance_rate = r.acceptance;
  std::vector<double> tv(r.tau.theta.data(), r.tau.theta.data() + opt.samples);
  r.tau.lag1_autocorrelation = Vec::Constant(1, opt.samples > 2 ? lag1_autocorrelation(tv) : 0.0);
  r.x_mean = mean;
  r.x_sd = opt.samples > 1 ? Vec((m2 / static_cast<double>(opt.samples - 1)).cwiseSqrt()) : Vec::Zero(N);
  r.proposal_sd = step;
  return r;
}

// ---------------------------------------------------------------------------

BenchConfig quick_bench_config() {
  BenchConfig c;
  c.sides = {10, 20};
  c.reps = {10, 100};
  c.samples = 5000;
  c.repeats = 3;
  return c;
}

std::vector<BenchRow> timing_benchmark(const BenchConfig& config, const BenchProgress& progress) {
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  if (config.samples < 1 || config.repeats < 1) throw InvalidArgument("timing_benchmark: samples and repeats must be >= 1");
  const double per10k = 1e4 / static_cast<double>(config.samples);
  std::vector<BenchRow> rows;
  std::uint64_t cell = 0;
  for (Index side : config.sides) {
    for (Index T : config.reps) {
      ModelSpec spec;
      spec.family = Family::LogvarLattice;
      spec.n1 = spec.n2 = side;
      spec.replicates = T;
      Rng sim_rng = make_rng(config.seed, streams::kSimulate + 100 * cell++);
      const Simulation sim = simulate(spec, sim_rng);

      BenchRow exact{side * side, T, "exact", std::numeric_limits<double>::infinity(), 0.0};
      BenchRow ms{side * side, T, "max-and-smooth", std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()};
      for (int rep = 0; rep < config.repeats; ++rep) {
        ExactOptions eo;
        eo.samples = config.samples;
        eo.store_draws = false;
        Rng er = make_rng(config.seed, streams::kExact);
        auto t0 = Clock::now();
        exact_mcmc_logvar(sim.obs.y, side, side, eo, er);
        exact.seconds_per_10k = std::min(exact.seconds_per_10k, seconds(t0, Clock::now()) * per10k);

        Rng tr = make_rng(config.seed, streams::kTheta);
        Rng lr = make_rng(config.seed, streams::kLatent);
        t0 = Clock::now();
        const PseudoModel m = build_pseudo(spec, sim.obs);
        const auto t1 = Clock::now();
        const ThetaDraws th = grid_sample_theta(m, config.samples, tr);
        Vec acc = Vec::Zero(m.dim_x());
        sample_latent(m, th, lr, [&](Index, const Vec& x) { acc += x; });
        const auto t2 = Clock::now();
        ms.max_step_seconds = std::min(ms.max_step_seconds, seconds(t0, t1));
        ms.seconds_per_10k = std::min(ms.seconds_per_10k, seconds(t0, t2) * per10k);
      }
      for (const BenchRow& r : {exact, ms}) {
        rows.push_back(r);
        if (progress) progress(r);
      }
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "n_lattice,t_reps,method,seconds_per_10k,max_step_seconds\n";
  out.precision(6);
  for (const auto& r : rows) {
    out << r.n_lattice << ',' << r.t_reps << ',' << r.method << ',' << r.seconds_per_10k << ','
        << r.max_step_seconds << '\n';
  }
}

}  // namespace maxsmooth
