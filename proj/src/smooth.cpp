#include "maxsmooth/smooth.hpp"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <list>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "maxsmooth/error.hpp"
#include "maxsmooth/parallel.hpp"
#include "maxsmooth/priors.hpp"
#include "maxsmooth/stats.hpp"

namespace maxsmooth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

struct PseudoModel::Cache {
  std::shared_ptr<const CholeskyPattern> pattern;
  double q_etay_logdet = 0.0;
};

Index NuBlock::rank() const {
  if (eigenvalues.size() == 0 || ridge > 0.0) return dim();
  const double tol = 1e-9 * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  return (eigenvalues.array() > tol).count();
}

double NuBlock::logdet(double theta) const {
  const double mult = scale_multiplier(scale, theta);
  if (eigenvalues.size() == 0) {
    SparseSymMatrix q = structure.scaled(mult);
    if (ridge > 0.0) q = q + SparseSymMatrix::identity(dim(), ridge);
    return chol(q).logdet();
  }
  const double tol = 1e-9 * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  double s = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    if (ridge > 0.0 || eigenvalues[i] > tol) s += std::log(mult * eigenvalues[i] + ridge);
  }
  return s;
}

double theta_prior_logdensity(const ThetaParam& p, double theta) {
  if (!(theta > 0.0)) throw InvalidArgument("hyperparameter " + p.name + " must be > 0");
  switch (p.prior) {
    case PriorKind::Flat:
      return 0.0;
    case PriorKind::Gamma:
      return gamma_logdensity(theta, p.a, p.b);
    case PriorKind::Exponential:
      return std::log(p.a) - p.a * theta;
    case PriorKind::PcPrecision:
      return pc_logdensity(theta);
  }
  return 0.0;
}

std::vector<std::vector<Index>> PseudoModel::blocks() const {
  if (!theta_blocks.empty()) return theta_blocks;
  std::vector<Index> all(static_cast<std::size_t>(dim_theta()));
  std::iota(all.begin(), all.end(), Index{0});
  return {all};
}

Vec PseudoModel::initial_theta() const {
  return theta_init.size() == dim_theta() ? theta_init : Vec::Ones(dim_theta());
}

void PseudoModel::validate() const {
  if (stacked.q_etay.dim() != dim_eta()) throw DimensionMismatch("pseudo model: dim Q_ηy != dim η̂");
  if (Z.rows() != dim_eta() || Z.cols() != dim_nu()) {
    throw DimensionMismatch("pseudo model: Z must be dim η x dim ν");
  }
  Index total = 0;
  for (const auto& b : nu_blocks) {
    total += b.dim();
    if (b.theta_index < 0 || b.theta_index >= dim_theta()) {
      throw InvalidArgument("pseudo model: ν block refers to an unknown hyperparameter");
    }
    if (b.eigenvalues.size() != 0 && b.eigenvalues.size() != b.dim()) {
      throw DimensionMismatch("pseudo model: ν block eigenvalue count != block dim");
    }
  }
  if (total != dim_nu()) throw DimensionMismatch("pseudo model: ν blocks do not cover ν");
  if (!eps_zero) {
    Index e = 0;
    for (const auto& b : eps_blocks) {
      e += b.size;
      if (b.theta_index < 0 || b.theta_index >= dim_theta()) {
        throw InvalidArgument("pseudo model: ε block refers to an unknown hyperparameter");
      }
    }
    if (e != dim_eta()) throw DimensionMismatch("pseudo model: ε blocks do not cover η");
  }
  std::vector<int> seen(static_cast<std::size_t>(dim_theta()), 0);
  for (const auto& blk : blocks()) {
    for (Index j : blk) {
      if (j < 0 || j >= dim_theta()) throw InvalidArgument("pseudo model: bad θ block index");
      ++seen[static_cast<std::size_t>(j)];
    }
  }
  for (int s : seen) {
    if (s != 1) throw InvalidArgument("pseudo model: θ blocks must partition the hyperparameters");
  }
}

SparseSymMatrix PseudoModel::q_nu(const Vec& th) const {
  std::vector<SparseSymMatrix> parts;
  parts.reserve(nu_blocks.size());
  for (const auto& b : nu_blocks) {
    SparseSymMatrix q = b.structure.scaled(scale_multiplier(b.scale, th[b.theta_index]));
    if (b.ridge > 0.0) q = q + SparseSymMatrix::identity(b.dim(), b.ridge);
    parts.push_back(std::move(q));
  }
  return parts.size() == 1 ? parts.front() : bdiag(parts);
}

Vec PseudoModel::q_eps_diagonal(const Vec& th) const {
  Vec d(dim_eta());
  Index off = 0;
  for (const auto& b : eps_blocks) {
    d.segment(off, b.size).setConstant(scale_multiplier(b.scale, th[b.theta_index]));
    off += b.size;
  }
  return d;
}

double PseudoModel::q_nu_logdet(const Vec& th) const {
  double s = 0.0;
  for (const auto& b : nu_blocks) s += b.logdet(th[b.theta_index]);
  return s;
}

Index PseudoModel::q_nu_rank() const {
  Index r = 0;
  for (const auto& b : nu_blocks) r += b.rank();
  return r;
}

double PseudoModel::q_etay_logdet() const {
  if (cache) return cache->q_etay_logdet;
  return chol(stacked.q_etay).logdet();
}

CholFactor PseudoModel::factorize(const SparseSymMatrix& q) const {
  if (cache && cache->pattern) return cache->pattern->factorize(q);
  return chol(q);
}

void PseudoModel::prepare() {
  validate();
  auto c = std::make_shared<Cache>();
  c->q_etay_logdet = chol(stacked.q_etay).logdet();
  cache.reset();
  c->pattern = std::make_shared<CholeskyPattern>(conditional_system(*this, initial_theta()).Q);
  cache = std::move(c);
}

ConditionalSystem conditional_system(const PseudoModel& m, const Vec& theta) {
  if (theta.size() != m.dim_theta()) throw DimensionMismatch("conditional_system: bad θ length");
  const SparseSymMatrix qnu = m.q_nu(theta);
  const SparseSymMatrix& qy = m.stacked.q_etay;
  const Vec& eta_hat = m.stacked.eta_hat;
  ConditionalSystem sys;
  if (m.eps_zero) {
    sys.Q = qnu + congruence(m.Z, qy);
    sys.b = qnu * m.mu_nu + m.Z.transpose() * (qy * eta_hat);
    return sys;
  }
  const Index n = m.dim_eta();
  const Index k = m.dim_nu();
  const Vec d = m.q_eps_diagonal(theta);
  const SparseSymMatrix lower = qnu + congruence(m.Z, SparseSymMatrix::diagonal(d));
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(qy.nonzeros() + n + 2 * m.Z.nonZeros() + lower.nonzeros()));
  for (Index c = 0; c < qy.matrix().outerSize(); ++c) {
    for (SpMat::InnerIterator it(qy.matrix(), c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  }
  for (Index i = 0; i < n; ++i) t.emplace_back(i, i, d[i]);
  for (Index c = 0; c < m.Z.outerSize(); ++c) {
    for (SpMat::InnerIterator it(m.Z, c); it; ++it) {
      const double v = -d[it.row()] * it.value();
      t.emplace_back(it.row(), n + it.col(), v);
      t.emplace_back(n + it.col(), it.row(), v);
    }
  }
  for (Index c = 0; c < lower.matrix().outerSize(); ++c) {
    for (SpMat::InnerIterator it(lower.matrix(), c); it; ++it) {
      t.emplace_back(n + it.row(), n + it.col(), it.value());
    }
  }
  SpMat full(n + k, n + k);
  full.setFromTriplets(t.begin(), t.end());
  sys.Q = SparseSymMatrix::from_full(std::move(full));
  sys.b.resize(n + k);
  sys.b.head(n) = qy * eta_hat;
  sys.b.tail(k) = qnu * m.mu_nu;
  return sys;
}

Vec system_to_latent(const PseudoModel& m, const Vec& v) {
  if (!m.eps_zero) return v;
  Vec x(m.dim_x());
  x.head(m.dim_eta()) = m.Z * v;
  x.tail(m.dim_nu()) = v;
  return x;
}

namespace {

double theta_prior_total(const PseudoModel& m, const Vec& theta) {
  double lp = 0.0;
  for (Index j = 0; j < m.dim_theta(); ++j) {
    lp += theta_prior_logdensity(m.theta[static_cast<std::size_t>(j)], theta[j]);
  }
  return lp;
}

// log N(ν | μ_ν, Q_ν⁻¹) with the pseudo-determinant for intrinsic blocks.
double nu_prior_logdensity(const PseudoModel& m, const SparseSymMatrix& qnu, const Vec& theta,
                           const Vec& nu) {
  const Vec r = nu - m.mu_nu;
  return -0.5 * static_cast<double>(m.q_nu_rank()) * kLog2Pi + 0.5 * m.q_nu_logdet(theta) -
         0.5 * qnu.quad_form(r);
}

double conditional_logdensity(const CholFactor& f, const SparseSymMatrix& q, const Vec& b,
                              const Vec& v) {
  const Vec diff = v - f.solve(b);
  return -0.5 * static_cast<double>(q.dim()) * kLog2Pi + 0.5 * f.logdet() - 0.5 * q.quad_form(diff);
}

}  // namespace

double theta_log_marginal_at(const PseudoModel& m, const Vec& theta, const Vec& v) {
  if (v.size() != m.dim_system()) throw DimensionMismatch("theta_log_marginal_at: bad x length");
  const SparseSymMatrix qnu = m.q_nu(theta);
  const SparseSymMatrix& qy = m.stacked.q_etay;
  const Index n = m.dim_eta();
  double value = theta_prior_total(m, theta);

  Vec eta;
  Vec nu;
  if (m.eps_zero) {
    nu = v;
    eta = m.Z * nu;
  } else {
    eta = v.head(n);
    nu = v.tail(m.dim_nu());
  }
  const Vec r = m.stacked.eta_hat - eta;
  value += -0.5 * static_cast<double>(n) * kLog2Pi + 0.5 * m.q_etay_logdet() - 0.5 * qy.quad_form(r);
  value += nu_prior_logdensity(m, qnu, theta, nu);
  if (!m.eps_zero) {
    const Vec d = m.q_eps_diagonal(theta);
    const Vec e = eta - m.Z * nu;
    value += -0.5 * static_cast<double>(n) * kLog2Pi + 0.5 * d.array().log().sum() -
             0.5 * (d.array() * e.array().square()).sum();
  }
  const ConditionalSystem sys = conditional_system(m, theta);
  const CholFactor f = m.factorize(sys.Q);
  value -= conditional_logdensity(f, sys.Q, sys.b, v);
  return value;
}

double theta_log_marginal(const PseudoModel& m, const Vec& theta) {
  return theta_log_marginal_at(m, theta, Vec::Zero(m.dim_system()));
}

double theta_log_marginal_nu_form(const PseudoModel& m, const Vec& theta) {
  const SparseSymMatrix& qy = m.stacked.q_etay;
  const Index n = m.dim_eta();
  SparseSymMatrix w;
  double w_logdet = 0.0;
  if (m.eps_zero) {
    w = qy;
    w_logdet = m.q_etay_logdet();
  } else {
    if (qy.nonzeros() != n) {
      throw InvalidArgument("ν-form marginal needs ε = 0 or a diagonal Q_ηy");
    }
    const Vec d = m.q_eps_diagonal(theta);
    const Vec q = qy.matrix().diagonal();
    const Vec wd = (d.array().inverse() + q.array().inverse()).inverse();
    w = SparseSymMatrix::diagonal(wd);
    w_logdet = wd.array().log().sum();
  }
  const SparseSymMatrix qnu = m.q_nu(theta);
  const SparseSymMatrix q = qnu + congruence(m.Z, w);
  const Vec b = qnu * m.mu_nu + m.Z.transpose() * (w * m.stacked.eta_hat);
  // The cached ordering belongs to the (η, ν) system unless ε = 0.
  const CholFactor f = m.eps_zero ? m.factorize(q) : chol(q);
  const Vec zero = Vec::Zero(m.dim_nu());
  double value = theta_prior_total(m, theta);
  value += -0.5 * static_cast<double>(n) * kLog2Pi + 0.5 * w_logdet -
           0.5 * w.quad_form(m.stacked.eta_hat);
  value += nu_prior_logdensity(m, qnu, theta, zero);
  value -= conditional_logdensity(f, q, b, zero);
  return value;
}

double kappa_log_target(const PseudoModel& m, const Vec& kappa) {
  try {
    const double v = theta_log_marginal(m, kappa.array().exp().matrix()) + kappa.sum();
    return std::isfinite(v) ? v : kNegInf;
  } catch (const Error&) {
    return kNegInf;
  }
}

ModeResult find_mode(const LogTarget& f, const Vec& init, const std::vector<std::vector<Index>>& blocks) {
  Vec x = init;
  double fx = f(x);
  if (!std::isfinite(fx)) throw NonFiniteObjective("find_mode: target not finite at the start");
  for (int cycle = 0; cycle < 500; ++cycle) {
    double max_delta = 0.0;
    for (const auto& blk : blocks) {
      for (Index j : blk) {
        auto g = [&](double t) {
          Vec y = x;
          y[j] = t;
          const double v = f(y);
          return std::isfinite(v) ? -v : 1e300;
        };
        const double c = x[j];
        double lo = c - 0.5;
        double hi = c + 0.5;
        for (int k = 0; k < 60 && g(lo) < -fx; ++k) lo = c - 2.0 * (c - lo);
        for (int k = 0; k < 60 && g(hi) < -fx; ++k) hi = c + 2.0 * (hi - c);
        std::uintmax_t iters = 200;
        const auto r = boost::math::tools::brent_find_minima(g, lo, hi, 26, iters);
        if (-r.second > fx) {
          max_delta = std::max(max_delta, std::abs(r.first - c));
          x[j] = r.first;
          fx = -r.second;
        }
      }
    }
    if (max_delta < 1e-7) break;
  }
  ModeResult out;
  out.mode = x;
  out.neg_hessian = -numeric_hessian(f, x);
  return out;
}

std::vector<Vec> laplace_axes(const ModeResult& mode, const std::vector<std::vector<Index>>& blocks,
                              const GridSettings& settings) {
  if (settings.points < 2) throw InvalidArgument("grid axes need at least 2 points");
  std::vector<Vec> axes(static_cast<std::size_t>(mode.mode.size()));
  for (const auto& blk : blocks) {
    const auto d = static_cast<Index>(blk.size());
    Mat sub(d, d);
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) sub(a, b) = mode.neg_hessian(blk[a], blk[b]);
    }
    Eigen::LLT<Mat> llt(sub);
    Vec sd(d);
    if (llt.info() == Eigen::Success) {
      sd = llt.solve(Mat::Identity(d, d)).diagonal().cwiseSqrt();
    } else {
      for (Index a = 0; a < d; ++a) sd[a] = sub(a, a) > 0.0 ? 1.0 / std::sqrt(sub(a, a)) : 1.0;
    }
    for (Index a = 0; a < d; ++a) {
      const double c = mode.mode[blk[a]];
      const double w = settings.half_width_sd * sd[a];
      axes[static_cast<std::size_t>(blk[a])] = Vec::LinSpaced(settings.points, c - w, c + w);
    }
  }
  return axes;
}

ThetaDraws grid_sample(const LogTarget& f, const std::vector<std::vector<Index>>& blocks,
                       const std::vector<Vec>& axes, const Vec& center, Index S, Rng& rng,
                       std::size_t cap) {
  if (S < 0) throw InvalidArgument("grid_sample: S must be >= 0");
  struct BlockGrid {
    std::vector<Index> dims;
    std::vector<double> logp;
    std::vector<double> cum;
  };
  std::vector<BlockGrid> grids;
  for (const auto& blk : blocks) {
    BlockGrid g;
    g.dims = blk;
    std::size_t cells = 1;
    for (Index j : blk) {
      const auto len = static_cast<std::size_t>(axes.at(static_cast<std::size_t>(j)).size());
      if (len == 0) throw InvalidArgument("grid_sample: empty axis");
      if (cells > cap / len) throw InvalidArgument("grid_sample: grid exceeds the cell cap");
      cells *= len;
    }
    std::vector<double> logw(cells);
    parallel_for(cells, [&](std::size_t c) {
      Vec v = center;
      std::size_t rem = c;
      for (auto it = blk.rbegin(); it != blk.rend(); ++it) {
        const Vec& ax = axes[static_cast<std::size_t>(*it)];
        const auto len = static_cast<std::size_t>(ax.size());
        v[*it] = ax[static_cast<Index>(rem % len)];
        rem /= len;
      }
      const double val = f(v);
      logw[c] = std::isfinite(val) ? val : kNegInf;
    });
    const double lse = log_sum_exp(logw);
    if (!std::isfinite(lse)) throw Error("grid_sample: every grid cell has zero posterior mass");
    g.logp.resize(cells);
    g.cum.resize(cells);
    double acc = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      g.logp[c] = logw[c] - lse;
      acc += std::exp(g.logp[c]);
      g.cum[c] = acc;
    }
    grids.push_back(std::move(g));
  }

  ThetaDraws out;
  out.method = "grid";
  out.theta.resize(S, center.size());
  out.log_density.resize(S);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index s = 0; s < S; ++s) {
    Vec v = center;
    double ld = 0.0;
    for (const auto& g : grids) {
      const double u = unif(rng) * g.cum.back();
      auto it = std::upper_bound(g.cum.begin(), g.cum.end(), u);
      std::size_t c = std::min<std::size_t>(static_cast<std::size_t>(it - g.cum.begin()), g.cum.size() - 1);
      ld += g.logp[c];
      for (auto d = g.dims.rbegin(); d != g.dims.rend(); ++d) {
        const Vec& ax = axes[static_cast<std::size_t>(*d)];
        const auto len = static_cast<std::size_t>(ax.size());
        v[*d] = ax[static_cast<Index>(c % len)];
        c /= len;
      }
    }
    out.theta.row(s) = v.transpose();
    out.log_density[s] = ld;
  }
  return out;
}

namespace {

LogTarget model_target(const PseudoModel& m) {
  return [&m](const Vec& k) { return kappa_log_target(m, k); };
}

ThetaDraws to_theta_scale(ThetaDraws d) {
  d.theta = d.theta.array().exp().matrix();
  return d;
}

}  // namespace

ThetaDraws grid_sample_theta(const PseudoModel& m, Index S, Rng& rng, const GridSettings& settings) {
  const auto blocks = m.blocks();
  const LogTarget f = model_target(m);
  const ModeResult mode = find_mode(f, m.initial_theta().array().log().matrix(), blocks);
  const auto axes = laplace_axes(mode, blocks, settings);
  return to_theta_scale(grid_sample(f, blocks, axes, mode.mode, S, rng, settings.cap));
}

ThetaDraws grid_sample_theta(const PseudoModel& m, const std::vector<Vec>& kappa_axes, Index S,
                             Rng& rng, std::size_t cap) {
  if (static_cast<Index>(kappa_axes.size()) != m.dim_theta()) {
    throw DimensionMismatch("grid_sample_theta: one axis per hyperparameter required");
  }
  const auto blocks = m.blocks();
  const LogTarget f = model_target(m);
  Vec center(m.dim_theta());
  for (Index j = 0; j < m.dim_theta(); ++j) {
    const Vec& ax = kappa_axes[static_cast<std::size_t>(j)];
    center[j] = ax[ax.size() / 2];
  }
  return to_theta_scale(grid_sample(f, blocks, kappa_axes, center, S, rng, cap));
}

ThetaDraws metropolis(const LogTarget& f, const Vec& start, const Mat& proposal_cov, Index S,
                      Index burnin, Rng& rng) {
  const Index d = start.size();
  Eigen::LLT<Mat> llt(proposal_cov);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("metropolis: proposal covariance not SPD");
  const Mat L = llt.matrixL();
  Vec cur = start;
  double fcur = f(cur);
  if (!std::isfinite(fcur)) throw NonFiniteObjective("metropolis: target not finite at the start");
  ThetaDraws out;
  out.method = "metropolis";
  out.theta.resize(S, d);
  out.log_density.resize(S);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Index accepted = 0;
  for (Index it = 0; it < burnin + S; ++it) {
    const Vec prop = cur + L * standard_normal_vector(d, rng);
    const double fprop = f(prop);
    const bool accept = std::isfinite(fprop) && std::log(unif(rng)) < fprop - fcur;
    if (accept) {
      cur = prop;
      fcur = fprop;
    }
    if (it >= burnin) {
      if (accept) ++accepted;
      out.theta.row(it - burnin) = cur.transpose();
      out.log_density[it - burnin] = fcur;
    }
  }
  out.acceptance_rate = S > 0 ? static_cast<double>(accepted) / static_cast<double>(S) : 0.0;
  out.lag1_autocorrelation.resize(d);
  for (Index j = 0; j < d; ++j) {
    const Vec col = out.theta.col(j);
    out.lag1_autocorrelation[j] = lag1_autocorrelation(std::span<const double>(col.data(), col.size()));
  }
  return out;
}

ThetaDraws metropolis_sample_theta(const PseudoModel& m, Index S, Index burnin, Rng& rng) {
  const LogTarget f = model_target(m);
  const ModeResult mode = find_mode(f, m.initial_theta().array().log().matrix(), m.blocks());
  const Index d = m.dim_theta();
  Eigen::LLT<Mat> llt(mode.neg_hessian);
  if (llt.info() != Eigen::Success) {
    throw NonConcaveAtMode("metropolis: negative Hessian at the mode is not positive definite");
  }
  const Mat cov = (2.382 * 2.382 / static_cast<double>(d)) * llt.solve(Mat::Identity(d, d));
  if (burnin < 0) burnin = S / 5;
  return to_theta_scale(metropolis(f, mode.mode, cov, S, burnin, rng));
}

void sample_latent(const PseudoModel& m, const ThetaDraws& draws, Rng& rng, const LatentSink& sink) {
  struct Entry {
    CholFactor factor;
    Vec mean;
  };
  using Key = std::vector<double>;
  constexpr std::size_t kCapacity = 64;
  std::list<std::pair<Key, Entry>> lru;
  std::map<Key, std::list<std::pair<Key, Entry>>::iterator> index;

  const Index S = draws.theta.rows();
  for (Index s = 0; s < S; ++s) {
    const Vec theta = draws.theta.row(s).transpose();
    Key key(theta.data(), theta.data() + theta.size());
    auto found = index.find(key);
    if (found != index.end()) {
      lru.splice(lru.begin(), lru, found->second);
    } else {
      const ConditionalSystem sys = conditional_system(m, theta);
      Entry e;
      try {
        e.factor = m.factorize(sys.Q);
      } catch (const NotPositiveDefinite& err) {
        std::ostringstream msg;
        msg << err.what() << " at θ = (";
        for (Index j = 0; j < theta.size(); ++j) msg << (j ? ", " : "") << theta[j];
        msg << ")";
        throw NotPositiveDefinite(msg.str());
      }
      e.mean = e.factor.solve(sys.b);
      lru.emplace_front(key, std::move(e));
      index[key] = lru.begin();
      if (lru.size() > kCapacity) {
        index.erase(lru.back().first);
        lru.pop_back();
      }
    }
    const Entry& e = lru.front().second;
    const Vec v = e.mean + e.factor.whiten_inverse(standard_normal_vector(e.mean.size(), rng));
    sink(s, system_to_latent(m, v));
  }
}

LatentDraws sample_latent(const PseudoModel& m, const ThetaDraws& draws, Rng& rng) {
  LatentDraws out;
  out.names = m.latent_names;
  out.x.resize(draws.theta.rows(), m.dim_x());
  sample_latent(m, draws, rng, [&](Index s, const Vec& x) { out.x.row(s) = x.transpose(); });
  return out;
}

namespace {

Mat dense_inverse(const Mat& a, const char* what) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not SPD");
  return llt.solve(Mat::Identity(a.rows(), a.cols()));
}

void check_dense_cap(const PseudoModel& m) {
  if (m.dim_eta() > 2000) throw InvalidArgument("dense conditional moments: dim η exceeds 2000");
}

}  // namespace

GaussianMoments eta_conditional_moments(const PseudoModel& m, const Vec& theta) {
  check_dense_cap(m);
  const Mat z = Mat(m.Z);
  const Mat qnu_inv = dense_inverse(m.q_nu(theta).to_dense(), "Q_ν");
  Mat c = z * qnu_inv * z.transpose();
  if (!m.eps_zero) c.diagonal() += m.q_eps_diagonal(theta).cwiseInverse();
  const Mat c_inv = dense_inverse(c, "Q_ε⁻¹ + Z Q_ν⁻¹ Zᵀ");
  const Mat qy = m.stacked.q_etay.to_dense();
  GaussianMoments out;
  out.precision = c_inv + qy;
  out.mean = out.precision.llt().solve(c_inv * (z * m.mu_nu) + qy * m.stacked.eta_hat);
  return out;
}

GaussianMoments nu_conditional_moments(const PseudoModel& m, const Vec& theta) {
  check_dense_cap(m);
  const Mat z = Mat(m.Z);
  const Mat qy = m.stacked.q_etay.to_dense();
  Mat w;
  if (m.eps_zero) {
    w = qy;
  } else {
    Mat s = dense_inverse(qy, "Q_ηy");
    s.diagonal() += m.q_eps_diagonal(theta).cwiseInverse();
    w = dense_inverse(s, "Q_ε⁻¹ + Q_ηy⁻¹");
  }
  const Mat qnu = m.q_nu(theta).to_dense();
  GaussianMoments out;
  out.precision = qnu + z.transpose() * w * z;
  out.mean = out.precision.llt().solve(qnu * m.mu_nu + z.transpose() * (w * m.stacked.eta_hat));
  return out;
}

DenseMoments conditional_moments(const PseudoModel& m, const Vec& theta) {
  if (m.dim_system() > 4000) throw InvalidArgument("conditional_moments: system too large");
  const ConditionalSystem sys = conditional_system(m, theta);
  const CholFactor f = m.factorize(sys.Q);
  const Index k = sys.Q.dim();
  Mat cov_v(k, k);
  for (Index j = 0; j < k; ++j) cov_v.col(j) = f.solve(Vec::Unit(k, j));
  const Vec mean_v = f.solve(sys.b);
  if (!m.eps_zero) return {mean_v, cov_v};
  Mat t(m.dim_x(), k);
  t.topRows(m.dim_eta()) = Mat(m.Z);
  t.bottomRows(k) = Mat::Identity(k, k);
  return {t * mean_v, t * cov_v * t.transpose()};
}

Sampler parse_sampler(const std::string& s) {
  if (s == "grid") return Sampler::Grid;
  if (s == "metropolis") return Sampler::Metropolis;
  throw InvalidArgument("unknown sampler '" + s + "' (expected grid or metropolis)");
}

FitResult fit(const PseudoModel& m, Sampler sampler, Index S, Rng& rng) {
  FitResult r;
  r.theta = sampler == Sampler::Grid ? grid_sample_theta(m, S, rng)
                                     : metropolis_sample_theta(m, S, -1, rng);
  r.latent = sample_latent(m, r.theta, rng);
  return r;
}

}  // namespace maxsmooth
