#include "maxsmooth/max_step.hpp"

#include <cmath>
#include <numbers>

#include "maxsmooth/error.hpp"
#include "maxsmooth/special.hpp"

namespace maxsmooth {

Flavor parse_flavor(const std::string& s) {
  if (s == "mode") return Flavor::ModeCurvature;
  if (s == "moment") return Flavor::MomentMatch;
  throw InvalidArgument("unknown flavor '" + s + "' (expected mode or moment)");
}

std::string flavor_name(Flavor f) { return f == Flavor::ModeCurvature ? "mode" : "moment"; }

namespace {

GroupApprox scalar_approx(double mean, double precision, Flavor flavor) {
  GroupApprox g;
  g.mean = Vec::Constant(1, mean);
  g.precision = Mat::Constant(1, 1, precision);
  g.flavor = flavor;
  return g;
}

}  // namespace

GroupApprox logvar_approx(const Vec& y, Flavor flavor) {
  const Index T = y.size();
  if (T < 2) throw InvalidArgument("logvar_approx: need T >= 2 observations");
  const double ss = y.squaredNorm();
  if (!(ss > 0.0)) throw DegenerateLikelihood("logvar_approx: all observations are zero");
  const double t = static_cast<double>(T);
  const double mode = std::log(ss / t);
  if (flavor == Flavor::ModeCurvature) return scalar_approx(mode, t / 2.0, flavor);
  return scalar_approx(mode + std::log(t / 2.0) - digamma(t / 2.0), 1.0 / trigamma(t / 2.0), flavor);
}

CenteredDesign center_design(const Mat& covariates) {
  const Index T = covariates.rows();
  CenteredDesign d;
  d.fbar = covariates.colwise().mean().transpose();
  d.F.resize(T, covariates.cols() + 1);
  d.F.col(0).setOnes();
  d.F.rightCols(covariates.cols()) = covariates.rowwise() - d.fbar.transpose();
  return d;
}

GroupApprox linreg_approx(const Vec& y, const Mat& F, Flavor flavor) {
  const Index T = y.size();
  const Index p = F.cols();
  if (F.rows() != T) throw DimensionMismatch("linreg_approx: rows(F) != length(y)");
  if (T <= p) throw InvalidArgument("linreg_approx: need T > p");
  if (flavor == Flavor::MomentMatch && T <= p + 2) {
    throw InvalidArgument("linreg_approx: moment flavor needs T > p + 2");
  }
  const Mat ftf = F.transpose() * F;
  Eigen::LLT<Mat> llt(ftf);
  if (llt.info() != Eigen::Success) throw InvalidArgument("linreg_approx: FᵀF is singular");
  const Vec b = llt.solve(F.transpose() * y);
  const double rss = (y - F * b).squaredNorm();
  if (!(rss > 1e-300)) throw DegenerateLikelihood("linreg_approx: residual sum of squares is zero");

  GroupApprox g;
  g.flavor = flavor;
  g.mean.resize(p + 1);
  g.mean.head(p) = b;
  g.precision = Mat::Zero(p + 1, p + 1);
  const double t = static_cast<double>(T);
  if (flavor == Flavor::ModeCurvature) {
    const double tau = std::log(rss / t);
    g.mean[p] = tau;
    g.precision.topLeftCorner(p, p) = std::exp(-tau) * ftf;
    g.precision(p, p) = t / 2.0;
    return g;
  }
  const double nu = static_cast<double>(T - p);
  const double s2 = rss / nu;
  // Normalized likelihood: β is multivariate t with ν = T-p degrees of
  // freedom and scale s²(FᵀF)⁻¹; τ is log-inverse-gamma.
  g.mean[p] = std::log(s2) + std::log(nu / 2.0) - digamma(nu / 2.0);
  g.precision.topLeftCorner(p, p) = ftf * ((nu - 2.0) / (nu * s2));
  g.precision(p, p) = 1.0 / trigamma(nu / 2.0);
  return g;
}

GroupApprox poisson_approx(std::span<const long> counts, const std::optional<LogGammaPrior>& prior,
                           Flavor flavor) {
  if (counts.empty()) throw InvalidArgument("poisson_approx: no counts");
  double sum = 0.0;
  for (long c : counts) {
    if (c < 0) throw InvalidArgument("poisson_approx: negative count");
    sum += static_cast<double>(c);
  }
  const double a = (prior ? prior->alpha : 0.0) + sum;
  const double rate = (prior ? prior->gamma : 0.0) + static_cast<double>(counts.size());
  if (!(a > 0.0)) {
    throw DegenerateLikelihood("poisson_approx: zero counts without a prior have no finite mode");
  }
  if (flavor == Flavor::ModeCurvature) return scalar_approx(std::log(a) - std::log(rate), a, flavor);
  return scalar_approx(digamma(a) - std::log(rate), 1.0 / trigamma(a), flavor);
}

GroupApprox poisson_approx(long y, const std::optional<LogGammaPrior>& prior, Flavor flavor) {
  const long c[1] = {y};
  return poisson_approx(std::span<const long>(c, 1), prior, flavor);
}

namespace {

double fd_step(double v, double rel) { return std::max(rel, rel * std::abs(v)); }

double checked(const ScalarFn& f, const Vec& v) {
  const double r = f(v);
  if (!std::isfinite(r)) throw NonFiniteObjective("objective is not finite during optimization");
  return r;
}

}  // namespace

Vec numeric_gradient(const ScalarFn& f, const Vec& v) {
  Vec g(v.size());
  Vec w = v;
  for (Index i = 0; i < v.size(); ++i) {
    const double h = fd_step(v[i], 1e-5);
    w[i] = v[i] + h;
    const double up = checked(f, w);
    w[i] = v[i] - h;
    const double down = checked(f, w);
    w[i] = v[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Mat numeric_hessian(const ScalarFn& f, const Vec& v) {
  const Index n = v.size();
  Mat H(n, n);
  Vec h(n);
  for (Index i = 0; i < n; ++i) h[i] = fd_step(v[i], 1e-4);
  const double f0 = checked(f, v);
  Vec w = v;
  for (Index i = 0; i < n; ++i) {
    w[i] = v[i] + h[i];
    const double up = checked(f, w);
    w[i] = v[i] - h[i];
    const double down = checked(f, w);
    w[i] = v[i];
    H(i, i) = (up - 2.0 * f0 + down) / (h[i] * h[i]);
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      auto at = [&](double si, double sj) {
        w[i] = v[i] + si * h[i];
        w[j] = v[j] + sj * h[j];
        const double r = checked(f, w);
        w[i] = v[i];
        w[j] = v[j];
        return r;
      };
      H(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

GroupApprox numeric_approx(const ScalarFn& loglik, const Vec& init, const NumericSettings& settings) {
  Vec v = init;
  double fv = checked(loglik, v);
  const Index n = v.size();
  bool converged = false;
  for (int iter = 0; iter < settings.max_iter; ++iter) {
    const Vec g = numeric_gradient(loglik, v);
    if (g.lpNorm<Eigen::Infinity>() < settings.grad_tol) {
      converged = true;
      break;
    }
    const Mat H = numeric_hessian(loglik, v);
    // Levenberg-style damping until -H + λI is positive definite.
    Vec step;
    double lambda = 0.0;
    for (int k = 0; k < 60; ++k) {
      Eigen::LLT<Mat> llt(-H + lambda * Mat::Identity(n, n));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
      lambda = lambda == 0.0 ? 1e-6 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff()) : lambda * 10;
    }
    if (step.size() == 0) throw NonConcaveAtMode("numeric_approx: could not form an ascent step");
    // Predicted gain below the rounding level of f: the gradient is noise.
    if (lambda == 0.0 && 0.5 * g.dot(step) < 1e-14 * std::abs(fv)) {
      converged = true;
      break;
    }

    double scale = 1.0;
    bool improved = false;
    for (int k = 0; k < 50; ++k) {
      const Vec cand = v + scale * step;
      const double fc = loglik(cand);
      if (std::isfinite(fc) && fc >= fv) {
        v = cand;
        fv = fc;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // No ascent possible at working precision: the gradient is at its
      // rounding floor.
      if (g.lpNorm<Eigen::Infinity>() < 1e-5 * std::max(1.0, std::abs(fv))) {
        converged = true;
        break;
      }
      throw MaxIterations("numeric_approx: line search failed away from a stationary point");
    }
  }
  if (!converged) {
    const Vec g = numeric_gradient(loglik, v);
    if (g.lpNorm<Eigen::Infinity>() >= settings.grad_tol) {
      throw MaxIterations("numeric_approx: no convergence within the iteration limit");
    }
  }
  const Mat H = numeric_hessian(loglik, v);
  Mat prec = -0.5 * (H + H.transpose());
  Eigen::LLT<Mat> check(prec);
  if (check.info() != Eigen::Success) {
    throw NonConcaveAtMode("numeric_approx: Hessian at the mode is not negative definite");
  }
  GroupApprox out;
  out.mean = v;
  out.precision = prec;
  out.flavor = Flavor::ModeCurvature;
  return out;
}

double treg_loglik(const Vec& eta, const Vec& y, const Mat& X, const LogGammaPrior& prior_phi) {
  const Index p = X.cols();
  if (eta.size() != p + 2) throw DimensionMismatch("treg_loglik: length(eta) != p + 2");
  const double tau = eta[p];
  const double phi = eta[p + 1];
  const double sigma = std::exp(tau);
  const double df = std::exp(phi);
  const Vec r = (y - X * eta.head(p)) / sigma;
  const double n = static_cast<double>(y.size());
  const double norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                      0.5 * std::log(df * std::numbers::pi) - tau;
  double s = n * norm;
  for (Index k = 0; k < r.size(); ++k) s -= 0.5 * (df + 1.0) * std::log1p(r[k] * r[k] / df);
  return s + loggamma_logdensity(phi, prior_phi);
}

GroupApprox treg_approx(const Vec& y, const Mat& X, const LogGammaPrior& prior_phi,
                        const NumericSettings& settings) {
  const Index p = X.cols();
  if (X.rows() != y.size()) throw DimensionMismatch("treg_approx: rows(X) != length(y)");
  if (y.size() <= p + 2) throw InvalidArgument("treg_approx: need n_t > p + 2");
  Eigen::LLT<Mat> llt(X.transpose() * X);
  if (llt.info() != Eigen::Success) throw InvalidArgument("treg_approx: XᵀX is singular");
  const Vec b = llt.solve(X.transpose() * y);
  const double rss = (y - X * b).squaredNorm();
  if (!(rss > 0.0)) throw DegenerateLikelihood("treg_approx: residual sum of squares is zero");
  Vec init(p + 2);
  init.head(p) = b;
  init[p] = 0.5 * std::log(rss / static_cast<double>(y.size() - p));
  init[p + 1] = loggamma_moments(prior_phi).first;
  return numeric_approx([&](const Vec& e) { return treg_loglik(e, y, X, prior_phi); }, init,
                        settings);
}

StackedApprox stack(const std::vector<GroupApprox>& groups, Index M, Index G) {
  if (static_cast<Index>(groups.size()) != G) throw DimensionMismatch("stack: |groups| != G");
  StackedApprox s;
  s.M = M;
  s.G = G;
  s.eta_hat.resize(M * G);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(G * M * (M + 1) / 2));
  for (Index i = 0; i < G; ++i) {
    const auto& g = groups[static_cast<std::size_t>(i)];
    if (g.mean.size() != M || g.precision.rows() != M || g.precision.cols() != M) {
      throw DimensionMismatch("stack: group " + std::to_string(i) + " has inconsistent M");
    }
    for (Index m = 0; m < M; ++m) {
      s.eta_hat[param_major_index(i, m, G)] = g.mean[m];
      for (Index k = m; k < M; ++k) {
        if (g.precision(m, k) != 0.0) {
          t.emplace_back(param_major_index(i, m, G), param_major_index(i, k, G), g.precision(m, k));
        }
      }
    }
  }
  s.q_etay = SparseSymMatrix::from_triplets(M * G, t);
  return s;
}

std::vector<GroupApprox> unstack(const StackedApprox& s) {
  std::vector<GroupApprox> out(static_cast<std::size_t>(s.G));
  for (Index i = 0; i < s.G; ++i) {
    auto& g = out[static_cast<std::size_t>(i)];
    g.group_id = i;
    g.mean.resize(s.M);
    g.precision.resize(s.M, s.M);
    for (Index m = 0; m < s.M; ++m) {
      g.mean[m] = s.eta_hat[param_major_index(i, m, s.G)];
      for (Index k = 0; k < s.M; ++k) {
        g.precision(m, k) = s.q_etay.coeff(param_major_index(i, m, s.G), param_major_index(i, k, s.G));
      }
    }
  }
  return out;
}

}  // namespace maxsmooth
