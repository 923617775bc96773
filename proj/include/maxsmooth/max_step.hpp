#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maxsmooth/priors.hpp"
#include "maxsmooth/sparse.hpp"

namespace maxsmooth {

// mode-curvature: ML mode and observed information.
// moment-match: mean and inverse covariance of the normalized likelihood.
enum class Flavor { ModeCurvature, MomentMatch };

Flavor parse_flavor(const std::string& s);  // "mode" or "moment"
std::string flavor_name(Flavor f);

struct GroupApprox {
  Vec mean;
  Mat precision;
  Flavor flavor = Flavor::ModeCurvature;
  Index group_id = 0;
};

// Group approximations stacked parameter-major: all first components, then
// all second components, and so on. q_etay is permuted accordingly.
struct StackedApprox {
  Vec eta_hat;
  SparseSymMatrix q_etay;
  Index M = 0;
  Index G = 0;
};

// y_t ~ N(0, exp(x)), t = 1..T.
GroupApprox logvar_approx(const Vec& y, Flavor flavor);

// Intercept column plus centered covariates; returns the design and the
// covariate means used for centering.
struct CenteredDesign {
  Mat F;
  Vec fbar;
};
CenteredDesign center_design(const Mat& covariates);

// y = F b + e, e ~ N(0, exp(τ)); η = (b, τ). F must carry the intercept and
// centered covariates.
GroupApprox linreg_approx(const Vec& y, const Mat& F, Flavor flavor);

// Counts sharing one log-rate η, optionally multiplied by a log-gamma prior
// on η. A single count is the one-element case.
GroupApprox poisson_approx(std::span<const long> counts, const std::optional<LogGammaPrior>& prior,
                           Flavor flavor);
GroupApprox poisson_approx(long y, const std::optional<LogGammaPrior>& prior, Flavor flavor);

struct NumericSettings {
  double grad_tol = 1e-8;
  int max_iter = 100;
};

using ScalarFn = std::function<double(const Vec&)>;

// Central differences; gradient step max(1e-5, 1e-5|v_i|), Hessian step
// max(1e-4, 1e-4|v_i|).
Vec numeric_gradient(const ScalarFn& f, const Vec& v);
Mat numeric_hessian(const ScalarFn& f, const Vec& v);

// Damped Newton ascent on loglik; returns the mode with precision equal to the
// negative Hessian there.
GroupApprox numeric_approx(const ScalarFn& loglik, const Vec& init,
                           const NumericSettings& settings = {});

// Generalized log-likelihood of one time point of the t-regression:
// η = (β_1..β_p, τ = log σ, φ = log ϑ), including the log-gamma factor on φ.
double treg_loglik(const Vec& eta, const Vec& y, const Mat& X, const LogGammaPrior& prior_phi);
GroupApprox treg_approx(const Vec& y, const Mat& X, const LogGammaPrior& prior_phi,
                        const NumericSettings& settings = {});

// Group-major index i*M + m maps to parameter-major m*G + i (0-based).
inline Index param_major_index(Index group, Index m, Index G) { return m * G + group; }

StackedApprox stack(const std::vector<GroupApprox>& groups, Index M, Index G);
// Inverse of stack: per-group means and precision blocks.
std::vector<GroupApprox> unstack(const StackedApprox& s);

}  // namespace maxsmooth
