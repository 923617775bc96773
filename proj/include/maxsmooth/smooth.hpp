#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maxsmooth/max_step.hpp"
#include "maxsmooth/sparse.hpp"

namespace maxsmooth {

// How a hyperparameter scales a structure matrix: Precision multiplies by θ,
// StdDev by θ⁻².
enum class ScaleKind { Precision, StdDev };

inline double scale_multiplier(ScaleKind k, double theta) {
  return k == ScaleKind::Precision ? theta : 1.0 / (theta * theta);
}

// One diagonal block of Q_ν: multiplier(θ_j)·S + ridge·I. When the
// eigenvalues of S are supplied, log-determinants are computed from them and
// zero eigenvalues (ridge = 0) give the intrinsic pseudo-determinant.
// Without eigenvalues the block must be full rank and is factorized.
struct NuBlock {
  SparseSymMatrix structure;
  Vec eigenvalues;
  Index theta_index = 0;
  ScaleKind scale = ScaleKind::StdDev;
  double ridge = 0.0;

  Index dim() const { return structure.dim(); }
  Index rank() const;
  double logdet(double theta) const;
};

// Diagonal block of Q_ε covering `size` consecutive coordinates of η.
struct EpsBlock {
  Index size = 0;
  Index theta_index = 0;
  ScaleKind scale = ScaleKind::StdDev;
};

enum class PriorKind {
  Flat,         // constant on the θ scale
  Gamma,        // θ ~ Gamma(a, rate b)
  Exponential,  // θ ~ Exponential(rate a)
  PcPrecision,  // θ is a precision whose σ is Exponential(1)
};

struct ThetaParam {
  std::string name;
  PriorKind prior = PriorKind::Flat;
  double a = 1.0;
  double b = 1.0;
};

double theta_prior_logdensity(const ThetaParam& p, double theta);

struct NamedRange {
  std::string name;
  Index start = 0;
  Index size = 0;
};

// The Gaussian–Gaussian pseudo model. η̂ | η ~ N(η, Q_ηy⁻¹), η = Zν + ε,
// ε ~ N(0, Q_ε⁻¹), ν ~ N(μ_ν, Q_ν⁻¹) with Q_ν = bdiag(nu_blocks).
// With eps_zero set, η ≡ Zν and the latent system is expressed in ν alone.
struct PseudoModel {
  StackedApprox stacked;
  SpMat Z;
  Vec mu_nu;
  std::vector<NuBlock> nu_blocks;
  bool eps_zero = false;
  std::vector<EpsBlock> eps_blocks;
  std::vector<ThetaParam> theta;
  // Independence blocks of θ under its marginal posterior; empty = one block.
  std::vector<std::vector<Index>> theta_blocks;
  // Starting point for mode searches (θ scale); empty = all ones.
  Vec theta_init;
  // Names over x = (η, ν).
  std::vector<NamedRange> latent_names;

  Index dim_eta() const { return stacked.eta_hat.size(); }
  Index dim_nu() const { return mu_nu.size(); }
  Index dim_x() const { return dim_eta() + dim_nu(); }
  // Dimension of the system that is factorized: dim_nu() when eps_zero.
  Index dim_system() const { return eps_zero ? dim_nu() : dim_x(); }
  Index dim_theta() const { return static_cast<Index>(theta.size()); }
  std::vector<std::vector<Index>> blocks() const;
  Vec initial_theta() const;

  void validate() const;
  // Caches the fill-reducing ordering and log det Q_ηy. Optional; every
  // operation works without it, only slower.
  void prepare();

  SparseSymMatrix q_nu(const Vec& th) const;
  Vec q_eps_diagonal(const Vec& th) const;
  double q_nu_logdet(const Vec& th) const;
  Index q_nu_rank() const;
  double q_etay_logdet() const;
  CholFactor factorize(const SparseSymMatrix& q) const;

  struct Cache;
  std::shared_ptr<const Cache> cache;
};

// Q_{x|η̂} and canonical vector b; when eps_zero, the ν-only system.
struct ConditionalSystem {
  SparseSymMatrix Q;
  Vec b;
};
ConditionalSystem conditional_system(const PseudoModel& m, const Vec& theta);

// Maps a system vector to x = (η, ν): identity, or (Zν, ν) when eps_zero.
Vec system_to_latent(const PseudoModel& m, const Vec& v);

// Unnormalized log π(θ | η̂) on the θ scale via the ratio identity at x = 0.
// Throws NotPositiveDefinite when a factorization fails at this θ.
double theta_log_marginal(const PseudoModel& m, const Vec& theta);
// The same identity evaluated at an arbitrary system vector.
double theta_log_marginal_at(const PseudoModel& m, const Vec& theta, const Vec& v);
// Form with ε integrated out: needs eps_zero or a diagonal Q_ηy.
double theta_log_marginal_nu_form(const PseudoModel& m, const Vec& theta);

// Target on κ = log θ including the Jacobian; -inf where evaluation fails.
double kappa_log_target(const PseudoModel& m, const Vec& kappa);

struct ThetaDraws {
  Mat theta;        // S x dim θ, original scale
  Vec log_density;  // per-draw log posterior mass (grid) or κ-scale target (metropolis)
  std::string method;
  double acceptance_rate = 0.0;
  Vec lag1_autocorrelation;
};

struct LatentDraws {
  Mat x;  // S x dim x
  std::vector<NamedRange> names;
};

using LogTarget = std::function<double(const Vec&)>;

struct ModeResult {
  Vec mode;
  Mat neg_hessian;
};
// Coordinate ascent (Brent line searches) over each block in turn, then the
// numeric negative Hessian at the mode.
ModeResult find_mode(const LogTarget& f, const Vec& init,
                     const std::vector<std::vector<Index>>& blocks);

struct GridSettings {
  int points = 41;
  double half_width_sd = 4.0;
  std::size_t cap = 1000000;
};

// Axes centred at the mode, ± half_width_sd Laplace sds of each block.
std::vector<Vec> laplace_axes(const ModeResult& mode, const std::vector<std::vector<Index>>& blocks,
                              const GridSettings& settings);

// Generic grid sampler on κ. Each block is gridded with the remaining
// coordinates held at `center`; blocks are sampled independently. Cells are
// drawn by inverse CDF in lexicographic order (last axis fastest).
ThetaDraws grid_sample(const LogTarget& f, const std::vector<std::vector<Index>>& blocks,
                       const std::vector<Vec>& axes, const Vec& center, Index S, Rng& rng,
                       std::size_t cap = 1000000);

ThetaDraws grid_sample_theta(const PseudoModel& m, Index S, Rng& rng,
                             const GridSettings& settings = {});
ThetaDraws grid_sample_theta(const PseudoModel& m, const std::vector<Vec>& kappa_axes, Index S,
                             Rng& rng, std::size_t cap = 1000000);

// Random-walk Metropolis with a fixed Gaussian proposal; returns κ draws.
ThetaDraws metropolis(const LogTarget& f, const Vec& start, const Mat& proposal_cov, Index S,
                      Index burnin, Rng& rng);
// Proposal covariance (2.382²/d)·H⁻¹ at the mode; burnin < 0 means S/5.
ThetaDraws metropolis_sample_theta(const PseudoModel& m, Index S, Index burnin, Rng& rng);

LatentDraws sample_latent(const PseudoModel& m, const ThetaDraws& draws, Rng& rng);
// Streaming form: sink(s, x) receives each draw in order, nothing is stored.
using LatentSink = std::function<void(Index, const Vec&)>;
void sample_latent(const PseudoModel& m, const ThetaDraws& draws, Rng& rng, const LatentSink& sink);

struct GaussianMoments {
  Vec mean;
  Mat precision;
};
// Dense closed forms; need a proper Q_ν and dim η ≤ 2000.
GaussianMoments eta_conditional_moments(const PseudoModel& m, const Vec& theta);
GaussianMoments nu_conditional_moments(const PseudoModel& m, const Vec& theta);

// Mean and covariance of x | η̂, θ from the sparse system (dense output).
struct DenseMoments {
  Vec mean;
  Mat cov;
};
DenseMoments conditional_moments(const PseudoModel& m, const Vec& theta);

enum class Sampler { Grid, Metropolis };
Sampler parse_sampler(const std::string& s);

struct FitResult {
  ThetaDraws theta;
  LatentDraws latent;
};
FitResult fit(const PseudoModel& m, Sampler sampler, Index S, Rng& rng);

}  // namespace maxsmooth
