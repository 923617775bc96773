#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "maxsmooth/smooth.hpp"

namespace maxsmooth {

// Dense joint-Gaussian conditioning of (x, η̂) for small models. Needs a
// proper Q_ν and dim x ≤ 200.
struct DensePseudoOracle {
  Vec mean;
  Mat cov;
  Mat cov_eta_hat;            // Q_ηy⁻¹ + Q_ε⁻¹ + Z Q_ν⁻¹ Zᵀ
  double log_marginal = 0.0;  // log N(η̂ | Zμ_ν, cov_eta_hat) + log prior(θ)
};
DensePseudoOracle dense_pseudo_oracle(const PseudoModel& m, const Vec& theta);

struct ExactOptions {
  Index samples = 50000;
  Index burnin = -1;          // < 0: samples / 5
  Index pilot_batches = 10;   // proposal tuning, 50 sweeps each
  bool store_draws = true;
  double tau_shape = 10.0;
  double tau_rate = 10.0;
};

struct ExactResult {
  ThetaDraws tau;
  LatentDraws x;        // empty unless store_draws
  Vec x_mean;
  Vec x_sd;
  Vec proposal_sd;
  double acceptance = 0.0;  // over the recorded sweeps
};

// Metropolis-within-Gibbs for y_{i,t} ~ N(0, exp(x_i)), x ~ N(0, (τQ)⁻¹) with
// the zero-boundary lattice Q, τ ~ Gamma(a, b). Single-site random-walk
// updates use the data density of every observation; τ is drawn from its
// Gamma conditional. y is N x T with rows in lattice order.
ExactResult exact_mcmc_logvar(const Mat& y, Index n1, Index n2, const ExactOptions& opt, Rng& rng);

// Gibbs step for τ: Gamma(shape + n/2, rate + xᵀQx/2).
double draw_tau_conditional(const Vec& x, const SparseSymMatrix& q, double shape, double rate, Rng& rng);

struct BenchConfig {
  std::vector<Index> sides = {10, 20, 35, 50};
  std::vector<Index> reps = {10, 20, 50, 100};
  Index samples = 10000;
  int repeats = 1;  // the minimum over repeats is reported
  std::uint64_t seed = 1;
};
BenchConfig quick_bench_config();

struct BenchRow {
  Index n_lattice = 0;  // number of cells
  Index t_reps = 0;
  std::string method;   // "exact" or "max-and-smooth"
  double seconds_per_10k = 0.0;
  double max_step_seconds = 0.0;
};

using BenchProgress = std::function<void(const BenchRow&)>;
std::vector<BenchRow> timing_benchmark(const BenchConfig& config, const BenchProgress& progress = {});
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace maxsmooth
