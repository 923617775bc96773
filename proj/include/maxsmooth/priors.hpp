#pragma once

#include <utility>

namespace maxsmooth {

// Density of a precision τ when σ = τ^(-1/2) ~ Exponential(1):
// log(1/2) - 1.5 log τ - 1/√τ.
double pc_logdensity(double tau);

// Gamma(shape, rate) log-density.
double gamma_logdensity(double tau, double shape, double rate);

// Exponential(rate) prior on θ = exp(κ), written on the κ scale with the
// Jacobian included: log λ - λ e^κ + κ.
double exp_logdensity_logscale(double kappa, double rate);

// φ such that exp(φ) ~ Gamma(alpha, rate gamma).
struct LogGammaPrior {
  double alpha;
  double gamma;
  LogGammaPrior(double a, double g);
};

double loggamma_logdensity(double phi, const LogGammaPrior& p);
// (mean, variance) = (ψ(α) - log γ, ψ'(α)).
std::pair<double, double> loggamma_moments(const LogGammaPrior& p);
double loggamma_cdf(double phi, const LogGammaPrior& p);
double loggamma_quantile(double prob, const LogGammaPrior& p);

// log N(x | mean, sd²).
double normal_logdensity(double x, double mean, double sd);

}  // namespace maxsmooth
