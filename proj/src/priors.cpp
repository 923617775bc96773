#include "maxsmooth/priors.hpp"

#include <cmath>
#include <numbers>

#include "maxsmooth/error.hpp"
#include "maxsmooth/special.hpp"

namespace maxsmooth {

double pc_logdensity(double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("pc_logdensity: tau must be > 0");
  return std::log(0.5) - 1.5 * std::log(tau) - 1.0 / std::sqrt(tau);
}

double gamma_logdensity(double tau, double shape, double rate) {
  if (!(tau > 0.0) || !(shape > 0.0) || !(rate > 0.0)) {
    throw InvalidArgument("gamma_logdensity: arguments must be > 0");
  }
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(tau) - rate * tau;
}

double exp_logdensity_logscale(double kappa, double rate) {
  if (!(rate > 0.0)) throw InvalidArgument("exp_logdensity_logscale: rate must be > 0");
  return std::log(rate) - rate * std::exp(kappa) + kappa;
}

LogGammaPrior::LogGammaPrior(double a, double g) : alpha(a), gamma(g) {
  if (!(a > 0.0) || !(g > 0.0)) throw InvalidArgument("LogGammaPrior: alpha, gamma must be > 0");
}

double loggamma_logdensity(double phi, const LogGammaPrior& p) {
  return p.alpha * std::log(p.gamma) - std::lgamma(p.alpha) + p.alpha * phi -
         p.gamma * std::exp(phi);
}

std::pair<double, double> loggamma_moments(const LogGammaPrior& p) {
  return {digamma(p.alpha) - std::log(p.gamma), trigamma(p.alpha)};
}

double loggamma_cdf(double phi, const LogGammaPrior& p) {
  return gamma_p(p.alpha, p.gamma * std::exp(phi));
}

double loggamma_quantile(double prob, const LogGammaPrior& p) {
  return std::log(gamma_quantile(prob, p.alpha, p.gamma));
}

double normal_logdensity(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

}  // namespace maxsmooth
