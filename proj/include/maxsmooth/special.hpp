#pragma once

namespace maxsmooth {

// ψ(x) and ψ'(x) for x > 0: upward recurrence to x >= 6, then the
// asymptotic series.
double digamma(double x);
double trigamma(double x);

// Regularized lower incomplete gamma P(a, x) and its complement.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Quantile of Gamma(shape, rate) by bisection on gamma_p.
double gamma_quantile(double p, double shape, double rate);

}  // namespace maxsmooth
