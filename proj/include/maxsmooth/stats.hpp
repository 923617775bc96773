#pragma once

#include <span>
#include <vector>

#include "maxsmooth/sparse.hpp"

namespace maxsmooth {

// Type-7 (linear interpolation between order statistics) quantile.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);
double lag1_autocorrelation(std::span<const double> v);

// Monte-Carlo standard error of the mean of a possibly autocorrelated chain,
// by non-overlapping batch means (√S batches).
double batch_means_se(std::span<const double> v);

double log_sum_exp(std::span<const double> v);

}  // namespace maxsmooth
