#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maxsmooth/csv.hpp"
#include "maxsmooth/error.hpp"
#include "maxsmooth/max_step.hpp"
#include "maxsmooth/sparse.hpp"

namespace maxsmooth {

// Complete rectangular grid of forecasts and observations. Cell i = i1 + n1·i2
// with i1 running over longitudes and i2 over latitudes, both ascending.
struct GridDataset {
  Index n1 = 0;
  Index n2 = 0;
  std::vector<int> years;  // ascending
  Mat forecast;            // N x T
  Mat observation;         // N x T
  Vec lat;                 // per cell
  Vec lon;

  Index n_cells() const { return n1 * n2; }
  Index n_years() const { return static_cast<Index>(years.size()); }
  void validate() const;
  // Same grid without year column t.
  GridDataset drop_year(Index t) const;
};

struct IngestOptions {
  // When set, rows with any other year are rejected.
  std::optional<std::vector<int>> years;
};

// CSV with header lat,lon,year,forecast,observation and one row per (cell, year).
GridDataset ingest(const std::string& path, const IngestOptions& options = {});
GridDataset ingest_stream(std::istream& in, const IngestOptions& options = {});
void write_grid_csv(const GridDataset& ds, const std::string& path);
void write_grid_stream(const GridDataset& ds, std::ostream& out);

// Field levels and linreg-lattice σ's for synthetic data.
struct SynthTruth {
  double alpha0 = 0.0;
  double beta0 = 0.7;
  double tau0 = -0.7;  // log variance
  std::array<double, 6> sigma = {0.5, 0.1, 0.2, 0.1, 0.2, 0.1};
};

GridDataset synth_grid(Index n1, Index n2, Index years, const SynthTruth& truth, Rng& rng);

enum class Scheme { Clim, Mle, Spat1, Spat2 };
Scheme parse_scheme(const std::string& s);  // clim, mle, spat1, spat2
std::string scheme_name(Scheme s);

struct PredictOptions {
  Index samples = 1000;
  // MLE: Student-t predictive instead of the Gaussian plug-in.
  bool mle_t_predictive = false;
  int grid_points = 21;
};

// Predictive draws for one new year given training data: N x S.
Mat predict_year(const GridDataset& train, const Vec& f_new, Scheme scheme, const PredictOptions& opt,
                 Rng& rng);

// N x T x S draws, stored with the sample index fastest.
struct PredictiveSamples {
  Index N = 0;
  Index T = 0;
  Index S = 0;
  std::vector<double> values;

  double* cell(Index i, Index t) { return values.data() + (t * N + i) * S; }
  const double* cell(Index i, Index t) const { return values.data() + (t * N + i) * S; }
};

class FoldFailure : public Error {
 public:
  FoldFailure(int year, const std::string& reason);
  int year() const { return year_; }

 private:
  int year_;
};

// Leave-one-year-out: fold t trains on every other year and predicts year t
// with a generator seeded by derive_seed(seed, kFoldBase + year label).
PredictiveSamples loyo_fit_predict(const GridDataset& ds, Scheme scheme, const PredictOptions& opt,
                                   std::uint64_t seed);
std::uint64_t fold_seed(std::uint64_t seed, int year);

// Sample CRPS estimator: (1/S)Σ|y - x_i| - (1/2S²)ΣΣ|x_i - x_j|.
double crps(std::span<const double> samples, double y);

struct SchemeScores {
  std::string scheme;
  double mse = 0.0;
  double crps = 0.0;
  double w95 = 0.0;
  double cov05 = 0.0;
  double cov50 = 0.0;
  double cov95 = 0.0;
  Mat crps_cells;  // N x T
};
SchemeScores score(const PredictiveSamples& pred, const GridDataset& ds, const std::string& scheme = "");

struct BootstrapResult {
  double mean = 0.0;
  double sd = 0.0;
  double p_value = 0.0;  // one-sided, for mean difference <= 0
  Index blocks_1 = 0;    // tiling actually used
  Index blocks_2 = 0;
};

// Near-square tiling of an n1 x n2 grid into n_blocks rectangles:
// returns (b1, b2) with b1·b2 = n_blocks.
std::pair<Index, Index> block_tiling(Index n1, Index n2, Index n_blocks);

// Resamples the T·S block means of crps_a - crps_b with replacement.
BootstrapResult block_bootstrap_crps_diff(const Mat& crps_a, const Mat& crps_b, Index n1, Index n2,
                                          Index n_blocks, Index replicates, Rng& rng);

}  // namespace maxsmooth
