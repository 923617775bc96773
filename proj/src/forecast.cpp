#include "maxsmooth/forecast.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "maxsmooth/gmrf.hpp"
#include "maxsmooth/models.hpp"
#include "maxsmooth/parallel.hpp"
#include "maxsmooth/smooth.hpp"
#include "maxsmooth/stats.hpp"

namespace maxsmooth {

void GridDataset::validate() const {
  const Index N = n_cells();
  const Index T = n_years();
  if (n1 < 1 || n2 < 1) throw InvalidArgument("grid dataset: empty grid");
  if (T < 4) throw InvalidArgument("grid dataset: need at least 4 years");
  if (!std::is_sorted(years.begin(), years.end()) ||
      std::adjacent_find(years.begin(), years.end()) != years.end()) {
    throw InvalidArgument("grid dataset: years must be strictly increasing");
  }
  if (forecast.rows() != N || forecast.cols() != T || observation.rows() != N || observation.cols() != T) {
    throw DimensionMismatch("grid dataset: forecast and observation must be N x T");
  }
  if (lat.size() != N || lon.size() != N) throw DimensionMismatch("grid dataset: coordinates must have N entries");
  if (!forecast.allFinite() || !observation.allFinite()) throw InvalidArgument("grid dataset: non-finite values");
}

GridDataset GridDataset::drop_year(Index t) const {
  if (t < 0 || t >= n_years()) throw InvalidArgument("drop_year: index out of range");
  GridDataset d = *this;
  const Index T = n_years();
  d.years.erase(d.years.begin() + t);
  d.forecast.resize(n_cells(), T - 1);
  d.observation.resize(n_cells(), T - 1);
  d.forecast << forecast.leftCols(t), forecast.rightCols(T - 1 - t);
  d.observation << observation.leftCols(t), observation.rightCols(T - 1 - t);
  return d;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct Row {
  double lat, lon;
  int year;
  double f, y;
  long line;
};

}  // namespace

GridDataset ingest_stream(std::istream& in, const IngestOptions& options) {
  const std::vector<CsvRow> raw = read_csv(in, {"lat", "lon", "year", "forecast", "observation"});

  std::set<int> declared;
  if (options.years) declared.insert(options.years->begin(), options.years->end());
  std::vector<Row> rows;
  std::map<std::tuple<double, double, int>, long> seen;
  for (const CsvRow& row : raw) {
    const auto& f = row.fields;
    const long ln = row.line;
    Row r{parse_double(f[0], ln, "lat"), parse_double(f[1], ln, "lon"), parse_int(f[2], ln, "year"),
          parse_double(f[3], ln, "forecast"), parse_double(f[4], ln, "observation"), ln};
    if (options.years && !declared.count(r.year)) {
      throw IngestError(ln, "year " + std::to_string(r.year) + " is outside the declared set");
    }
    const auto key = std::make_tuple(r.lat, r.lon, r.year);
    const auto [it, inserted] = seen.emplace(key, ln);
    if (!inserted) {
      throw IngestError(ln, "duplicate row for lat " + format_double(r.lat) + ", lon " + format_double(r.lon) +
                                ", year " + std::to_string(r.year) + " (first seen on line " +
                                std::to_string(it->second) + ")");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw IngestError(0, "no data rows");

  std::set<double> lats, lons;
  std::map<int, std::pair<Index, long>> year_rows;  // count, first line
  for (const auto& r : rows) {
    lats.insert(r.lat);
    lons.insert(r.lon);
    auto& e = year_rows.try_emplace(r.year, 0, r.line).first->second;
    ++e.first;
  }
  GridDataset ds;
  ds.n1 = static_cast<Index>(lons.size());
  ds.n2 = static_cast<Index>(lats.size());
  const Index N = ds.n1 * ds.n2;
  if (options.years) {
    ds.years.assign(declared.begin(), declared.end());
  } else {
    for (const auto& [y, e] : year_rows) ds.years.push_back(y);
  }
  // A year carried by at most half the cells is a stray row, not a gap.
  if (!options.years) {
    for (const auto& [y, e] : year_rows) {
      if (N > 1 && 2 * e.first <= N) {
        throw IngestError(e.second, "year " + std::to_string(y) + " appears for only " + std::to_string(e.first) +
                                        " of " + std::to_string(N) + " cells");
      }
    }
  }
  const std::vector<double> lat_v(lats.begin(), lats.end());
  const std::vector<double> lon_v(lons.begin(), lons.end());
  std::map<int, Index> year_index;
  for (std::size_t t = 0; t < ds.years.size(); ++t) year_index[ds.years[t]] = static_cast<Index>(t);
  const Index T = ds.n_years();
  ds.forecast = Mat::Constant(N, T, std::nan(""));
  ds.observation = Mat::Constant(N, T, std::nan(""));
  ds.lat.resize(N);
  ds.lon.resize(N);
  for (Index i2 = 0; i2 < ds.n2; ++i2) {
    for (Index i1 = 0; i1 < ds.n1; ++i1) {
      ds.lat[i1 + ds.n1 * i2] = lat_v[static_cast<std::size_t>(i2)];
      ds.lon[i1 + ds.n1 * i2] = lon_v[static_cast<std::size_t>(i1)];
    }
  }
  for (const auto& r : rows) {
    const Index i1 = std::lower_bound(lon_v.begin(), lon_v.end(), r.lon) - lon_v.begin();
    const Index i2 = std::lower_bound(lat_v.begin(), lat_v.end(), r.lat) - lat_v.begin();
    const Index t = year_index.at(r.year);
    ds.forecast(i1 + ds.n1 * i2, t) = r.f;
    ds.observation(i1 + ds.n1 * i2, t) = r.y;
  }
  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < N; ++i) {
      if (std::isnan(ds.forecast(i, t))) {
        throw IngestError(0, "missing cell: lat " + format_double(ds.lat[i]) + ", lon " + format_double(ds.lon[i]) +
                                 ", year " + std::to_string(ds.years[static_cast<std::size_t>(t)]));
      }
    }
  }
  if (T < 4) throw IngestError(0, "need at least 4 years, found " + std::to_string(T));
  ds.validate();
  return ds;
}

GridDataset ingest(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return ingest_stream(in, options);
}

void write_grid_stream(const GridDataset& ds, std::ostream& out) {
  ds.validate();
  out << "lat,lon,year,forecast,observation\n";
  for (Index t = 0; t < ds.n_years(); ++t) {
    for (Index i = 0; i < ds.n_cells(); ++i) {
      out << format_double(ds.lat[i]) << ',' << format_double(ds.lon[i]) << ','
          << ds.years[static_cast<std::size_t>(t)] << ',' << format_double(ds.forecast(i, t)) << ','
          << format_double(ds.observation(i, t)) << '\n';
    }
  }
}

void write_grid_csv(const GridDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  write_grid_stream(ds, out);
}

// ---------------------------------------------------------------------------

GridDataset synth_grid(Index n1, Index n2, Index years, const SynthTruth& truth, Rng& rng) {
  if (n1 < 1 || n2 < 1 || n1 * n2 < 2) throw InvalidArgument("synth_grid: need at least 2 cells");
  if (years < 4) throw InvalidArgument("synth_grid: need at least 4 years");
  for (double s : truth.sigma) {
    if (!(s >= 0.0)) throw InvalidArgument("synth_grid: sigmas must be >= 0");
  }
  const Index N = n1 * n2;
  const double level[3] = {truth.alpha0, truth.beta0, truth.tau0};
  Vec field[3];
  for (int k = 0; k < 3; ++k) {
    const double su = truth.sigma[static_cast<std::size_t>(2 * k)];
    const double se = truth.sigma[static_cast<std::size_t>(2 * k + 1)];
    field[k] = Vec::Constant(N, level[k]);
    if (su > 0.0) field[k] += sample_igmrf_lattice(n1, n2, su, rng);
    field[k] += se * standard_normal_vector(N, rng);
  }
  GridDataset ds;
  ds.n1 = n1;
  ds.n2 = n2;
  for (Index t = 0; t < years; ++t) ds.years.push_back(2000 + static_cast<int>(t));
  ds.lat.resize(N);
  ds.lon.resize(N);
  for (Index i2 = 0; i2 < n2; ++i2) {
    for (Index i1 = 0; i1 < n1; ++i1) {
      ds.lat[i1 + n1 * i2] = 50.0 + static_cast<double>(i2);
      ds.lon[i1 + n1 * i2] = 10.0 + static_cast<double>(i1);
    }
  }
  ds.forecast.resize(N, years);
  for (Index t = 0; t < years; ++t) ds.forecast.col(t) = standard_normal_vector(N, rng);
  ds.observation.resize(N, years);
  const Vec fbar = ds.forecast.rowwise().mean();
  for (Index t = 0; t < years; ++t) {
    const Vec z = standard_normal_vector(N, rng);
    for (Index i = 0; i < N; ++i) {
      ds.observation(i, t) = field[0][i] + field[1][i] * (ds.forecast(i, t) - fbar[i]) + std::exp(0.5 * field[2][i]) * z[i];
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Prediction

Scheme parse_scheme(const std::string& s) {
  if (s == "clim") return Scheme::Clim;
  if (s == "mle") return Scheme::Mle;
  if (s == "spat1") return Scheme::Spat1;
  if (s == "spat2") return Scheme::Spat2;
  throw InvalidArgument("unknown scheme '" + s + "' (expected clim, mle, spat1 or spat2)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Clim:
      return "clim";
    case Scheme::Mle:
      return "mle";
    case Scheme::Spat1:
      return "spat1";
    case Scheme::Spat2:
      return "spat2";
  }
  return "";
}

FoldFailure::FoldFailure(int year, const std::string& reason)
    : Error("fold " + std::to_string(year) + ": " + reason), year_(year) {}

std::uint64_t fold_seed(std::uint64_t seed, int year) {
  return derive_seed(seed, streams::kFoldBase + static_cast<std::uint64_t>(static_cast<std::int64_t>(year)));
}

namespace {

Mat predict_spat(const GridDataset& train, const Vec& f_new, Flavor flavor, const PredictOptions& opt, Rng& rng) {
  const Index N = train.n_cells();
  const Index S = opt.samples;
  ModelSpec spec;
  spec.family = Family::LinregLattice;
  spec.n1 = train.n1;
  spec.n2 = train.n2;
  spec.replicates = train.n_years();
  spec.flavor = flavor;
  Observations obs;
  obs.y = train.observation;
  obs.f = train.forecast;
  const PseudoModel m = build_pseudo(spec, obs, flavor);

  // Independent 1-D grids per hyperparameter, centred at the joint mode.
  const LogTarget target = [&m](const Vec& k) { return kappa_log_target(m, k); };
  const Index d = m.dim_theta();
  std::vector<std::vector<Index>> singles;
  for (Index j = 0; j < d; ++j) singles.push_back({j});
  const ModeResult mode = find_mode(target, m.initial_theta().array().log().matrix(), m.blocks());
  GridSettings gs;
  gs.points = opt.grid_points;
  const std::vector<Vec> axes = laplace_axes(mode, singles, gs);
  ThetaDraws th = grid_sample(target, singles, axes, mode.mode, S, rng);
  th.theta = th.theta.array().exp().matrix();

  const Vec fbar = train.forecast.rowwise().mean();
  const Vec df = f_new - fbar;
  Mat out(N, S);
  std::normal_distribution<double> z(0.0, 1.0);
  // Latent draws and observation noise come from separate streams so the
  // latent sequence does not depend on how noise is consumed.
  Rng noise(rng());
  sample_latent(m, th, rng, [&](Index s, const Vec& x) {
    for (Index i = 0; i < N; ++i) {
      out(i, s) = x[i] + x[N + i] * df[i] + std::exp(0.5 * x[2 * N + i]) * z(noise);
    }
  });
  return out;
}

}  // namespace

Mat predict_year(const GridDataset& train, const Vec& f_new, Scheme scheme, const PredictOptions& opt, Rng& rng) {
  const Index N = train.n_cells();
  const Index T = train.n_years();
  const Index S = opt.samples;
  if (S < 1) throw InvalidArgument("predict_year: samples must be >= 1");
  if (f_new.size() != N) throw DimensionMismatch("predict_year: f_new must have one entry per cell");
  if (T < 3) throw InvalidArgument("predict_year: need at least 3 training years");
  std::normal_distribution<double> z(0.0, 1.0);
  Mat out(N, S);
  switch (scheme) {
    case Scheme::Clim: {
      for (Index i = 0; i < N; ++i) {
        const Vec y = train.observation.row(i).transpose();
        const double m = y.mean();
        const double s = std::sqrt((y.array() - m).square().sum() / static_cast<double>(T - 1));
        for (Index k = 0; k < S; ++k) out(i, k) = m + s * z(rng);
      }
      break;
    }
    case Scheme::Mle: {
      std::student_t_distribution<double> td(static_cast<double>(T - 2));
      for (Index i = 0; i < N; ++i) {
        const Vec f = train.forecast.row(i).transpose();
        const Vec y = train.observation.row(i).transpose();
        const double fb = f.mean();
        const double yb = y.mean();
        const Vec fc = f.array() - fb;
        const double sxx = fc.squaredNorm();
        if (!(sxx > 0.0)) throw InvalidArgument("predict_year: constant forecast in cell " + std::to_string(i));
        const double beta = fc.dot(y.array().matrix() - Vec::Constant(T, yb)) / sxx;
        const double rss = (y.array() - yb - beta * fc.array()).square().sum();
        const double mean = yb + beta * (f_new[i] - fb);
        if (opt.mle_t_predictive) {
          const double s2 = rss / static_cast<double>(T - 2);
          const double scale = std::sqrt(s2 * (1.0 + 1.0 / static_cast<double>(T) +
                                               std::pow(f_new[i] - fb, 2) / sxx));
          for (Index k = 0; k < S; ++k) out(i, k) = mean + scale * td(rng);
        } else {
          const double sd = std::sqrt(rss / static_cast<double>(T));
          for (Index k = 0; k < S; ++k) out(i, k) = mean + sd * z(rng);
        }
      }
      break;
    }
    case Scheme::Spat1:
      return predict_spat(train, f_new, Flavor::ModeCurvature, opt, rng);
    case Scheme::Spat2:
      return predict_spat(train, f_new, Flavor::MomentMatch, opt, rng);
  }
  return out;
}

PredictiveSamples loyo_fit_predict(const GridDataset& ds, Scheme scheme, const PredictOptions& opt,
                                   std::uint64_t seed) {
  ds.validate();
  const Index N = ds.n_cells();
  const Index T = ds.n_years();
  PredictiveSamples out;
  out.N = N;
  out.T = T;
  out.S = opt.samples;
  out.values.assign(static_cast<std::size_t>(N * T * opt.samples), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(T));
  parallel_for(static_cast<std::size_t>(T), [&](std::size_t tu) {
    const auto t = static_cast<Index>(tu);
    const int year = ds.years[tu];
    try {
      Rng rng(fold_seed(seed, year));
      const Mat draws = predict_year(ds.drop_year(t), ds.forecast.col(t), scheme, opt, rng);
      for (Index i = 0; i < N; ++i) {
        double* c = out.cell(i, t);
        for (Index s = 0; s < opt.samples; ++s) c[s] = draws(i, s);
      }
    } catch (const Error& e) {
      errors[tu] = e.what();
    }
  });
  for (Index t = 0; t < T; ++t) {
    if (!errors[static_cast<std::size_t>(t)].empty()) {
      throw FoldFailure(ds.years[static_cast<std::size_t>(t)], errors[static_cast<std::size_t>(t)]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores

double crps(std::span<const double> samples, double y) {
  const std::size_t S = samples.size();
  if (S == 0) throw InvalidArgument("crps: no samples");
  double a = 0.0;
  for (double x : samples) a += std::abs(y - x);
  double b = 0.0;
  if (S <= 2000) {
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t j = 0; j < S; ++j) b += std::abs(samples[i] - samples[j]);
    }
  } else {
    // ΣΣ|x_i - x_j| = 2 Σ_k (2k - S - 1) x_(k) over the sorted sample.
    std::vector<double> v(samples.begin(), samples.end());
    std::sort(v.begin(), v.end());
    for (std::size_t k = 0; k < S; ++k) {
      b += 2.0 * (2.0 * static_cast<double>(k + 1) - static_cast<double>(S) - 1.0) * v[k];
    }
  }
  const double s = static_cast<double>(S);
  return a / s - b / (2.0 * s * s);
}

SchemeScores score(const PredictiveSamples& pred, const GridDataset& ds, const std::string& scheme) {
  ds.validate();
  if (pred.N != ds.n_cells() || pred.T != ds.n_years()) throw DimensionMismatch("score: shape mismatch");
  if (pred.S < 1 || pred.values.size() != static_cast<std::size_t>(pred.N * pred.T * pred.S)) {
    throw DimensionMismatch("score: sample array has the wrong size");
  }
  SchemeScores r;
  r.scheme = scheme;
  r.crps_cells.resize(pred.N, pred.T);
  std::vector<double> v(static_cast<std::size_t>(pred.S));
  double n = 0.0;
  for (Index t = 0; t < pred.T; ++t) {
    for (Index i = 0; i < pred.N; ++i) {
      const double* c = pred.cell(i, t);
      const double y = ds.observation(i, t);
      v.assign(c, c + pred.S);
      const double m = mean(v);
      const double cr = crps(v, y);
      std::sort(v.begin(), v.end());
      r.mse += (m - y) * (m - y);
      r.crps += cr;
      r.crps_cells(i, t) = cr;
      r.w95 += quantile_sorted(v, 0.975) - quantile_sorted(v, 0.025);
      r.cov05 += y < quantile_sorted(v, 0.05) ? 1.0 : 0.0;
      r.cov50 += y < quantile_sorted(v, 0.50) ? 1.0 : 0.0;
      r.cov95 += y < quantile_sorted(v, 0.95) ? 1.0 : 0.0;
      n += 1.0;
    }
  }
  r.mse /= n;
  r.crps /= n;
  r.w95 /= n;
  r.cov05 /= n;
  r.cov50 /= n;
  r.cov95 /= n;
  return r;
}

std::pair<Index, Index> block_tiling(Index n1, Index n2, Index n_blocks) {
  if (n_blocks < 1) throw InvalidArgument("block_tiling: need at least one block");
  if (n_blocks > n1 * n2) throw InvalidArgument("block_tiling: more blocks than cells");
  std::pair<Index, Index> best{0, 0};
  double best_cost = std::numeric_limits<double>::infinity();
  for (Index b1 = 1; b1 <= n_blocks; ++b1) {
    if (n_blocks % b1 != 0) continue;
    const Index b2 = n_blocks / b1;
    if (b1 > n1 || b2 > n2) continue;
    // Aspect ratio of a block, on the log scale.
    const double cost = std::abs(std::log((static_cast<double>(n1) / b1) / (static_cast<double>(n2) / b2)));
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best = {b1, b2};
    }
  }
  if (best.first == 0) {
    throw InvalidArgument("block_tiling: " + std::to_string(n_blocks) + " blocks do not tile a " +
                          std::to_string(n1) + " x " + std::to_string(n2) + " grid");
  }
  return best;
}

BootstrapResult block_bootstrap_crps_diff(const Mat& crps_a, const Mat& crps_b, Index n1, Index n2,
                                          Index n_blocks, Index replicates, Rng& rng) {
  if (crps_a.rows() != n1 * n2 || crps_b.rows() != crps_a.rows() || crps_b.cols() != crps_a.cols()) {
    throw DimensionMismatch("block_bootstrap_crps_diff: score matrices must both be N x T");
  }
  if (replicates < 1) throw InvalidArgument("block_bootstrap_crps_diff: replicates must be >= 1");
  const auto [b1, b2] = block_tiling(n1, n2, n_blocks);
  const Index T = crps_a.cols();
  auto edges = [](Index n, Index b) {
    std::vector<Index> e(static_cast<std::size_t>(b + 1));
    for (Index k = 0; k <= b; ++k) {
      e[static_cast<std::size_t>(k)] = static_cast<Index>(std::llround(static_cast<double>(k * n) / static_cast<double>(b)));
    }
    return e;
  };
  const auto e1 = edges(n1, b1);
  const auto e2 = edges(n2, b2);
  const Mat d = crps_a - crps_b;
  std::vector<double> block_means;
  for (Index t = 0; t < T; ++t) {
    for (Index k2 = 0; k2 < b2; ++k2) {
      for (Index k1 = 0; k1 < b1; ++k1) {
        double s = 0.0;
        Index c = 0;
        for (Index i2 = e2[static_cast<std::size_t>(k2)]; i2 < e2[static_cast<std::size_t>(k2 + 1)]; ++i2) {
          for (Index i1 = e1[static_cast<std::size_t>(k1)]; i1 < e1[static_cast<std::size_t>(k1 + 1)]; ++i1) {
            s += d(i1 + n1 * i2, t);
            ++c;
          }
        }
        block_means.push_back(s / static_cast<double>(c));
      }
    }
  }
  const std::size_t K = block_means.size();
  std::uniform_int_distribution<std::size_t> pick(0, K - 1);
  std::vector<double> reps(static_cast<std::size_t>(replicates));
  double below = 0.0;
  for (auto& r : reps) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += block_means[pick(rng)];
    r = s / static_cast<double>(K);
    if (r < 0.0) below += 1.0;
    if (r == 0.0) below += 0.5;
  }
  BootstrapResult out;
  out.mean = mean(reps);
  out.sd = replicates > 1 ? sample_sd(reps) : 0.0;
  out.p_value = below / static_cast<double>(replicates);
  out.blocks_1 = b1;
  out.blocks_2 = b2;
  return out;
}

}  // namespace maxsmooth
