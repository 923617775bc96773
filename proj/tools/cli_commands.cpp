#include "cli_commands.hpp"

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "maxsmooth/csv.hpp"
#include "maxsmooth/exact_ref.hpp"
#include "maxsmooth/forecast.hpp"
#include "maxsmooth/models.hpp"
#include "maxsmooth/parallel.hpp"
#include "maxsmooth/rng.hpp"
#include "maxsmooth/stats.hpp"

namespace maxsmooth::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
  }
}

fs::path prepare_dir(const std::string& out) {
  if (out.empty()) throw InvalidArgument("--out is required");
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InvalidArgument("cannot create output directory '" + out + "': " + ec.message());
  return p;
}

// Writes a file and records its content hash.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + p.string() + "'");
    hashes_[name] = hex64(fnv1a(content));
  }

  json hashes() const { return hashes_; }

  // Manifest with a hash over everything except the timings block, so two
  // runs with the same inputs and seed report the same manifest hash.
  void write_manifest(json manifest, const json& timings) {
    manifest["outputs"] = hashes_;
    manifest["manifest_hash"] = hex64(fnv1a(manifest.dump()));
    manifest["timings_seconds"] = timings;
    write("run_manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  json hashes_ = json::object();
};

json base_manifest(const std::string& command, std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["seed"] = seed;
  m["versions"] = {{"maxsmooth", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  return m;
}

Family family_or_config(const std::string& model, const json& cfg) {
  if (!model.empty()) return parse_family(model);
  if (cfg.contains("family") && cfg["family"].is_string()) return parse_family(cfg["family"].get<std::string>());
  throw InvalidArgument("--model is required when the config does not name a family");
}

}  // namespace

// ---------------------------------------------------------------------------

int run_simulate(const SimulateOptions& o, std::ostream& log) {
  const json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
  const Family fam = family_or_config(o.model, cfg);
  ModelSpec spec = spec_from_json(cfg, fam);
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  const fs::path dir = prepare_dir(o.out);

  Rng rng = make_rng(spec.seed, streams::kSimulate);
  const Simulation sim = simulate(spec, rng);

  OutputSet files(dir);
  std::ostringstream obs, truth;
  write_observations_csv(spec, sim.obs, obs);
  write_truth_csv(sim.truth, truth);
  files.write("observations.csv", obs.str());
  files.write("truth.csv", truth.str());
  files.write("resolved_config.json", spec_to_json(spec).dump(2) + "\n");
  log << "simulated " << family_name(spec.family) << " into " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

namespace {

void write_theta_density(const PseudoModel& m, OutputSet& files) {
  const LogTarget target = [&](const Vec& k) { return kappa_log_target(m, k); };
  const ModeResult mode = find_mode(target, m.initial_theta().array().log().matrix(), m.blocks());
  std::vector<std::vector<Index>> singles;
  for (Index j = 0; j < m.dim_theta(); ++j) singles.push_back({j});
  const std::vector<Vec> axes = laplace_axes(mode, singles, GridSettings{});
  std::ostringstream os;
  os << "param,kappa,theta,log_density\n";
  for (Index j = 0; j < m.dim_theta(); ++j) {
    const Vec& ax = axes[static_cast<std::size_t>(j)];
    std::vector<double> lp(static_cast<std::size_t>(ax.size()));
    for (Index a = 0; a < ax.size(); ++a) {
      Vec k = mode.mode;
      k[j] = ax[a];
      lp[static_cast<std::size_t>(a)] = target(k);
    }
    // Normalised as a density in κ on the grid (trapezoid rule).
    double mass = 0.0;
    const double peak = *std::max_element(lp.begin(), lp.end());
    for (Index a = 1; a < ax.size(); ++a) {
      mass += 0.5 * (ax[a] - ax[a - 1]) *
              (std::exp(lp[static_cast<std::size_t>(a)] - peak) + std::exp(lp[static_cast<std::size_t>(a - 1)] - peak));
    }
    const double lognorm = peak + std::log(mass);
    for (Index a = 0; a < ax.size(); ++a) {
      os << m.theta[static_cast<std::size_t>(j)].name << ',' << format_double(ax[a]) << ','
         << format_double(std::exp(ax[a])) << ',' << format_double(lp[static_cast<std::size_t>(a)] - lognorm) << '\n';
    }
  }
  files.write("theta_density.csv", os.str());
}

std::string coordinate_label(const std::vector<NamedRange>& names, Index c, Index* local = nullptr) {
  for (const auto& nr : names) {
    if (c >= nr.start && c < nr.start + nr.size) {
      if (local) *local = c - nr.start;
      return nr.name;
    }
  }
  if (local) *local = c;
  return "x";
}

}  // namespace

int run_fit(const FitOptions& o, std::ostream& log) {
  json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
  const Family fam = family_or_config(o.model, cfg);
  if (o.samples < 0) throw InvalidArgument("--samples must be >= 0");
  const Sampler sampler = parse_sampler(o.sampler);

  // Dimensions come from the data; everything else from the config.
  ModelSpec dims;
  dims.family = fam;
  std::ifstream in(o.data);
  if (!in) throw InvalidArgument("cannot open '" + o.data + "'");
  const Observations obs = read_observations_csv(in, dims);
  const std::string data_bytes = read_file(o.data);
  cfg.erase("family");
  cfg["n1"] = dims.n1;
  cfg["n2"] = dims.n2;
  cfg["T_time"] = dims.t_time;
  cfg["replicates"] = dims.replicates;
  cfg["p"] = dims.p;
  ModelSpec spec = spec_from_json(cfg, fam);
  if (!o.flavor.empty()) spec.flavor = parse_flavor(o.flavor);
  spec.seed = o.seed;
  const fs::path dir = prepare_dir(o.out);
  OutputSet files(dir);

  json manifest = base_manifest("fit", o.seed);
  manifest["family"] = family_name(fam);
  manifest["data"] = o.data;
  manifest["data_hash"] = hex64(fnv1a(data_bytes));
  manifest["config"] = spec_to_json(spec);
  manifest["flavor"] = flavor_name(spec.flavor);
  manifest["sampler"] = o.sampler;
  manifest["samples"] = o.samples;
  manifest["full_draws"] = o.full_draws;
  json timings;

  auto t0 = Clock::now();
  const PseudoModel m = build_pseudo(spec, obs, spec.flavor);
  timings["build_pseudo"] = seconds_since(t0);
  manifest["dims"] = {{"eta", m.dim_eta()}, {"nu", m.dim_nu()}, {"theta", m.dim_theta()}};

  if (o.samples == 0) {
    // Validation only: the marginal of θ must not depend on the latent point.
    Rng rng = make_rng(o.seed, streams::kTheta);
    const Vec th = m.initial_theta();
    const double ref = theta_log_marginal_at(m, th, Vec::Zero(m.dim_system()));
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const double v = theta_log_marginal_at(m, th, standard_normal_vector(m.dim_system(), rng));
      worst = std::max(worst, std::abs(v - ref));
    }
    const bool ok = worst < 1e-8 * std::max(1.0, std::abs(ref));
    manifest["validation_only"] = true;
    manifest["ratio_identity_max_abs_diff"] = worst;
    manifest["ratio_identity_ok"] = ok;
    files.write_manifest(manifest, timings);
    log << "pseudo model built: dim η " << m.dim_eta() << ", dim ν " << m.dim_nu() << "; ratio identity max |Δ| "
        << worst << (ok ? " (ok)" : " (FAILED)") << "\n";
    return ok ? 0 : 1;
  }

  Rng rng = make_rng(o.seed, streams::kTheta);
  t0 = Clock::now();
  const ThetaDraws th = sampler == Sampler::Grid ? grid_sample_theta(m, o.samples, rng)
                                                 : metropolis_sample_theta(m, o.samples, -1, rng);
  timings["theta"] = seconds_since(t0);
  Rng lrng = make_rng(o.seed, streams::kLatent);
  t0 = Clock::now();
  const LatentDraws lat = sample_latent(m, th, lrng);
  timings["latent"] = seconds_since(t0);

  std::ostringstream tcsv;
  for (Index j = 0; j < m.dim_theta(); ++j) tcsv << (j ? "," : "") << m.theta[static_cast<std::size_t>(j)].name;
  tcsv << '\n';
  for (Index s = 0; s < th.theta.rows(); ++s) {
    for (Index j = 0; j < th.theta.cols(); ++j) tcsv << (j ? "," : "") << format_double(th.theta(s, j));
    tcsv << '\n';
  }
  files.write("theta_draws.csv", tcsv.str());

  const CoordinateSummary sum = summarize_columns(lat.x);
  std::ostringstream scsv;
  scsv << "name,index,mean,sd,q025,q975\n";
  for (Index c = 0; c < lat.x.cols(); ++c) {
    Index local = 0;
    const std::string name = coordinate_label(lat.names, c, &local);
    scsv << name << ',' << local << ',' << format_double(sum.mean[c]) << ',' << format_double(sum.sd[c]) << ','
         << format_double(sum.q025[c]) << ',' << format_double(sum.q975[c]) << '\n';
  }
  files.write("latent_summary.csv", scsv.str());

  if (o.full_draws) {
    std::ostringstream d;
    for (Index c = 0; c < lat.x.cols(); ++c) {
      Index local = 0;
      const std::string name = coordinate_label(lat.names, c, &local);
      d << (c ? "," : "") << name << '[' << local << ']';
    }
    d << '\n';
    for (Index s = 0; s < lat.x.rows(); ++s) {
      for (Index c = 0; c < lat.x.cols(); ++c) d << (c ? "," : "") << format_double(lat.x(s, c));
      d << '\n';
    }
    files.write("latent_draws.csv", d.str());
  }
  if (o.dump_density) write_theta_density(m, files);

  json diag;
  diag["method"] = th.method;
  if (sampler == Sampler::Metropolis) diag["acceptance_rate"] = th.acceptance_rate;
  json tsum = json::object();
  for (Index j = 0; j < m.dim_theta(); ++j) {
    std::vector<double> col(static_cast<std::size_t>(th.theta.rows()));
    for (Index s = 0; s < th.theta.rows(); ++s) col[static_cast<std::size_t>(s)] = th.theta(s, j);
    tsum[m.theta[static_cast<std::size_t>(j)].name] = {{"mean", mean(col)}, {"sd", sample_sd(col)}};
  }
  manifest["theta_summary"] = tsum;
  manifest["diagnostics"] = diag;
  files.write_manifest(manifest, timings);
  log << "fit " << family_name(fam) << ": " << o.samples << " draws written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_bench(const BenchOptions& o, std::ostream& log) {
  if (o.out.empty()) throw InvalidArgument("--out is required");
  BenchConfig cfg = o.quick ? quick_bench_config() : BenchConfig{};
  if (o.samples) cfg.samples = *o.samples;
  if (o.repeats < 1) throw InvalidArgument("--repeats must be >= 1");
  if (!o.quick || o.repeats > 1) cfg.repeats = o.repeats;
  cfg.seed = o.seed;
  const auto rows = timing_benchmark(cfg, [&](const BenchRow& r) {
    log << r.n_lattice << " cells, T=" << r.t_reps << ", " << r.method << ": " << r.seconds_per_10k
        << " s per 1e4 draws\n";
  });
  const fs::path p(o.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw InvalidArgument("cannot write '" + o.out + "'");
  write_bench_csv(out, rows);
  return 0;
}

// ---------------------------------------------------------------------------

int run_forecast(const ForecastOptions& o, std::ostream& log) {
  const GridDataset ds = ingest(o.data);
  std::vector<Scheme> schemes;
  if (o.scheme == "all") {
    schemes = {Scheme::Clim, Scheme::Mle, Scheme::Spat1, Scheme::Spat2};
  } else {
    schemes = {parse_scheme(o.scheme)};
  }
  if (o.samples < 1) throw InvalidArgument("--samples must be >= 1");
  // Checked up front so a bad block count fails before any fitting.
  const auto tiling = block_tiling(ds.n1, ds.n2, o.blocks);
  const fs::path dir = prepare_dir(o.out);
  OutputSet files(dir);
  PredictOptions popt;
  popt.samples = o.samples;
  popt.mle_t_predictive = o.t_predictive;

  json timings;
  json scores = json::array();
  std::vector<SchemeScores> all;
  for (Scheme sc : schemes) {
    const auto t0 = Clock::now();
    const PredictiveSamples pred = loyo_fit_predict(ds, sc, popt, o.seed);
    timings[scheme_name(sc)] = seconds_since(t0);
    SchemeScores s = score(pred, ds, scheme_name(sc));
    log << scheme_name(sc) << ": MSE " << s.mse << ", CRPS " << s.crps << ", W95 " << s.w95 << "\n";
    scores.push_back({{"scheme", s.scheme},
                      {"mse", s.mse},
                      {"crps", s.crps},
                      {"w95", s.w95},
                      {"cov05", s.cov05},
                      {"cov50", s.cov50},
                      {"cov95", s.cov95}});
    if (o.write_samples) {
      std::ostringstream os;
      os << "cell_index,year,sample_index,value\n";
      for (Index t = 0; t < pred.T; ++t) {
        for (Index i = 0; i < pred.N; ++i) {
          const double* v = pred.cell(i, t);
          for (Index k = 0; k < pred.S; ++k) {
            os << i << ',' << ds.years[static_cast<std::size_t>(t)] << ',' << k << ',' << format_double(v[k]) << '\n';
          }
        }
      }
      files.write(schemes.size() == 1 ? "predictive_samples.csv" : "predictive_samples_" + scheme_name(sc) + ".csv",
                  os.str());
    }
    all.push_back(std::move(s));
  }

  json report;
  report["n1"] = ds.n1;
  report["n2"] = ds.n2;
  report["years"] = ds.years;
  report["samples"] = o.samples;
  report["seed"] = o.seed;
  report["schemes"] = scores;
  files.write("scores.json", report.dump(2) + "\n");

  // Every ordered pair (earlier scheme minus later scheme); a positive mean
  // favours the later scheme.
  json comps = json::array();
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      const auto ia = static_cast<std::uint64_t>(schemes[a]);
      const auto ib = static_cast<std::uint64_t>(schemes[b]);
      Rng rng = make_rng(derive_seed(o.seed, streams::kBootstrap), 16 * ia + ib);
      const BootstrapResult r =
          block_bootstrap_crps_diff(all[a].crps_cells, all[b].crps_cells, ds.n1, ds.n2, o.blocks, o.replicates, rng);
      comps.push_back({{"a", all[a].scheme}, {"b", all[b].scheme}, {"mean", r.mean}, {"sd", r.sd}, {"p_value", r.p_value}});
    }
  }
  json boot;
  boot["blocks"] = o.blocks;
  boot["tiling"] = {tiling.first, tiling.second};
  boot["replicates"] = o.replicates;
  boot["comparisons"] = comps;
  files.write("bootstrap.json", boot.dump(2) + "\n");

  json manifest = base_manifest("forecast", o.seed);
  manifest["data"] = o.data;
  manifest["data_hash"] = hex64(fnv1a(read_file(o.data)));
  manifest["scheme"] = o.scheme;
  manifest["samples"] = o.samples;
  manifest["blocks"] = o.blocks;
  manifest["replicates"] = o.replicates;
  manifest["t_predictive"] = o.t_predictive;
  files.write_manifest(manifest, timings);
  return 0;
}

int run_synth_grid(const SynthOptions& o, std::ostream& log) {
  if (o.out.empty()) throw InvalidArgument("--out is required");
  SynthTruth t;
  t.alpha0 = o.alpha0;
  t.beta0 = o.beta0;
  t.tau0 = o.tau0;
  Rng rng = make_rng(o.seed, streams::kSimulate);
  const GridDataset ds = synth_grid(o.n1, o.n2, o.years, t, rng);
  const fs::path p(o.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_grid_csv(ds, o.out);
  log << "wrote " << ds.n_cells() << " cells x " << ds.n_years() << " years to " << o.out << "\n";
  return 0;
}

}  // namespace maxsmooth::cli
