#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "cli_commands.hpp"
#include "maxsmooth/forecast.hpp"
#include "maxsmooth/models.hpp"
#include "maxsmooth/parallel.hpp"

using namespace maxsmooth;

namespace {

constexpr int kNumericFailure = 1;
constexpr int kUsageError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Max-and-Smooth approximate inference for extended latent Gaussian models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: MAXSMOOTH_THREADS or all cores)");

  cli::SimulateOptions sim;
  std::uint64_t sim_seed = 0;
  auto* s = app.add_subcommand("simulate", "Simulate a dataset from a model spec");
  s->add_option("--model", sim.model, "logvar-lattice, linreg-lattice, treg-time or poisson-spacetime");
  s->add_option("--config", sim.config, "Model spec JSON")->check(CLI::ExistingFile);
  s->add_option("--out", sim.out, "Output directory")->required();
  auto* sim_seed_opt = s->add_option("--seed", sim_seed, "Root seed (overrides the config)");

  cli::FitOptions fit;
  auto* f = app.add_subcommand("fit", "Run Max-and-Smooth on an observations CSV");
  f->add_option("--model", fit.model, "Model family")->required();
  f->add_option("--data", fit.data, "Observations CSV")->required()->check(CLI::ExistingFile);
  f->add_option("--config", fit.config, "Model spec JSON (priors; dimensions come from the data)")
      ->check(CLI::ExistingFile);
  f->add_option("--flavor", fit.flavor, "mode or moment")->check(CLI::IsMember({"mode", "moment"}));
  f->add_option("--sampler", fit.sampler, "grid or metropolis")->check(CLI::IsMember({"grid", "metropolis"}));
  f->add_option("--samples", fit.samples, "Posterior draws; 0 builds and checks the model only");
  f->add_option("--out", fit.out, "Output directory")->required();
  f->add_option("--seed", fit.seed, "Root seed");
  f->add_flag("--full-draws", fit.full_draws, "Also write latent_draws.csv");
  f->add_flag("--dump-density", fit.dump_density, "Write grid-evaluated hyperparameter densities");

  cli::BenchOptions bench;
  Index bench_samples = 0;
  auto* b = app.add_subcommand("bench", "Time the exact sampler against Max-and-Smooth");
  b->add_option("--out", bench.out, "Output CSV")->required();
  b->add_flag("--quick", bench.quick, "10x10 and 20x20 lattices, T in {10, 100}");
  auto* bench_samples_opt = b->add_option("--samples", bench_samples, "Draws per timing");
  b->add_option("--repeats", bench.repeats, "Repeats per configuration (minimum is reported)");
  b->add_option("--seed", bench.seed, "Root seed");

  cli::ForecastOptions fc;
  auto* c = app.add_subcommand("forecast", "Leave-one-year-out forecast recalibration and scoring");
  c->add_option("--data", fc.data, "CSV with lat,lon,year,forecast,observation")->required();
  c->add_option("--scheme", fc.scheme, "clim, mle, spat1, spat2 or all")
      ->check(CLI::IsMember({"clim", "mle", "spat1", "spat2", "all"}));
  c->add_option("--samples", fc.samples, "Predictive draws per cell and year");
  c->add_option("--blocks", fc.blocks, "Spatial blocks for the bootstrap");
  c->add_option("--replicates", fc.replicates, "Bootstrap replicates");
  c->add_option("--out", fc.out, "Output directory")->required();
  c->add_option("--seed", fc.seed, "Root seed");
  c->add_flag("--t-predictive", fc.t_predictive, "Student-t predictive for the MLE scheme");
  c->add_flag("--write-samples", fc.write_samples, "Write predictive samples CSV");

  cli::SynthOptions sg;
  auto* g = app.add_subcommand("synth-grid", "Write a synthetic forecast/observation grid");
  g->add_option("--n1", sg.n1, "Longitudes");
  g->add_option("--n2", sg.n2, "Latitudes");
  g->add_option("--years", sg.years, "Years");
  g->add_option("--alpha0", sg.alpha0, "Mean level of alpha");
  g->add_option("--beta0", sg.beta0, "Mean level of beta");
  g->add_option("--tau0", sg.tau0, "Mean level of tau (log variance)");
  g->add_option("--out", sg.out, "Output CSV")->required();
  g->add_option("--seed", sg.seed, "Root seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  if (threads > 0) set_thread_count(threads);
  try {
    if (s->parsed()) {
      if (*sim_seed_opt) sim.seed = sim_seed;
      return cli::run_simulate(sim, std::cerr);
    }
    if (f->parsed()) return cli::run_fit(fit, std::cerr);
    if (b->parsed()) {
      if (*bench_samples_opt) bench.samples = bench_samples;
      return cli::run_bench(bench, std::cerr);
    }
    if (c->parsed()) return cli::run_forecast(fc, std::cerr);
    if (g->parsed()) return cli::run_synth_grid(sg, std::cerr);
  } catch (const SpecError& e) {
    std::cerr << "error: config " << e.what() << "\n";
    return kUsageError;
  } catch (const GroupFailure& e) {
    std::cerr << "error: Max step failed for " << e.group_ids().size() << " group(s):";
    for (Index id : e.group_ids()) std::cerr << ' ' << id;
    std::cerr << "\n  " << e.what() << "\n";
    return kNumericFailure;
  } catch (const FoldFailure& e) {
    std::cerr << "error: fold for year " << e.year() << ": " << e.what() << "\n";
    return kNumericFailure;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericFailure;
  }
  return kUsageError;
}
