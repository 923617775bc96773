#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "maxsmooth/sparse.hpp"

namespace maxsmooth::cli {

inline constexpr const char* kVersion = "1.0.0";

struct SimulateOptions {
  std::string model;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct FitOptions {
  std::string model;
  std::string data;
  std::string config;
  std::string flavor;  // empty: use the config's flavor
  std::string sampler = "grid";
  Index samples = 10000;
  std::string out;
  std::uint64_t seed = 1;
  bool full_draws = false;
  bool dump_density = false;
};

struct BenchOptions {
  std::string out;
  bool quick = false;
  std::optional<Index> samples;
  int repeats = 1;
  std::uint64_t seed = 1;
};

struct ForecastOptions {
  std::string data;
  std::string scheme = "all";
  Index samples = 1000;
  Index blocks = 10;
  Index replicates = 500;
  std::string out;
  std::uint64_t seed = 1;
  bool t_predictive = false;
  bool write_samples = false;
};

struct SynthOptions {
  Index n1 = 10;
  Index n2 = 10;
  Index years = 12;
  double alpha0 = 0.0;
  double beta0 = 0.7;
  double tau0 = -0.7;
  std::string out;
  std::uint64_t seed = 1;
};

// Each returns the process exit code; errors propagate as exceptions.
int run_simulate(const SimulateOptions& o, std::ostream& log);
int run_fit(const FitOptions& o, std::ostream& log);
int run_bench(const BenchOptions& o, std::ostream& log);
int run_forecast(const ForecastOptions& o, std::ostream& log);
int run_synth_grid(const SynthOptions& o, std::ostream& log);

// 64-bit FNV-1a, used for the content hashes recorded in manifests.
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace maxsmooth::cli
