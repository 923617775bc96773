#pragma once

#include <json.hpp>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxsmooth/error.hpp"
#include "maxsmooth/max_step.hpp"
#include "maxsmooth/smooth.hpp"

namespace maxsmooth {

enum class Family { LogvarLattice, LinregLattice, TregTime, PoissonSpacetime };

Family parse_family(const std::string& s);  // "logvar-lattice", ...
std::string family_name(Family f);

// A config field failed validation; `pointer` is the JSON pointer of the
// offending field ("" for the document root).
class SpecError : public InvalidArgument {
 public:
  SpecError(std::string pointer, const std::string& message);
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// One or more groups had no usable Max-step approximation.
class GroupFailure : public Error {
 public:
  GroupFailure(std::vector<Index> ids, const std::string& first_reason);
  const std::vector<Index>& group_ids() const { return ids_; }

 private:
  std::vector<Index> ids_;
};

struct ModelSpec {
  Family family = Family::LogvarLattice;
  // Lattice size (logvar, linreg, poisson).
  Index n1 = 10;
  Index n2 = 10;
  // Number of time points (treg, poisson).
  Index t_time = 20;
  // Replicates per group: observations per site (logvar, linreg), per time
  // point (treg, n_t), or counts per site-time cell (poisson).
  Index replicates = 10;
  // Covariates per time point (treg).
  Index p = 1;

  // logvar truth and Gamma(a, rate b) prior on τ.
  double tau = 1.0;
  double tau_shape = 10.0;
  double tau_rate = 10.0;

  // linreg truth: σ_{u,α}, σ_{ε,α}, σ_{u,β}, σ_{ε,β}, σ_{u,τ}, σ_{ε,τ}.
  std::vector<double> linreg_sigma = {0.5, 0.1, 0.2, 0.1, 0.2, 0.1};

  // treg truth: starting values and random-walk sds of (β_1..β_p, τ, φ).
  std::vector<double> treg_start = {10.0, 0.0, 2.0794415416798357};
  std::vector<double> treg_sigma_u = {0.2, 0.05, 0.05};
  double phi_alpha = 2.0;
  double phi_gamma = 0.2;

  // poisson truth and optional log-gamma factor on each η.
  double poisson_u0 = 3.912023005428146;  // log 50
  double poisson_sigma_u = 0.1;
  std::optional<LogGammaPrior> count_prior;
  double poisson_ridge = 1e-6;

  // Rate of the exponential priors on σ hyperparameters (linreg, treg, poisson).
  double exp_rate = 1.0;

  Flavor flavor = Flavor::ModeCurvature;
  std::uint64_t seed = 1;

  Index n_sites() const { return n1 * n2; }
  // Parameters per group (M) and number of groups (G).
  Index group_dim() const;
  Index n_groups() const;
  void validate() const;
};

// Fields not present keep their defaults; `family` is required unless given.
ModelSpec spec_from_json(const nlohmann::json& j, std::optional<Family> family = std::nullopt);
nlohmann::json spec_to_json(const ModelSpec& s);

// Observed data for one simulated or loaded dataset.
//   logvar, linreg: y is N x replicates, row i = site i; linreg adds f.
//   poisson: y is (N·t_time) x replicates of counts, row i + N·t.
//   treg: y_time[t] (length n_t) and x_time[t] (n_t x p).
struct Observations {
  Mat y;
  Mat f;
  std::vector<Vec> y_time;
  std::vector<Mat> x_time;
};

// Named latent truth; names match the η blocks of the built model.
struct Truth {
  std::vector<std::pair<std::string, Vec>> fields;
  std::vector<std::pair<std::string, double>> hyper;
  const Vec* find(const std::string& name) const;
};

struct Simulation {
  Truth truth;
  Observations obs;
};

Simulation simulate(const ModelSpec& spec, Rng& rng);

// Max step per group (parallel), stacking, Z, Q_ν and Q_ε blocks, priors,
// independence blocks and latent names. Throws GroupFailure naming every
// group whose approximation failed.
PseudoModel build_pseudo(const ModelSpec& spec, const Observations& obs, Flavor flavor);
inline PseudoModel build_pseudo(const ModelSpec& spec, const Observations& obs) {
  return build_pseudo(spec, obs, spec.flavor);
}

struct CoordinateSummary {
  Vec mean;
  Vec sd;
  Vec q025;
  Vec q975;
};
CoordinateSummary summarize_columns(const Mat& draws);

struct BlockReport {
  std::string name;
  Index size = 0;
  double coverage = 0.0;  // fraction of truths inside the central 95% interval
  double bias = 0.0;      // mean of (posterior mean - truth)
  double rmse = 0.0;
};
// One entry per named latent block that has a truth field of the same name.
std::vector<BlockReport> recovery_report(const Truth& truth, const LatentDraws& draws);

// Long-format observation CSVs, one row per observation:
//   logvar   i1,i2,rep,y
//   linreg   i1,i2,rep,f,y
//   treg     time,obs,y,x1..xp
//   poisson  i1,i2,time,rep,count
// Indices are 0-based. Reading infers the dimensions into `spec` (family must
// already be set) and rejects duplicates and gaps.
void write_observations_csv(const ModelSpec& spec, const Observations& obs, std::ostream& out);
Observations read_observations_csv(std::istream& in, ModelSpec& spec);
// kind,name,index,value with kind "field" or "hyper".
void write_truth_csv(const Truth& truth, std::ostream& out);

}  // namespace maxsmooth
