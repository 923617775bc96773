#include "maxsmooth/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "maxsmooth/csv.hpp"
#include "maxsmooth/gmrf.hpp"
#include "maxsmooth/parallel.hpp"
#include "maxsmooth/stats.hpp"

namespace maxsmooth {

namespace {

const char* kFamilyNames[] = {"logvar-lattice", "linreg-lattice", "treg-time", "poisson-spacetime"};
const char* kLinregSigmaNames[] = {"sigma_u_alpha", "sigma_eps_alpha", "sigma_u_beta",
                                   "sigma_eps_beta", "sigma_u_tau",   "sigma_eps_tau"};

std::string join_ids(const std::vector<Index>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  if (ids.size() > 20) s += ",...";
  return s;
}

}  // namespace

Family parse_family(const std::string& s) {
  for (int i = 0; i < 4; ++i) {
    if (s == kFamilyNames[i]) return static_cast<Family>(i);
  }
  throw InvalidArgument("unknown model family '" + s +
                        "' (expected logvar-lattice, linreg-lattice, treg-time or poisson-spacetime)");
}

std::string family_name(Family f) { return kFamilyNames[static_cast<int>(f)]; }

SpecError::SpecError(std::string pointer, const std::string& message)
    : InvalidArgument((pointer.empty() ? std::string("/") : pointer) + ": " + message),
      pointer_(std::move(pointer)) {}

GroupFailure::GroupFailure(std::vector<Index> ids, const std::string& first_reason)
    : Error("Max step failed for " + std::to_string(ids.size()) + " group(s) [" + join_ids(ids) +
            "]; first error: " + first_reason),
      ids_(std::move(ids)) {}

Index ModelSpec::group_dim() const {
  switch (family) {
    case Family::LinregLattice:
      return 3;
    case Family::TregTime:
      return p + 2;
    default:
      return 1;
  }
}

Index ModelSpec::n_groups() const {
  switch (family) {
    case Family::TregTime:
      return t_time;
    case Family::PoissonSpacetime:
      return n_sites() * t_time;
    default:
      return n_sites();
  }
}

void ModelSpec::validate() const {
  const bool lattice = family != Family::TregTime;
  if (lattice && (n1 < 1 || n2 < 1)) throw SpecError("/n1", "lattice dimensions must be >= 1");
  if (lattice && n_sites() < 2) throw SpecError("/n1", "lattice needs at least 2 cells");
  if ((family == Family::TregTime || family == Family::PoissonSpacetime) && t_time < 2) {
    throw SpecError("/T_time", "need at least 2 time points");
  }
  switch (family) {
    case Family::LogvarLattice:
      if (replicates < 2) throw SpecError("/replicates", "logvar needs T >= 2");
      if (!(tau > 0.0)) throw SpecError("/truth/tau", "must be > 0");
      if (!(tau_shape > 0.0) || !(tau_rate > 0.0)) throw SpecError("/prior/tau_gamma", "must be > 0");
      break;
    case Family::LinregLattice:
      if (replicates <= 3) throw SpecError("/replicates", "linreg needs T > p + 2 = 3");
      if (linreg_sigma.size() != 6) throw SpecError("/truth", "linreg needs six sigmas");
      for (int k = 0; k < 6; ++k) {
        if (!(linreg_sigma[static_cast<std::size_t>(k)] >= 0.0)) {
          throw SpecError(std::string("/truth/") + kLinregSigmaNames[k], "must be >= 0");
        }
      }
      break;
    case Family::TregTime:
      if (p < 1) throw SpecError("/p", "must be >= 1");
      if (replicates <= p + 2) throw SpecError("/replicates", "treg needs n_t > p + 2");
      if (static_cast<Index>(treg_start.size()) != p + 2) throw SpecError("/truth/start", "needs p + 2 entries");
      if (static_cast<Index>(treg_sigma_u.size()) != p + 2) throw SpecError("/truth/sigma_u", "needs p + 2 entries");
      for (double s : treg_sigma_u) {
        if (!(s >= 0.0)) throw SpecError("/truth/sigma_u", "entries must be >= 0");
      }
      if (!(phi_alpha > 0.0) || !(phi_gamma > 0.0)) throw SpecError("/prior/phi_loggamma", "must be > 0");
      if (flavor != Flavor::ModeCurvature) throw SpecError("/flavor", "treg supports the mode flavor only");
      break;
    case Family::PoissonSpacetime:
      if (replicates < 1) throw SpecError("/replicates", "poisson needs at least 1 replicate");
      if (!(poisson_sigma_u >= 0.0)) throw SpecError("/truth/sigma_u", "must be >= 0");
      if (!(poisson_ridge > 0.0)) throw SpecError("/prior/ridge", "must be > 0");
      break;
  }
  if (!(exp_rate > 0.0)) throw SpecError("/prior/exp_rate", "must be > 0");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& ptr, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw SpecError(ptr, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw SpecError(ptr + "/" + k, "unknown field");
  }
}

double get_number(const json& j, const std::string& key, const std::string& ptr, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) throw SpecError(ptr + "/" + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SpecError(ptr + "/" + key, "must be finite");
  return d;
}

Index get_count(const json& j, const std::string& key, const std::string& ptr, Index def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw SpecError(ptr + "/" + key, "expected an integer");
  const auto n = v.get<long long>();
  if (n < 1) throw SpecError(ptr + "/" + key, "must be >= 1");
  return static_cast<Index>(n);
}

std::vector<double> get_array(const json& j, const std::string& key, const std::string& ptr,
                              std::vector<double> def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  const std::string p = ptr + "/" + key;
  if (!v.is_array()) throw SpecError(p, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw SpecError(p + "/" + std::to_string(i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::pair<double, double> get_pair(const json& j, const std::string& key, const std::string& ptr,
                                   std::pair<double, double> def) {
  if (!j.contains(key)) return def;
  const auto a = get_array(j, key, ptr, {});
  if (a.size() != 2) throw SpecError(ptr + "/" + key, "expected [shape, rate]");
  if (!(a[0] > 0.0) || !(a[1] > 0.0)) throw SpecError(ptr + "/" + key, "entries must be > 0");
  return {a[0], a[1]};
}

ModelSpec family_defaults(Family f) {
  ModelSpec s;
  s.family = f;
  switch (f) {
    case Family::LogvarLattice:
      s.replicates = 10;
      break;
    case Family::LinregLattice:
      s.n1 = s.n2 = 20;
      s.replicates = 20;
      break;
    case Family::TregTime:
      s.t_time = 50;
      s.replicates = 40;
      break;
    case Family::PoissonSpacetime:
      s.t_time = 10;
      s.replicates = 1;
      break;
  }
  return s;
}

}  // namespace

ModelSpec spec_from_json(const json& j, std::optional<Family> family) {
  check_keys(j, "", {"family", "n1", "n2", "T_time", "replicates", "p", "truth", "prior", "flavor", "seed"});
  Family fam;
  if (j.contains("family")) {
    if (!j["family"].is_string()) throw SpecError("/family", "expected a string");
    try {
      fam = parse_family(j["family"].get<std::string>());
    } catch (const InvalidArgument& e) {
      throw SpecError("/family", e.what());
    }
    if (family && *family != fam) {
      throw SpecError("/family", "config family '" + family_name(fam) + "' does not match '" +
                                     family_name(*family) + "'");
    }
  } else if (family) {
    fam = *family;
  } else {
    throw SpecError("/family", "missing required field");
  }
  ModelSpec s = family_defaults(fam);
  s.n1 = get_count(j, "n1", "", s.n1);
  s.n2 = get_count(j, "n2", "", s.n2);
  s.t_time = get_count(j, "T_time", "", s.t_time);
  s.replicates = get_count(j, "replicates", "", s.replicates);
  s.p = get_count(j, "p", "", s.p);
  if (fam == Family::TregTime && static_cast<std::size_t>(s.p + 2) != s.treg_start.size()) {
    // Defaults for p > 1: every β starts at 10 with the same walk sd.
    s.treg_start.assign(static_cast<std::size_t>(s.p), 10.0);
    s.treg_start.push_back(0.0);
    s.treg_start.push_back(std::log(8.0));
    s.treg_sigma_u.assign(static_cast<std::size_t>(s.p), 0.2);
    s.treg_sigma_u.push_back(0.05);
    s.treg_sigma_u.push_back(0.05);
  }
  if (j.contains("flavor")) {
    if (!j["flavor"].is_string()) throw SpecError("/flavor", "expected a string");
    try {
      s.flavor = parse_flavor(j["flavor"].get<std::string>());
    } catch (const InvalidArgument& e) {
      throw SpecError("/flavor", e.what());
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw SpecError("/seed", "expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }

  const json empty = json::object();
  const json& truth = j.contains("truth") ? j["truth"] : empty;
  const json& prior = j.contains("prior") ? j["prior"] : empty;
  switch (fam) {
    case Family::LogvarLattice: {
      check_keys(truth, "/truth", {"tau"});
      check_keys(prior, "/prior", {"tau_gamma"});
      s.tau = get_number(truth, "tau", "/truth", s.tau);
      std::tie(s.tau_shape, s.tau_rate) = get_pair(prior, "tau_gamma", "/prior", {s.tau_shape, s.tau_rate});
      break;
    }
    case Family::LinregLattice: {
      check_keys(truth, "/truth", {kLinregSigmaNames[0], kLinregSigmaNames[1], kLinregSigmaNames[2],
                                   kLinregSigmaNames[3], kLinregSigmaNames[4], kLinregSigmaNames[5]});
      check_keys(prior, "/prior", {"exp_rate"});
      for (std::size_t k = 0; k < 6; ++k) {
        s.linreg_sigma[k] = get_number(truth, kLinregSigmaNames[k], "/truth", s.linreg_sigma[k]);
      }
      s.exp_rate = get_number(prior, "exp_rate", "/prior", s.exp_rate);
      break;
    }
    case Family::TregTime: {
      check_keys(truth, "/truth", {"start", "sigma_u"});
      check_keys(prior, "/prior", {"exp_rate", "phi_loggamma"});
      s.treg_start = get_array(truth, "start", "/truth", s.treg_start);
      s.treg_sigma_u = get_array(truth, "sigma_u", "/truth", s.treg_sigma_u);
      s.exp_rate = get_number(prior, "exp_rate", "/prior", s.exp_rate);
      std::tie(s.phi_alpha, s.phi_gamma) = get_pair(prior, "phi_loggamma", "/prior", {s.phi_alpha, s.phi_gamma});
      break;
    }
    case Family::PoissonSpacetime: {
      check_keys(truth, "/truth", {"u0", "sigma_u"});
      check_keys(prior, "/prior", {"exp_rate", "count_loggamma", "ridge"});
      s.poisson_u0 = get_number(truth, "u0", "/truth", s.poisson_u0);
      s.poisson_sigma_u = get_number(truth, "sigma_u", "/truth", s.poisson_sigma_u);
      s.exp_rate = get_number(prior, "exp_rate", "/prior", s.exp_rate);
      s.poisson_ridge = get_number(prior, "ridge", "/prior", s.poisson_ridge);
      if (prior.contains("count_loggamma") && !prior["count_loggamma"].is_null()) {
        const auto [a, g] = get_pair(prior, "count_loggamma", "/prior", {1.0, 1.0});
        s.count_prior = LogGammaPrior(a, g);
      }
      break;
    }
  }
  s.validate();
  return s;
}

nlohmann::json spec_to_json(const ModelSpec& s) {
  json j;
  j["family"] = family_name(s.family);
  if (s.family != Family::TregTime) {
    j["n1"] = s.n1;
    j["n2"] = s.n2;
  }
  if (s.family == Family::TregTime || s.family == Family::PoissonSpacetime) j["T_time"] = s.t_time;
  j["replicates"] = s.replicates;
  if (s.family == Family::TregTime) j["p"] = s.p;
  j["flavor"] = flavor_name(s.flavor);
  j["seed"] = s.seed;
  json truth = json::object();
  json prior = json::object();
  switch (s.family) {
    case Family::LogvarLattice:
      truth["tau"] = s.tau;
      prior["tau_gamma"] = {s.tau_shape, s.tau_rate};
      break;
    case Family::LinregLattice:
      for (std::size_t k = 0; k < 6; ++k) truth[kLinregSigmaNames[k]] = s.linreg_sigma[k];
      prior["exp_rate"] = s.exp_rate;
      break;
    case Family::TregTime:
      truth["start"] = s.treg_start;
      truth["sigma_u"] = s.treg_sigma_u;
      prior["exp_rate"] = s.exp_rate;
      prior["phi_loggamma"] = {s.phi_alpha, s.phi_gamma};
      break;
    case Family::PoissonSpacetime:
      truth["u0"] = s.poisson_u0;
      truth["sigma_u"] = s.poisson_sigma_u;
      prior["exp_rate"] = s.exp_rate;
      prior["ridge"] = s.poisson_ridge;
      if (s.count_prior) {
        prior["count_loggamma"] = {s.count_prior->alpha, s.count_prior->gamma};
      } else {
        prior["count_loggamma"] = nullptr;
      }
      break;
  }
  j["truth"] = truth;
  j["prior"] = prior;
  return j;
}

// ---------------------------------------------------------------------------
// Simulation

const Vec* Truth::find(const std::string& name) const {
  for (const auto& [n, v] : fields) {
    if (n == name) return &v;
  }
  return nullptr;
}

namespace {

Vec normal_vector(Index n, double sd, Rng& rng) { return sd * standard_normal_vector(n, rng); }

std::string treg_name(Index k, Index p) {
  if (k < p) return "beta" + std::to_string(k + 1);
  return k == p ? "tau" : "phi";
}

}  // namespace

Simulation simulate(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  Simulation sim;
  const Index N = spec.n_sites();
  const Index R = spec.replicates;
  std::normal_distribution<double> z(0.0, 1.0);

  switch (spec.family) {
    case Family::LogvarLattice: {
      const Vec x = sample_zero_boundary_lattice(spec.n1, spec.n2, spec.tau, rng);
      sim.obs.y.resize(N, R);
      for (Index i = 0; i < N; ++i) {
        const double sd = std::exp(0.5 * x[i]);
        for (Index t = 0; t < R; ++t) sim.obs.y(i, t) = sd * z(rng);
      }
      sim.truth.fields = {{"x", x}};
      sim.truth.hyper = {{"tau", spec.tau}};
      break;
    }
    case Family::LinregLattice: {
      const auto& sg = spec.linreg_sigma;
      Vec fields[3];
      Vec u[3];
      for (int k = 0; k < 3; ++k) {
        const double su = sg[static_cast<std::size_t>(2 * k)];
        const double se = sg[static_cast<std::size_t>(2 * k + 1)];
        u[k] = su > 0.0 ? sample_igmrf_lattice(spec.n1, spec.n2, su, rng) : Vec::Zero(N);
        fields[k] = u[k] + normal_vector(N, se, rng);
      }
      sim.obs.f.resize(N, R);
      sim.obs.y.resize(N, R);
      for (Index i = 0; i < N; ++i) {
        for (Index t = 0; t < R; ++t) sim.obs.f(i, t) = z(rng);
        const double fbar = sim.obs.f.row(i).mean();
        const double sd = std::exp(0.5 * fields[2][i]);
        for (Index t = 0; t < R; ++t) {
          sim.obs.y(i, t) = fields[0][i] + fields[1][i] * (sim.obs.f(i, t) - fbar) + sd * z(rng);
        }
      }
      sim.truth.fields = {{"alpha", fields[0]}, {"beta", fields[1]}, {"tau", fields[2]},
                          {"u_alpha", u[0]},    {"u_beta", u[1]},    {"u_tau", u[2]}};
      for (std::size_t k = 0; k < 6; ++k) sim.truth.hyper.emplace_back(kLinregSigmaNames[k], sg[k]);
      break;
    }
    case Family::TregTime: {
      const Index T = spec.t_time;
      const Index P = spec.p + 2;
      Mat eta(T, P);
      for (Index k = 0; k < P; ++k) {
        eta(0, k) = spec.treg_start[static_cast<std::size_t>(k)];
        for (Index t = 1; t < T; ++t) {
          eta(t, k) = eta(t - 1, k) + spec.treg_sigma_u[static_cast<std::size_t>(k)] * z(rng);
        }
      }
      sim.obs.y_time.resize(static_cast<std::size_t>(T));
      sim.obs.x_time.resize(static_cast<std::size_t>(T));
      for (Index t = 0; t < T; ++t) {
        Mat X(R, spec.p);
        for (Index r = 0; r < R; ++r) {
          for (Index c = 0; c < spec.p; ++c) X(r, c) = z(rng);
        }
        std::student_t_distribution<double> td(std::exp(eta(t, P - 1)));
        const double sigma = std::exp(eta(t, spec.p));
        Vec y = X * eta.row(t).head(spec.p).transpose();
        for (Index r = 0; r < R; ++r) y[r] += sigma * td(rng);
        sim.obs.y_time[static_cast<std::size_t>(t)] = y;
        sim.obs.x_time[static_cast<std::size_t>(t)] = X;
      }
      for (Index k = 0; k < P; ++k) {
        sim.truth.fields.emplace_back(treg_name(k, spec.p), eta.col(k));
        sim.truth.hyper.emplace_back("sigma_u_" + treg_name(k, spec.p),
                                     spec.treg_sigma_u[static_cast<std::size_t>(k)]);
      }
      break;
    }
    case Family::PoissonSpacetime: {
      const Index T = spec.t_time;
      Vec eta(N * T);
      Vec u = Vec::Constant(N, spec.poisson_u0);
      for (Index t = 0; t < T; ++t) {
        if (t > 0 && spec.poisson_sigma_u > 0.0) {
          u += sample_igmrf_lattice(spec.n1, spec.n2, spec.poisson_sigma_u, rng);
        }
        eta.segment(t * N, N) = u;
      }
      sim.obs.y.resize(N * T, R);
      for (Index g = 0; g < N * T; ++g) {
        std::poisson_distribution<long> pd(std::exp(eta[g]));
        for (Index r = 0; r < R; ++r) sim.obs.y(g, r) = static_cast<double>(pd(rng));
      }
      sim.truth.fields = {{"eta", eta}};
      sim.truth.hyper = {{"sigma_u_eta", spec.poisson_sigma_u}};
      break;
    }
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Pseudo model assembly

namespace {

void check_observations(const ModelSpec& spec, const Observations& obs) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw DimensionMismatch("observations: " + what);
  };
  switch (spec.family) {
    case Family::LogvarLattice:
      need(obs.y.rows() == spec.n_sites(), "expected one row per site");
      need(obs.y.cols() >= 2, "logvar needs T >= 2");
      break;
    case Family::LinregLattice:
      need(obs.y.rows() == spec.n_sites(), "expected one row per site");
      need(obs.f.rows() == obs.y.rows() && obs.f.cols() == obs.y.cols(), "covariates must match y");
      need(obs.y.cols() > 3, "linreg needs T > p + 2");
      break;
    case Family::TregTime:
      need(static_cast<Index>(obs.y_time.size()) == spec.t_time &&
               static_cast<Index>(obs.x_time.size()) == spec.t_time,
           "expected one entry per time point");
      for (std::size_t t = 0; t < obs.y_time.size(); ++t) {
        need(obs.x_time[t].rows() == obs.y_time[t].size() && obs.x_time[t].cols() == spec.p,
             "design at time " + std::to_string(t) + " must be n_t x p");
      }
      break;
    case Family::PoissonSpacetime:
      need(obs.y.rows() == spec.n_sites() * spec.t_time, "expected N * T_time rows");
      need(obs.y.cols() >= 1, "no replicates");
      break;
  }
  if (spec.family == Family::TregTime) {
    for (std::size_t t = 0; t < obs.y_time.size(); ++t) {
      need(obs.y_time[t].allFinite() && obs.x_time[t].allFinite(), "non-finite values at time " + std::to_string(t));
    }
  } else {
    need(obs.y.allFinite() && obs.f.allFinite(), "non-finite values");
  }
}

GroupApprox group_approx(const ModelSpec& spec, const Observations& obs, Index g, Flavor flavor) {
  switch (spec.family) {
    case Family::LogvarLattice:
      return logvar_approx(obs.y.row(g).transpose(), flavor);
    case Family::LinregLattice: {
      const CenteredDesign d = center_design(obs.f.row(g).transpose());
      return linreg_approx(obs.y.row(g).transpose(), d.F, flavor);
    }
    case Family::TregTime: {
      const auto t = static_cast<std::size_t>(g);
      return treg_approx(obs.y_time[t], obs.x_time[t], LogGammaPrior(spec.phi_alpha, spec.phi_gamma));
    }
    case Family::PoissonSpacetime: {
      std::vector<long> c(static_cast<std::size_t>(obs.y.cols()));
      for (Index r = 0; r < obs.y.cols(); ++r) {
        const double v = obs.y(g, r);
        if (v < 0.0 || v != std::floor(v)) throw InvalidArgument("counts must be non-negative integers");
        c[static_cast<std::size_t>(r)] = static_cast<long>(v);
      }
      return poisson_approx(std::span<const long>(c), spec.count_prior, flavor);
    }
  }
  throw InvalidArgument("unknown family");
}

NuBlock make_block(SparseSymMatrix s, Vec eig, Index theta_index, ScaleKind k, double ridge = 0.0) {
  NuBlock b;
  b.structure = std::move(s);
  b.eigenvalues = std::move(eig);
  b.theta_index = theta_index;
  b.scale = k;
  b.ridge = ridge;
  return b;
}

Vec kron_eigenvalues(const Vec& a, const Vec& b) {
  Vec out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

}  // namespace

PseudoModel build_pseudo(const ModelSpec& spec, const Observations& obs, Flavor flavor) {
  spec.validate();
  if (spec.family == Family::TregTime && flavor != Flavor::ModeCurvature) {
    throw InvalidArgument("treg supports the mode flavor only");
  }
  check_observations(spec, obs);
  const Index G = spec.n_groups();
  const Index M = spec.group_dim();
  const Index N = spec.n_sites();

  std::vector<GroupApprox> groups(static_cast<std::size_t>(G));
  std::vector<std::string> errors(static_cast<std::size_t>(G));
  parallel_for(static_cast<std::size_t>(G), [&](std::size_t g) {
    try {
      groups[g] = group_approx(spec, obs, static_cast<Index>(g), flavor);
      groups[g].group_id = static_cast<Index>(g);
    } catch (const Error& e) {
      errors[g] = e.what();
    }
  });
  std::vector<Index> failed;
  for (Index g = 0; g < G; ++g) {
    if (!errors[static_cast<std::size_t>(g)].empty()) failed.push_back(g);
  }
  if (!failed.empty()) throw GroupFailure(failed, errors[static_cast<std::size_t>(failed.front())]);

  PseudoModel m;
  m.stacked = stack(groups, M, G);
  const Index n = G * M;
  m.Z = SparseSymMatrix::identity(n).matrix();
  m.mu_nu = Vec::Zero(n);
  const double rate = spec.exp_rate;

  switch (spec.family) {
    case Family::LogvarLattice: {
      const Vec l1 = rw_eigenvalues(spec.n1, Boundary::Zero);
      const Vec l2 = rw_eigenvalues(spec.n2, Boundary::Zero);
      Vec eig(N);
      for (Index i2 = 0; i2 < spec.n2; ++i2) {
        for (Index i1 = 0; i1 < spec.n1; ++i1) eig[i1 + spec.n1 * i2] = l1[i1] + l2[i2];
      }
      m.nu_blocks.push_back(make_block(lattice_structure(spec.n1, spec.n2, Boundary::Zero), eig, 0,
                                       ScaleKind::Precision));
      m.eps_zero = true;
      m.theta = {{"tau", PriorKind::Gamma, spec.tau_shape, spec.tau_rate}};
      m.theta_init = Vec::Constant(1, spec.tau_shape / spec.tau_rate);
      m.latent_names = {{"x", 0, N}, {"nu", N, N}};
      break;
    }
    case Family::LinregLattice: {
      const SparseSymMatrix qu = lattice_structure(spec.n1, spec.n2, Boundary::Free);
      const Vec eig = igmrf_eigenvalues(spec.n1, spec.n2);
      const char* names[] = {"alpha", "beta", "tau"};
      for (Index k = 0; k < 3; ++k) {
        m.nu_blocks.push_back(make_block(qu, eig, 2 * k, ScaleKind::StdDev));
        EpsBlock e;
        e.size = N;
        e.theta_index = 2 * k + 1;
        e.scale = ScaleKind::StdDev;
        m.eps_blocks.push_back(e);
      }
      for (std::size_t k = 0; k < 6; ++k) m.theta.push_back({kLinregSigmaNames[k], PriorKind::Exponential, rate, 0.0});
      m.theta_blocks = {{0, 1}, {2, 3}, {4, 5}};
      m.theta_init = Vec::Constant(6, 0.3);
      for (Index k = 0; k < 3; ++k) m.latent_names.push_back({names[k], k * N, N});
      for (Index k = 0; k < 3; ++k) m.latent_names.push_back({std::string("u_") + names[k], n + k * N, N});
      break;
    }
    case Family::TregTime: {
      const Index T = spec.t_time;
      const SparseSymMatrix r = rw_structure(T);
      const Vec eig = rw_eigenvalues(T, Boundary::Free);
      for (Index k = 0; k < M; ++k) {
        m.nu_blocks.push_back(make_block(r, eig, k, ScaleKind::StdDev));
        m.theta.push_back({"sigma_u_" + treg_name(k, spec.p), PriorKind::Exponential, rate, 0.0});
      }
      m.eps_zero = true;
      m.theta_init = Vec::Constant(M, 0.1);
      for (Index k = 0; k < M; ++k) m.latent_names.push_back({treg_name(k, spec.p), k * T, T});
      for (Index k = 0; k < M; ++k) m.latent_names.push_back({"u_" + treg_name(k, spec.p), n + k * T, T});
      break;
    }
    case Family::PoissonSpacetime: {
      const Index T = spec.t_time;
      const SparseSymMatrix s = kron(rw_structure(T), lattice_structure(spec.n1, spec.n2, Boundary::Free));
      const Vec eig = kron_eigenvalues(rw_eigenvalues(T, Boundary::Free), igmrf_eigenvalues(spec.n1, spec.n2));
      m.nu_blocks.push_back(make_block(s, eig, 0, ScaleKind::StdDev, spec.poisson_ridge));
      m.eps_zero = true;
      m.theta = {{"sigma_u_eta", PriorKind::Exponential, rate, 0.0}};
      m.theta_init = Vec::Constant(1, 0.1);
      m.latent_names = {{"eta", 0, n}, {"u", n, n}};
      break;
    }
  }
  m.validate();
  m.prepare();
  return m;
}

// ---------------------------------------------------------------------------
// Diagnostics

CoordinateSummary summarize_columns(const Mat& draws) {
  const Index S = draws.rows();
  const Index d = draws.cols();
  if (S < 1) throw InvalidArgument("summarize_columns: no draws");
  CoordinateSummary out;
  out.mean.resize(d);
  out.sd.resize(d);
  out.q025.resize(d);
  out.q975.resize(d);
  std::vector<double> col(static_cast<std::size_t>(S));
  for (Index j = 0; j < d; ++j) {
    for (Index s = 0; s < S; ++s) col[static_cast<std::size_t>(s)] = draws(s, j);
    out.mean[j] = mean(col);
    out.sd[j] = S > 1 ? sample_sd(col) : 0.0;
    std::sort(col.begin(), col.end());
    out.q025[j] = quantile_sorted(col, 0.025);
    out.q975[j] = quantile_sorted(col, 0.975);
  }
  return out;
}

std::vector<BlockReport> recovery_report(const Truth& truth, const LatentDraws& draws) {
  std::vector<BlockReport> out;
  for (const auto& nr : draws.names) {
    const Vec* t = truth.find(nr.name);
    if (!t) continue;
    if (t->size() != nr.size) {
      throw DimensionMismatch("recovery_report: truth '" + nr.name + "' has " + std::to_string(t->size()) +
                              " entries, draws have " + std::to_string(nr.size));
    }
    if (nr.start + nr.size > draws.x.cols()) throw DimensionMismatch("recovery_report: block out of range");
    const CoordinateSummary s = summarize_columns(draws.x.middleCols(nr.start, nr.size));
    BlockReport r;
    r.name = nr.name;
    r.size = nr.size;
    Index inside = 0;
    double sum = 0.0;
    double sq = 0.0;
    for (Index i = 0; i < nr.size; ++i) {
      if ((*t)[i] >= s.q025[i] && (*t)[i] <= s.q975[i]) ++inside;
      const double e = s.mean[i] - (*t)[i];
      sum += e;
      sq += e * e;
    }
    const double k = static_cast<double>(nr.size);
    r.coverage = static_cast<double>(inside) / k;
    r.bias = sum / k;
    r.rmse = std::sqrt(sq / k);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation files

void write_observations_csv(const ModelSpec& spec, const Observations& obs, std::ostream& out) {
  const Index n1 = spec.n1;
  const Index N = spec.n_sites();
  switch (spec.family) {
    case Family::LogvarLattice:
    case Family::LinregLattice: {
      const bool lin = spec.family == Family::LinregLattice;
      out << (lin ? "i1,i2,rep,f,y\n" : "i1,i2,rep,y\n");
      for (Index i = 0; i < obs.y.rows(); ++i) {
        for (Index r = 0; r < obs.y.cols(); ++r) {
          out << i % n1 << ',' << i / n1 << ',' << r << ',';
          if (lin) out << format_double(obs.f(i, r)) << ',';
          out << format_double(obs.y(i, r)) << '\n';
        }
      }
      break;
    }
    case Family::TregTime: {
      out << "time,obs,y";
      for (Index c = 0; c < spec.p; ++c) out << ",x" << c + 1;
      out << '\n';
      for (std::size_t t = 0; t < obs.y_time.size(); ++t) {
        const Vec& y = obs.y_time[t];
        const Mat& X = obs.x_time[t];
        for (Index r = 0; r < y.size(); ++r) {
          out << t << ',' << r << ',' << format_double(y[r]);
          for (Index c = 0; c < X.cols(); ++c) out << ',' << format_double(X(r, c));
          out << '\n';
        }
      }
      break;
    }
    case Family::PoissonSpacetime: {
      out << "i1,i2,time,rep,count\n";
      for (Index g = 0; g < obs.y.rows(); ++g) {
        const Index i = g % N;
        for (Index r = 0; r < obs.y.cols(); ++r) {
          out << i % n1 << ',' << i / n1 << ',' << g / N << ',' << r << ',' << static_cast<long>(obs.y(g, r)) << '\n';
        }
      }
      break;
    }
  }
}

namespace {

int parse_index(const std::string& f, long line, const char* name) {
  const int v = parse_int(f, line, name);
  if (v < 0) throw IngestError(line, std::string(name) + " must be >= 0");
  return v;
}

// Places rows keyed by an integer tuple into a dense box, checking that every
// key occurs exactly once. Returns the box extents.
template <std::size_t K>
std::array<Index, K> dense_extents(const std::vector<CsvRow>& rows, const std::array<std::size_t, K>& cols,
                                   const std::array<const char*, K>& names, std::vector<std::size_t>& order) {
  if (rows.empty()) throw IngestError(0, "no data rows");
  std::array<Index, K> ext{};
  std::vector<std::array<Index, K>> keys;
  keys.reserve(rows.size());
  for (const auto& r : rows) {
    std::array<Index, K> k{};
    for (std::size_t j = 0; j < K; ++j) {
      k[j] = parse_index(r.fields[cols[j]], r.line, names[j]);
      ext[j] = std::max(ext[j], k[j] + 1);
    }
    keys.push_back(k);
  }
  Index total = 1;
  for (Index e : ext) total *= e;
  std::vector<long> where(static_cast<std::size_t>(total), 0);
  order.assign(static_cast<std::size_t>(total), 0);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    Index flat = 0;
    for (std::size_t j = K; j-- > 0;) flat = flat * ext[j] + keys[n][j];
    long& w = where[static_cast<std::size_t>(flat)];
    if (w != 0) {
      throw IngestError(rows[n].line, "duplicate key (first seen on line " + std::to_string(w) + ")");
    }
    w = rows[n].line;
    order[static_cast<std::size_t>(flat)] = n;
  }
  for (Index flat = 0; flat < total; ++flat) {
    if (where[static_cast<std::size_t>(flat)] == 0) {
      std::string key;
      Index rem = flat;
      for (std::size_t j = 0; j < K; ++j) {
        key += (j ? ", " : "") + std::string(names[j]) + " " + std::to_string(rem % ext[j]);
        rem /= ext[j];
      }
      throw IngestError(0, "missing observation: " + key);
    }
  }
  return ext;
}

}  // namespace

Observations read_observations_csv(std::istream& in, ModelSpec& spec) {
  Observations obs;
  std::vector<std::size_t> order;
  switch (spec.family) {
    case Family::LogvarLattice:
    case Family::LinregLattice: {
      const bool lin = spec.family == Family::LinregLattice;
      const auto rows = lin ? read_csv(in, {"i1", "i2", "rep", "f", "y"}) : read_csv(in, {"i1", "i2", "rep", "y"});
      const auto ext = dense_extents<3>(rows, {0, 1, 2}, {"i1", "i2", "rep"}, order);
      spec.n1 = ext[0];
      spec.n2 = ext[1];
      spec.replicates = ext[2];
      const Index N = spec.n_sites();
      obs.y.resize(N, ext[2]);
      if (lin) obs.f.resize(N, ext[2]);
      for (Index r = 0; r < ext[2]; ++r) {
        for (Index i = 0; i < N; ++i) {
          const CsvRow& row = rows[order[static_cast<std::size_t>(i + N * r)]];
          obs.y(i, r) = parse_double(row.fields.back(), row.line, "y");
          if (lin) obs.f(i, r) = parse_double(row.fields[3], row.line, "f");
        }
      }
      break;
    }
    case Family::TregTime: {
      std::vector<std::string> header;
      const auto rows = read_csv(in, header);
      if (header.size() < 4 || header[0] != "time" || header[1] != "obs" || header[2] != "y") {
        throw IngestError(1, "header must be 'time,obs,y,x1,...,xp'");
      }
      for (std::size_t c = 3; c < header.size(); ++c) {
        if (header[c] != "x" + std::to_string(c - 2)) throw IngestError(1, "covariate columns must be x1..xp");
      }
      spec.p = static_cast<Index>(header.size() - 3);
      std::map<int, std::map<int, const CsvRow*>> by_time;
      for (const auto& r : rows) {
        const int t = parse_index(r.fields[0], r.line, "time");
        const int o = parse_index(r.fields[1], r.line, "obs");
        const auto [it, ok] = by_time[t].emplace(o, &r);
        if (!ok) throw IngestError(r.line, "duplicate key (first seen on line " + std::to_string(it->second->line) + ")");
      }
      if (by_time.empty()) throw IngestError(0, "no data rows");
      spec.t_time = by_time.rbegin()->first + 1;
      for (Index t = 0; t < spec.t_time; ++t) {
        auto it = by_time.find(static_cast<int>(t));
        if (it == by_time.end()) throw IngestError(0, "missing observation: time " + std::to_string(t));
        const auto& m = it->second;
        const Index n = m.rbegin()->first + 1;
        if (static_cast<Index>(m.size()) != n) {
          throw IngestError(0, "missing observation at time " + std::to_string(t) + ": obs indices must be 0.." +
                                   std::to_string(n - 1));
        }
        Vec y(n);
        Mat X(n, spec.p);
        for (const auto& [o, row] : m) {
          y[o] = parse_double(row->fields[2], row->line, "y");
          for (Index c = 0; c < spec.p; ++c) X(o, c) = parse_double(row->fields[static_cast<std::size_t>(3 + c)], row->line, "x");
        }
        obs.y_time.push_back(std::move(y));
        obs.x_time.push_back(std::move(X));
      }
      spec.replicates = obs.y_time.front().size();
      break;
    }
    case Family::PoissonSpacetime: {
      const auto rows = read_csv(in, {"i1", "i2", "time", "rep", "count"});
      const auto ext = dense_extents<4>(rows, {0, 1, 2, 3}, {"i1", "i2", "time", "rep"}, order);
      spec.n1 = ext[0];
      spec.n2 = ext[1];
      spec.t_time = ext[2];
      spec.replicates = ext[3];
      const Index G = spec.n_sites() * ext[2];
      obs.y.resize(G, ext[3]);
      for (Index r = 0; r < ext[3]; ++r) {
        for (Index g = 0; g < G; ++g) {
          const CsvRow& row = rows[order[static_cast<std::size_t>(g + G * r)]];
          const int c = parse_int(row.fields[4], row.line, "count");
          if (c < 0) throw IngestError(row.line, "count must be >= 0");
          obs.y(g, r) = c;
        }
      }
      break;
    }
  }
  return obs;
}

void write_truth_csv(const Truth& truth, std::ostream& out) {
  out << "kind,name,index,value\n";
  for (const auto& [name, v] : truth.fields) {
    for (Index i = 0; i < v.size(); ++i) out << "field," << name << ',' << i << ',' << format_double(v[i]) << '\n';
  }
  for (const auto& [name, v] : truth.hyper) out << "hyper," << name << ",0," << format_double(v) << '\n';
}

}  // namespace maxsmooth
