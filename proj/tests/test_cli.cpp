#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("maxsmooth_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with stderr captured; returns the exit status.
int run(const std::string& args, std::string* err = nullptr) {
  const fs::path log = workdir() / "stderr.txt";
  const std::string cmd = std::string(MAXSMOOTH_CLI) + " " + args + " 2> " + log.string();
  const int status = std::system(cmd.c_str());
  if (err) {
    std::ifstream in(log);
    std::ostringstream os;
    os << in.rdbuf();
    *err = os.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

long count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<long>(std::count(s.begin(), s.end(), '\n'));
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(workdir() / name) << text; }

}  // namespace

TEST(CliSimulate, LogvarObservationsAndDeterminism) {
  write("lv.json", R"({"family": "logvar-lattice", "n1": 10, "n2": 10, "replicates": 10})");
  ASSERT_EQ(run("simulate --model logvar-lattice --config " + path("lv.json") + " --out " + path("sim_a") + " --seed 7"), 0);
  ASSERT_EQ(run("simulate --model logvar-lattice --config " + path("lv.json") + " --out " + path("sim_b") + " --seed 7"), 0);
  EXPECT_EQ(count_lines(workdir() / "sim_a/observations.csv"), 1001);
  for (const char* f : {"observations.csv", "truth.csv", "resolved_config.json"}) {
    EXPECT_EQ(slurp(workdir() / "sim_a" / f), slurp(workdir() / "sim_b" / f)) << f;
  }
  const json cfg = json::parse(slurp(workdir() / "sim_a/resolved_config.json"));
  EXPECT_EQ(cfg["seed"], 7);
  EXPECT_EQ(cfg["family"], "logvar-lattice");
}

TEST(CliSimulate, UsageErrors) {
  std::string err;
  EXPECT_EQ(run("simulate --model not-a-family --out " + path("x"), &err), 2);
  EXPECT_NE(err.find("not-a-family"), std::string::npos);
  write("bad.json", R"({"family": "linreg-lattice", "truth": {"sigma_u_alpha": -1}})");
  EXPECT_EQ(run("simulate --config " + path("bad.json") + " --out " + path("x"), &err), 2);
  EXPECT_NE(err.find("/truth/sigma_u_alpha"), std::string::npos) << err;
  write("typo.json", R"({"family": "logvar-lattice", "replicate": 3})");
  EXPECT_EQ(run("simulate --config " + path("typo.json") + " --out " + path("x"), &err), 2);
  EXPECT_NE(err.find("/replicate"), std::string::npos) << err;
  EXPECT_EQ(run("simulate --out"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(CliFit, LogvarRecoversTau) {
  write("lv50.json", R"({"family": "logvar-lattice", "replicates": 50, "truth": {"tau": 1.0}})");
  ASSERT_EQ(run("simulate --config " + path("lv50.json") + " --out " + path("sim50") + " --seed 11"), 0);
  const std::string data = path("sim50/observations.csv");
  ASSERT_EQ(run("fit --model logvar-lattice --data " + data + " --samples 4000 --out " + path("fit50") +
                " --seed 3 --full-draws --dump-density"),
            0);
  const json m = json::parse(slurp(workdir() / "fit50/run_manifest.json"));
  const double tau = m["theta_summary"]["tau"]["mean"];
  EXPECT_GE(tau, 0.5);
  EXPECT_LE(tau, 2.0);
  EXPECT_EQ(count_lines(workdir() / "fit50/theta_draws.csv"), 4001);
  EXPECT_EQ(count_lines(workdir() / "fit50/latent_draws.csv"), 4001);
  EXPECT_EQ(count_lines(workdir() / "fit50/latent_summary.csv"), 201);
  EXPECT_TRUE(fs::exists(workdir() / "fit50/theta_density.csv"));
  EXPECT_EQ(m["seed"], 3);
  EXPECT_TRUE(m.contains("timings_seconds"));
  EXPECT_EQ(m["versions"]["maxsmooth"], "1.0.0");
}

TEST(CliFit, ManifestHashIsReproducibleAndThreadIndependent) {
  write("lin.json", R"({"family": "linreg-lattice", "n1": 8, "n2": 8, "replicates": 20})");
  ASSERT_EQ(run("simulate --config " + path("lin.json") + " --out " + path("lin") + " --seed 2"), 0);
  const std::string data = path("lin/observations.csv");
  ASSERT_EQ(run("--threads 1 fit --model linreg-lattice --data " + data + " --samples 200 --out " + path("lin_a")), 0);
  ASSERT_EQ(run("--threads 3 fit --model linreg-lattice --data " + data + " --samples 200 --out " + path("lin_b")), 0);
  const json a = json::parse(slurp(workdir() / "lin_a/run_manifest.json"));
  const json b = json::parse(slurp(workdir() / "lin_b/run_manifest.json"));
  EXPECT_EQ(a["manifest_hash"], b["manifest_hash"]);
  EXPECT_EQ(slurp(workdir() / "lin_a/latent_summary.csv"), slurp(workdir() / "lin_b/latent_summary.csv"));
  ASSERT_EQ(run("fit --model linreg-lattice --data " + data + " --samples 200 --seed 9 --out " + path("lin_c")), 0);
  const json c = json::parse(slurp(workdir() / "lin_c/run_manifest.json"));
  EXPECT_NE(a["manifest_hash"], c["manifest_hash"]);
}

TEST(CliFit, ValidationOnlyMode) {
  for (const char* fam : {"logvar-lattice", "linreg-lattice", "treg-time", "poisson-spacetime"}) {
    const std::string dir = std::string("val_") + fam;
    ASSERT_EQ(run(std::string("simulate --model ") + fam + " --out " + path(dir) + " --seed 4"), 0);
    ASSERT_EQ(run(std::string("fit --model ") + fam + " --data " + path(dir + "/observations.csv") +
                  " --samples 0 --out " + path(dir + "/fit")),
              0)
        << fam;
    const json m = json::parse(slurp(workdir() / dir / "fit/run_manifest.json"));
    EXPECT_TRUE(m["ratio_identity_ok"].get<bool>()) << fam;
    EXPECT_FALSE(fs::exists(workdir() / dir / "fit/theta_draws.csv"));
  }
}

TEST(CliFit, ErrorsAndExitCodes) {
  std::string err;
  EXPECT_EQ(run("fit --model logvar-lattice --data " + path("nope.csv") + " --out " + path("x")), 2);
  write("short.csv", "i1,i2,rep,y\n0,0,0,1.0\n0,0,1,oops\n");
  EXPECT_EQ(run("fit --model logvar-lattice --data " + path("short.csv") + " --out " + path("x"), &err), 2);
  EXPECT_NE(err.find("line 3"), std::string::npos) << err;
  // Zero counts have no finite Poisson mode without the stabilising prior.
  std::ostringstream p;
  p << "i1,i2,time,rep,count\n";
  for (int t = 0; t < 3; ++t) {
    for (int i2 = 0; i2 < 2; ++i2) {
      for (int i1 = 0; i1 < 2; ++i1) p << i1 << ',' << i2 << ',' << t << ",0," << ((i1 + i2 + t == 2) ? 0 : 40) << '\n';
    }
  }
  write("zeros.csv", p.str());
  write("noprior.json", R"({"family": "poisson-spacetime", "prior": {"count_loggamma": null}})");
  EXPECT_EQ(run("fit --model poisson-spacetime --config " + path("noprior.json") + " --data " + path("zeros.csv") +
                    " --samples 10 --out " + path("x"),
                &err),
            1);
  EXPECT_NE(err.find("group(s): 3 5 6 8"), std::string::npos) << err;
  write("prior.json", R"({"family": "poisson-spacetime", "prior": {"count_loggamma": [2, 0.2]}})");
  EXPECT_EQ(run("fit --model poisson-spacetime --config " + path("prior.json") + " --data " + path("zeros.csv") +
                " --samples 10 --out " + path("x")),
            0);
}

TEST(CliBench, QuickCsvSchema) {
  ASSERT_EQ(run("bench --quick --samples 200 --repeats 1 --out " + path("bench.csv")), 0);
  std::ifstream in(workdir() / "bench.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n_lattice,t_reps,method,seconds_per_10k,max_step_seconds");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 8);
}

TEST(CliForecast, AllSchemesOnSyntheticGrid) {
  ASSERT_EQ(run("synth-grid --n1 10 --n2 10 --years 12 --seed 5 --out " + path("grid.csv")), 0);
  ASSERT_EQ(run("forecast --data " + path("grid.csv") + " --scheme all --samples 300 --out " + path("fc")), 0);
  const json s = json::parse(slurp(workdir() / "fc/scores.json"));
  ASSERT_EQ(s["schemes"].size(), 4u);
  std::map<std::string, double> crps;
  for (const auto& e : s["schemes"]) {
    crps[e["scheme"]] = e["crps"];
    EXPECT_GE(e["cov05"].get<double>(), 0.0);
    EXPECT_LE(e["cov95"].get<double>(), 1.0);
    EXPECT_GE(e["w95"].get<double>(), 0.0);
  }
  EXPECT_LT(std::abs(crps["spat1"] - crps["spat2"]) / crps["spat1"], 0.05);
  const json b = json::parse(slurp(workdir() / "fc/bootstrap.json"));
  EXPECT_EQ(b["comparisons"].size(), 6u);
  EXPECT_EQ(b["tiling"][0].get<int>() * b["tiling"][1].get<int>(), 10);
  EXPECT_TRUE(fs::exists(workdir() / "fc/run_manifest.json"));
}

TEST(CliForecast, SingleSchemeSamplesAndErrors) {
  ASSERT_EQ(run("synth-grid --n1 3 --n2 2 --years 5 --out " + path("small.csv")), 0);
  ASSERT_EQ(run("forecast --data " + path("small.csv") + " --scheme mle --samples 7 --blocks 2 --write-samples --out " +
                path("fc_small")),
            0);
  EXPECT_EQ(count_lines(workdir() / "fc_small/predictive_samples.csv"), 1 + 6 * 5 * 7);
  std::string err;
  EXPECT_EQ(run("forecast --data " + path("missing.csv") + " --out " + path("x"), &err), 2);
  EXPECT_EQ(run("forecast --data " + path("small.csv") + " --blocks 5 --scheme clim --out " + path("x"), &err), 2);
  EXPECT_EQ(run("forecast --data " + path("small.csv") + " --scheme spat2 --samples 5 --blocks 2 --out " + path("x"), &err), 1);
  EXPECT_NE(err.find("year 2000"), std::string::npos) << err;
}
