#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mckv/config.hpp"
#include "mckv/errors.hpp"
#include "mckv/io.hpp"
#include "mckv/runner.hpp"

using namespace mckv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mckv_runner_tests" / name;
  fs::remove_all(dir);
  return dir;
}

// Small poc experiment; completes in well under a second.
RunConfig small_poc(const std::string& out) {
  RunConfig c = parse_config_text(R"(kind = poc
name = runner-poc
seed = 777

[model]
type = stable
alpha = 1.5

[coefficients]
type = stable_ou
a = 0.0
a_prime = 0.5
b = 1.0

[initial]
type = point
value = 0.0

[grid]
horizon = 1.0
steps = 10

[plan]
law = thm3
n_grid = 8, 16, 32, 64
replications = 60
)");
  c.out_dir = out;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("runner");

TEST_CASE("poc run writes all artifacts and the manifest indexes them") {
  const fs::path dir = fresh_dir("poc");
  CHECK(run_experiment(small_poc(dir.string())) == kExitSuccess);
  for (const char* name : {"rate.csv", "report.json", "rate.svg", "manifest.json"}) {
    CHECK(fs::exists(dir / name));
  }

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["config"]["seed"] == 777);
  CHECK(manifest["outputs"].size() == 3);
  for (const auto& entry : manifest["outputs"]) {
    const std::string body = slurp(dir / entry["file"].get<std::string>());
    CHECK(entry["bytes"].get<std::size_t>() == body.size());
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(io::fnv1a64(
                      {reinterpret_cast<const unsigned char*>(body.data()), body.size()})));
    CHECK(entry["fnv1a64"].get<std::string>() == hex);
  }

  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["coupling_violations"] == 0);
  CHECK(report["points"].size() == 4);
}

TEST_CASE("reruns are byte identical regardless of thread count") {
  const fs::path a = fresh_dir("det_a");
  const fs::path b = fresh_dir("det_b");
  RunConfig ca = small_poc(a.string());
  RunConfig cb = small_poc(b.string());
  cb.threads = 3;
  CHECK(run_experiment(ca) == kExitSuccess);
  CHECK(run_experiment(cb) == kExitSuccess);
  for (const char* name : {"rate.csv", "report.json", "rate.svg"}) {
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("slope gate trips when the tolerance is impossible") {
  const fs::path dir = fresh_dir("gate");
  RunConfig c = small_poc(dir.string());
  c.slope_tolerance = 1e-9;  // the Monte Carlo slope cannot be this exact
  CHECK(run_experiment(c) == kExitThreshold);
  // artifacts and manifest still written for the failed gate
  CHECK(fs::exists(dir / "rate.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("noise validation battery passes for a stable model") {
  const fs::path dir = fresh_dir("noise");
  RunConfig c = parse_config_text(R"(kind = noise-validate
name = runner-noise
seed = 424242

[model]
type = stable
alpha = 1.2

[noise_validate]
paths = 4000
significance = 0.01
horizon = 0.75
)");
  c.out_dir = dir.string();
  CHECK(run_experiment(c) == kExitSuccess);
  const auto doc = nlohmann::json::parse(slurp(dir / "validation.json"));
  CHECK(doc["pass"] == true);
  CHECK(doc["tests"].size() == 5);
}

TEST_CASE("noise validation battery passes for an asymmetric compound model") {
  // asymmetric atoms exercise the imaginary part of the CF target
  const fs::path dir = fresh_dir("noise_cp");
  RunConfig c = parse_config_text(R"(kind = noise-validate
name = runner-noise-cp
seed = 99

[model]
type = compound_poisson
atoms = 0.4:2.0, -0.9:0.5, 1.7:0.3

[noise_validate]
paths = 4000
significance = 0.01
horizon = 1.0
)");
  c.out_dir = dir.string();
  CHECK(run_experiment(c) == kExitSuccess);
  const auto doc = nlohmann::json::parse(slurp(dir / "validation.json"));
  CHECK(doc["pass"] == true);
}

TEST_CASE("picard run reports convergence and the re-application floor") {
  const fs::path dir = fresh_dir("picard");
  RunConfig c = parse_config_text(R"(kind = picard
name = runner-picard
seed = 5150

[model]
type = stable
alpha = 1.5

[coefficients]
type = sin_mean
a = -0.5
c = 0.6
s = 1.0

[initial]
type = gaussian
value = 0.0
sd = 1.0

[grid]
horizon = 0.5
steps = 10

[picard]
particles = 600
max_iters = 8
min_iters = 3
tol = 0.001
)");
  c.out_dir = dir.string();
  CHECK(run_experiment(c) == kExitSuccess);
  const auto doc = nlohmann::json::parse(slurp(dir / "picard.json"));
  CHECK(doc["converged"] == true);
  CHECK(doc["entries"].size() >= 3);
  CHECK(doc["reapplication_delta"].get<double>() <
        3.0 * doc["reapplication_floor"].get<double>());
  CHECK(fs::exists(dir / "flow.csv"));
  CHECK(fs::exists(dir / "contraction.csv"));
}

TEST_CASE("nonuniqueness run holds its residual gate") {
  const fs::path dir = fresh_dir("nonuni");
  RunConfig c = parse_config_text(R"(kind = nonuniqueness
name = runner-nonuni
seed = 1

[nonuniqueness]
beta = 0.5
horizon = 1.0
steps = 64
)");
  c.out_dir = dir.string();
  CHECK(run_experiment(c) == kExitSuccess);
  const auto doc = nlohmann::json::parse(slurp(dir / "nonuniqueness.json"));
  CHECK(doc["zero_residual"].get<double>() <= doc["residual_tolerance"].get<double>());
  CHECK(doc["grown_endpoint"].get<double>() == doctest::Approx(0.25).epsilon(0.02));
  const std::string csv = slurp(dir / "branches.csv");
  CHECK(csv.substr(0, 35) == "time,zero_branch,grown_branch\r\n0,0,");
}

TEST_CASE("unusable plans exit with the validation code") {
  const fs::path dir = fresh_dir("invalid");
  RunConfig c = small_poc(dir.string());
  c.dim = 3;  // multi-d reference clouds are not covered
  CHECK(run_experiment(c) == kExitValidation);
}

TEST_SUITE_END();
