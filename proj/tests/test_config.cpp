#include "doctest.h"

#include <algorithm>
#include <string>

#include "json.hpp"
#include "mckv/config.hpp"
#include "mckv/errors.hpp"

using namespace mckv;

namespace {

const char* kMinimalPoc = R"(
kind = poc
seed = 42

[model]
type = compound_poisson
atoms = 0.5:1.0, -0.5:1.0

[coefficients]
type = stable_ou
a_prime = 0.4

[initial]
type = point
value = 1.0

[grid]
horizon = 1.0
steps = 20

[plan]
n_grid = 8, 16, 32, 64
)";

bool has_error(const ConfigError& err, const std::string& needle) {
  return std::any_of(err.errors.begin(), err.errors.end(), [&](const std::string& e) {
    return e.find(needle) != std::string::npos;
  });
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("minimal poc config parses with defaults filled") {
    const RunConfig config = parse_config_text(kMinimalPoc);
    CHECK(config.kind == RunKind::Poc);
    CHECK(config.seed == 42);
    CHECK(config.name == "run");          // default
    CHECK(config.threads == 1);           // default
    CHECK(config.replications == 200);    // default
    CHECK(config.law == "thm2");          // default
    CHECK(config.scheme == "exact_total");
    CHECK(config.declared_beta == 2.0);   // compound_poisson default
    CHECK(config.rate_param == 2.0);      // follows declared beta under thm2
    REQUIRE(config.atoms.size() == 2);
    CHECK(config.atoms[0].z[0] == 0.5);
    CHECK(config.atoms[1].z[0] == -0.5);
    CHECK(config.atoms[1].rate == 1.0);
    CHECK(config.n_grid == std::vector<std::size_t>{8, 16, 32, 64});

    // the echo is valid JSON and carries the filled defaults
    const auto echo = nlohmann::json::parse(config.to_json());
    CHECK(echo["plan"]["replications"].get<std::size_t>() == 200);
    CHECK(echo["model"]["beta"].get<double>() == 2.0);
    CHECK(echo["kind"].get<std::string>() == "poc");
  }

  TEST_CASE("missing seed is reported by name") {
    const std::string text = std::string(kMinimalPoc);
    const std::string no_seed = [&] {
      std::string t = text;
      const auto at = t.find("seed = 42\n");
      t.erase(at, 10);
      return t;
    }();
    try {
      parse_config_text(no_seed);
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "missing key: seed"));
    }
  }

  TEST_CASE("alpha domain error matches the documented message") {
    const char* text = R"(
kind = noise-validate
seed = 1
[model]
type = stable
alpha = 2.5
)";
    try {
      parse_config_text(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "alpha out of (0,2)"));
    }
  }

  TEST_CASE("unknown keys and sections are rejected and all errors are collected") {
    const char* text = R"(
kind = poc
seed = 1
typo_key = 3

[model]
type = stable
alpha = 2.5
colour = blue

[coefficients]
type = stable_ou

[initial]
type = point

[grid]
horizon = 1.0

[plan]
n_grid = 8, 16, 32, 64
replications = 10

[picard]
particles = 100
)";
    try {
      parse_config_text(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "unknown key: typo_key"));
      CHECK(has_error(err, "unknown key: model.colour"));
      CHECK(has_error(err, "alpha out of (0,2)"));
      CHECK(has_error(err, "replications must be >= 50"));
      CHECK(has_error(err, "section [picard] does not apply to kind poc"));
      CHECK(err.errors.size() >= 5);  // every problem in one pass
    }
  }

  TEST_CASE("syntax problems carry line numbers") {
    const char* text = "kind = poc\nseed = 1\nnot a kv line\n[broken\n";
    try {
      parse_config_text(text, "test.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "test.cfg:3"));
      CHECK(has_error(err, "test.cfg:4"));
      CHECK(has_error(err, "malformed section header"));
    }
  }

  TEST_CASE("duplicate keys and sections are errors") {
    const char* text = R"(
kind = nonuniqueness
seed = 1
seed = 2

[nonuniqueness]
beta = 0.5
beta = 0.6
)";
    try {
      parse_config_text(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "duplicate key 'seed'"));
      CHECK(has_error(err, "duplicate key 'beta'"));
    }
  }

  TEST_CASE("malformed values name the section and key") {
    const char* text = R"(
kind = nonuniqueness
seed = 1
threads = many

[nonuniqueness]
beta = half
steps = -4
)";
    try {
      parse_config_text(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(has_error(err, "bad value for threads: 'many'"));
      CHECK(has_error(err, "bad value for nonuniqueness.beta: 'half'"));
      CHECK(has_error(err, "bad value for nonuniqueness.steps: '-4'"));
    }
  }

  TEST_CASE("nonuniqueness needs no model block") {
    const char* text = R"(
kind = nonuniqueness
name = branches
seed = 9
[nonuniqueness]
beta = 0.5
horizon = 1.0
steps = 64
)";
    const RunConfig config = parse_config_text(text);
    CHECK(config.kind == RunKind::NonUniqueness);
    CHECK(config.nu_beta == 0.5);
    CHECK(config.nu_steps == 64);
    CHECK(config.name == "branches");
  }

  TEST_CASE("stable model accepts picard kind keys") {
    const char* text = R"(
kind = picard
seed = 3
[model]
type = stable
alpha = 1.5
[coefficients]
type = sin_mean
a = -0.5
c = 0.4
s = 1.0
[initial]
type = gaussian
value = 0.0
sd = 1.0
[grid]
horizon = 0.5
steps = 25
[picard]
particles = 2000
max_iters = 8
min_iters = 5
tol = 1e-4
common_noise = false
)";
    const RunConfig config = parse_config_text(text);
    CHECK(config.kind == RunKind::Picard);
    CHECK(config.picard_particles == 2000);
    CHECK(config.picard_min_iters == 5);
    CHECK(config.declared_beta == doctest::Approx(1.0).epsilon(0.21));
    CHECK_FALSE(config.common_noise);
  }

  TEST_CASE("presets scale the sampling budget") {
    RunConfig config = parse_config_text(kMinimalPoc);
    const std::size_t base_reps = config.replications;
    apply_preset(config, "quick");
    CHECK(config.replications == base_reps);
    apply_preset(config, "full");
    CHECK(config.replications == 4 * base_reps);
    CHECK_THROWS_AS(apply_preset(config, "huge"), ParameterError);
  }

  TEST_CASE("parse_config reports unreadable paths") {
    CHECK_THROWS_AS(parse_config("/nonexistent/path.cfg"), ConfigError);
  }
}
