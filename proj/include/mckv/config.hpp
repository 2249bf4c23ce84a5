#pragma once
// Experiment configuration: a strict INI-style text format parsed into
// RunConfig.  Strictness is the point: unknown sections or keys, duplicate
// keys, and malformed values are all errors, and validation reports every
// problem at once instead of stopping at the first.
//
// Format: `key = value` lines, `[section]` headers, `#` comments, blank
// lines ignored.  Top-level keys (kind, name, seed, threads, out_dir) come
// before the first section.  Lists are comma separated; compound-Poisson
// atoms are size:rate pairs.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mckv/levy.hpp"

namespace mckv {

// Carries every collected problem; what() joins them.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::vector<std::string> problems, const std::string& what)
      : std::runtime_error(what), errors(std::move(problems)) {}
  std::vector<std::string> errors;
};

enum class RunKind { Poc, Truncation, Picard, NonUniqueness, NoiseValidate };

struct RunConfig {
  RunKind kind = RunKind::Poc;
  std::string name = "run";
  std::uint64_t seed = 0;  // mandatory in the file; no wall-clock default
  int threads = 1;
  std::string out_dir = "out";

  // [model]
  std::string model_type;  // "stable" | "compound_poisson"
  double alpha = 1.5;
  int dim = 1;
  double declared_beta = 0.0;  // 0 -> chosen per model type
  std::vector<CompoundPoissonAtom> atoms;

  // [coefficients]
  std::string coeff_type;  // "stable_ou" | "sin_mean" | "moment_drift"
  double coeff_a = 0.0;
  double coeff_a_prime = 0.0;
  double coeff_b = 1.0;
  double coeff_c = 0.0;
  double coeff_s = 1.0;
  double coeff_beta = 1.0;

  // [initial]
  std::string initial_type = "point";  // "point" | "gaussian" | "pareto"
  double initial_value = 0.0;
  double initial_sd = 1.0;
  double pareto_exponent = 3.0;
  double pareto_scale = 1.0;

  // [grid]
  double horizon = 1.0;
  std::size_t steps = 50;

  // [plan]  (poc, truncation)
  std::vector<std::size_t> n_grid;
  std::size_t replications = 200;
  std::string law = "thm2";  // "thm2" | "thm3"
  double rate_param = 0.0;   // 0 -> beta/alpha of the model
  std::string scheme = "exact_total";  // "exact_total" | "inner_cutoff"
  std::size_t ref_cloud_size = 0;
  double slope_tolerance = 0.0;  // 0 -> report only, no pass/fail gate

  // [truncation]
  std::vector<double> truncation_levels;
  std::vector<std::size_t> moment_grid;  // optional moment-curve levels
  std::size_t moment_paths = 100000;

  // [picard]
  std::size_t picard_particles = 1000;
  std::size_t picard_max_iters = 8;
  std::size_t picard_min_iters = 3;
  double picard_tol = 1e-4;
  double metric_beta = 1.0;
  bool common_noise = false;

  // [nonuniqueness]
  double nu_beta = 0.5;
  double nu_horizon = 1.0;
  std::size_t nu_steps = 256;

  // [noise_validate]
  std::size_t validate_paths = 10000;
  double significance = 0.01;
  double validate_horizon = 1.0;

  // Full echo with every default filled in, for the run manifest.
  std::string to_json() const;
};

// Parses and validates; throws ConfigError listing ALL problems found.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "config");
RunConfig parse_config(const std::string& path);

// Budget presets.  "quick" is the file as written (desk scale); "full"
// scales replications, Picard particles, moment paths, and validation paths
// by 4 for tighter error bars.  Unknown names throw ParameterError.
void apply_preset(RunConfig& config, const std::string& preset);

}  // namespace mckv
