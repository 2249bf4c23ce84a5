#pragma once
// Experiment driver: takes a validated RunConfig, runs the configured
// experiment, and writes its artifacts (CSV tables, SVG plots, a JSON
// report) plus manifest.json under config.out_dir.  The manifest lists
// every written file with its size and content hash, so a run can be
// checked for byte-level reproducibility.

#include "mckv/config.hpp"

namespace mckv {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitValidation = 2;  // config rejected or plan unusable
inline constexpr int kExitBlowUp = 3;      // abort fraction over the cap
inline constexpr int kExitThreshold = 4;   // a quantitative gate failed

// Returns one of the exit codes above.  Validation problems print to
// stderr; progress and artifact paths print to stdout.  IO failures
// propagate as IoError (the caller maps those to a generic failure).
int run_experiment(const RunConfig& config);

}  // namespace mckv
