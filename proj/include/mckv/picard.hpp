#pragma once
// Fixed-point construction of the mean-field law.
//
// phi takes a measure flow, solves the frozen-flow SDE with M independent
// paths, and returns their empirical marginal flow on the base grid.  The
// mean-field solution is the fixed point of phi; solve_fixed_point iterates
// from the constant-in-time initial flow and reports per-iteration flow
// distances, contraction ratios, and a Monte Carlo noise floor.
//
// Sampling layout per application k (0-based):
//   main   noise {master, kPicard + k,     2k + 2, path j}
//   twin   noise {master, kPicardTwin + k, 2k + 3, path j}
// and the initial draw of path j reuses the lineage's replication under
// purpose kInitial.  Fresh noise and fresh initial draws per application:
// phi acts on laws, each application is an independent Monte Carlo estimate.
// common_noise pins the main lineage across iterations instead (variance
// reduction for the delta estimates; the twins stay fresh).
//
// The noise floor at iteration k is flow_distance between the main output
// and an independent twin estimate of the same input flow.  Contraction
// claims are made only for deltas above this floor; convergence is declared
// at delta < tol or delta <= 2 * floor (the map is resolved to Monte Carlo
// accuracy), never before min_iters applications.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mckv/coefficients.hpp"
#include "mckv/engine.hpp"
#include "mckv/errors.hpp"
#include "mckv/levy.hpp"
#include "mckv/measure.hpp"

namespace mckv {

struct PicardConfig {
  std::size_t particles_m = 1000;  // cloud size per application, >= 2
  std::size_t max_iters = 8;
  std::size_t min_iters = 3;
  double tol = 1e-4;  // > 0
  double beta = 1.0;  // metric order for flow_distance
  SmallJumpScheme scheme = SmallJumpScheme::ExactTotal;
  bool common_noise = false;
  int threads = 1;

  void validate() const;
};

struct ContractionReport {
  std::vector<double> delta;        // delta[k] = dist(flow_{k+1}, flow_k)
  std::vector<double> noise_floor;  // floor[k], same indexing
  std::vector<double> ratio;        // ratio[k] = delta[k+1] / delta[k]
  bool converged = false;
  std::size_t iterations = 0;  // completed phi applications

  std::string to_json() const;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(ContractionReport rep, const std::string& what)
      : std::runtime_error(what), report(std::move(rep)) {}
  ContractionReport report;
};

// One application of phi to `flow`.  `application` selects the seed lineage
// block as described above; `twin` switches to the twin block.
MeasureFlow apply_phi(const LevyModel& model, const CoefficientSet& coeffs,
                      const MeasureFlow& flow, const TimeGrid& base_grid,
                      const PicardConfig& config, std::uint64_t master,
                      std::size_t application, bool twin, const InitialSampler& initial);

// Iterates phi from the constant flow of the M-sample initial cloud.
// Throws NonConvergenceError (carrying the report) after max_iters without
// convergence; BlowUpError propagates.
std::pair<MeasureFlow, ContractionReport> solve_fixed_point(
    const LevyModel& model, const CoefficientSet& coeffs, const TimeGrid& base_grid,
    const PicardConfig& config, std::uint64_t master, const InitialSampler& initial);

// Geometric mean of the delta ratios whose numerator and denominator both
// sit above their noise floors.  Returns 0 when every ratio is floor-bound
// (the map contracted to Monte Carlo resolution).  Needs >= 3 deltas.
double contraction_ratio(const ContractionReport& report);

}  // namespace mckv
