#pragma once
// Levy driving noise: models, samplers, and per-path realizations.
//
// A model describes the jump measure nu on R^d.  Jumps split at |z| = 1:
// the part inside the unit ball enters the driver compensated, the part
// outside enters as raw compound-Poisson events.  A realization on a grid
// stores per-step "small" increments (small jumps plus their compensator,
// already aggregated per step), the explicit big-jump events, and a constant
// drift rate that becomes nonzero only when truncation re-compensates the
// annulus [1, R).
//
// Realizations are pure functions of (model, grid, lineage), so coupled and
// truncated variants of a run regenerate identical noise from the seed
// lineage instead of shipping arrays around.

#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "mckv/grid.hpp"
#include "mckv/rng.hpp"

namespace mckv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct BigJumpEvent {
  double time = 0.0;
  std::vector<double> size;  // d components
};

struct NoiseRealization {
  std::shared_ptr<const TimeGrid> grid;
  SeedLineage lineage;
  int dim = 1;
  double truncation_level = kInf;   // R; events with |size| >= R are absent
  std::vector<double> small;        // num_steps * dim, step-major
  std::vector<BigJumpEvent> events; // sorted by time; every time is a grid node
  std::vector<double> comp_rate;    // d; drift per unit time from truncation

  std::span<const double> step_increment(std::size_t k) const {
    return {small.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

// How the compensated small-jump part is synthesized per step.
//  ExactTotal   draw the exact stable increment and subtract the step's big
//               events, so small + events is exactly alpha-stable.  Isotropic
//               stable models only.
//  InnerCutoff  compound Poisson on [eps_k, 1) plus a Gaussian refinement for
//               |z| < eps_k, with eps_k = min(1, dt_k^{1/alpha}).  This is the
//               route whose truncated totals have the bounded-jump law.
// Finite-activity models (compound Poisson, tabulated radial) sample their
// small jumps exactly; the scheme flag is ignored for them.
enum class SmallJumpScheme { ExactTotal, InnerCutoff };

struct CompoundPoissonAtom {
  std::vector<double> z;  // jump size, != 0
  double rate = 0.0;      // intensity, > 0
};

class LevyModel {
 public:
  enum class Kind { IsotropicStable, CompoundPoisson, RadialDensity };

  // Rotation-invariant alpha-stable jump measure with radial intensity
  // nu(|z| in dr) = K_{alpha,d} r^{-1-alpha} dr and uniform directions,
  // normalized so that increments have characteristic function
  // exp(-t |u|^alpha).  Requires alpha in (0,2) and declared moment index
  // beta in (0, alpha).
  static LevyModel isotropic_stable(double alpha, int dim, double beta);

  // Finite list of fixed jump sizes with intensities.  beta in (0, 2].
  static LevyModel compound_poisson(std::vector<CompoundPoissonAtom> atoms, int dim,
                                    double beta);

  // Isotropic measure with tabulated radial density: nu(|z| in dr) = g(r) dr,
  // g piecewise linear on the strictly increasing abscissae r.  Finite
  // activity by construction.  beta in (0, 2].
  static LevyModel radial_density(std::vector<double> r, std::vector<double> g, int dim,
                                  double beta);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double declared_beta() const { return beta_; }
  double alpha() const;  // IsotropicStable only
  bool infinite_activity() const { return kind_ == Kind::IsotropicStable; }

  // nu({a <= |z| < b}) for 0 <= a <= b <= inf (a > 0 for stable).
  double rate_annulus(double a, double b) const;

  // int_{a <= |z| < b} |z|^p nu(dz); +inf when divergent.
  double radial_moment(double p, double a, double b) const;

  // int_{a <= |z| < b} z nu(dz); zero for the isotropic kinds.
  std::vector<double> mean_annulus(double a, double b) const;

  // One jump size conditioned on {a <= |z| < b}.  rate_annulus(a,b) must be
  // positive.
  void sample_annulus(double a, double b, RandomStream& stream, std::span<double> out) const;

  // Per-component standard deviation of the Gaussian refinement replacing
  // jumps below eps (InnerCutoff), per unit time.
  double refinement_sd(double eps) const;

  // Zero Levy measure: no jumps, zero rates everywhere.  Valid as a
  // placeholder in plan structs; the factories build the real models.
  LevyModel() = default;

 private:
  Kind kind_ = Kind::CompoundPoisson;
  int dim_ = 1;
  double beta_ = 1.0;

  // stable
  double alpha_ = 0.0;
  double intensity_k_ = 0.0;  // K_{alpha,d} in nu(dz) = K |z|^{-d-alpha} dz

  // compound poisson
  std::vector<CompoundPoissonAtom> atoms_;

  // radial table
  std::vector<double> rad_r_, rad_g_, rad_cum_;  // cum_[i] = nu(r < r_i)
};

// int_{|z| >= 1} |z|^p nu(dz), +inf if divergent.  The moment condition the
// rate theory keys on.
double beta_moment(const LevyModel& model, double p);

// Exact alpha-stable increment over dt: characteristic function
// exp(-dt |u|^alpha).  dt = 0 gives zeros.  out.size() == model dim.
void sample_stable_increment(double alpha, double dt, RandomStream& stream,
                             std::span<double> out);

// Events of nu restricted to {1 <= |z| < level} on [0, horizon], sorted by
// time.  level > 1; level = kInf for no ceiling.  Draw order (count, then
// time/size pairs) is part of the reproducibility contract.
std::vector<BigJumpEvent> sample_big_jumps(const LevyModel& model, double horizon,
                                           double level, RandomStream& stream);

// Per-step compensated small-jump increments on a grid already refined with
// the events' times.  Returns num_steps * dim values, step-major.
std::vector<double> synthesize_small_jump_increments(const LevyModel& model,
                                                     const TimeGrid& grid,
                                                     std::span<const BigJumpEvent> events,
                                                     RandomStream& stream,
                                                     SmallJumpScheme scheme);

// Assembles a full realization: events first, then smalls, from a single
// stream keyed by `lineage`.  The grid is the base grid refined with this
// path's own events.
NoiseRealization synthesize_realization(const LevyModel& model, const TimeGrid& base_grid,
                                        const SeedLineage& lineage, SmallJumpScheme scheme,
                                        double level = kInf);

// Derived realization with jumps of norm >= level dropped and the annulus
// [1, level) compensated.  level >= 1; level = inf returns a copy.  Shares
// grid and lineage with the input.
NoiseRealization truncate_realization(const LevyModel& model, const NoiseRealization& noise,
                                      double level);

}  // namespace mckv
