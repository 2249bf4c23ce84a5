#pragma once
// Mean-field particle systems and their coupled limit copies.
//
// Scheme: explicit Euler on a jump-adapted grid.  Over a step the drift uses
// the state and measure frozen at the step start; at the step's end node the
// big jumps scheduled there are applied with sigma evaluated at the pre-jump
// state and the pre-jump (post-advance) measure.  Interacting systems read
// their own empirical measure; limit copies read a frozen MeasureFlow, so a
// particle-system run and a limit-copy run with the same seed lineage consume
// identical noise and initial draws path by path.  That synchronous coupling
// is what the chaos experiments measure.
//
// Layout: ensembles are component-major (comps[j*count + i]) so the per-step
// updates are straight kernel calls over contiguous arrays.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mckv/coefficients.hpp"
#include "mckv/grid.hpp"
#include "mckv/levy.hpp"
#include "mckv/measure.hpp"
#include "mckv/rng.hpp"

namespace mckv {

struct EnsembleState {
  double time = 0.0;
  int dim = 1;
  std::size_t count = 0;
  std::vector<double> comps;  // dim * count, component-major

  EnsembleState() = default;
  EnsembleState(int d, std::size_t n);

  double* comp(int j) { return comps.data() + static_cast<std::size_t>(j) * count; }
  const double* comp(int j) const { return comps.data() + static_cast<std::size_t>(j) * count; }

  std::vector<double> mean() const;
  EmpiricalMeasure to_measure() const;  // point-major copy
};

// Trajectories over every union-grid node plus per-particle path statistics.
struct PathEnsemble {
  std::shared_ptr<const TimeGrid> grid;
  int dim = 1;
  std::size_t count = 0;
  std::vector<double> states;    // node-major blocks of dim*count, component-major
  std::vector<double> sup_norm;  // per particle, max_k |X_{t_k}|

  std::span<const double> state_block(std::size_t k) const {
    const std::size_t stride = static_cast<std::size_t>(dim) * count;
    return {states.data() + k * stride, stride};
  }
  EmpiricalMeasure measure_at_node(std::size_t k) const;
};

using InitialSampler = std::function<void(RandomStream&, std::span<double>)>;
InitialSampler point_mass_initial(std::vector<double> x0);
InitialSampler gaussian_initial(std::vector<double> mean, double sd);
// One-sided Pareto radius, P(R > r) = (r/scale)^-exponent for r >= scale,
// with a uniform direction.  Finite beta-moments exactly for beta < exponent.
InitialSampler pareto_initial(double exponent, double scale);

// Shared driving noise for an ensemble: one union grid covering every
// particle's big jumps, the per-step compensated small increments in a
// node-major [node][component][particle] block, and the event list.
struct EnsembleNoise {
  std::shared_ptr<const TimeGrid> grid;  // base refined with all events
  std::shared_ptr<const TimeGrid> base;
  std::vector<std::size_t> base_node_index;  // base node k -> union node index
  int dim = 1;
  std::size_t count = 0;
  std::vector<double> small;  // num_steps * dim * count

  struct Event {
    std::size_t node = 0;  // union node index where the jump applies
    std::size_t particle = 0;
    double norm = 0.0;
    std::vector<double> size;
  };
  std::vector<Event> events;  // sorted by node

  std::span<const double> step_block(std::size_t k) const {
    const std::size_t stride = static_cast<std::size_t>(dim) * count;
    return {small.data() + k * stride, stride};
  }
};

// Deterministic in (model, base grid, count, master, replication, scheme):
// particle i's draws come from lineage {master, kNoise, replication, i},
// events first, then small increments on the union grid.
EnsembleNoise build_ensemble_noise(const LevyModel& model, const TimeGrid& base_grid,
                                   std::size_t count, std::uint64_t master,
                                   std::uint64_t replication, SmallJumpScheme scheme);

// One system stepped on shared noise.  frozen_flow == nullptr means the
// system is interacting (reads its own empirical measure); otherwise drift
// and sigma read the flow, evaluated left-continuously in time.
// truncation_level < inf drops events with |size| >= level and adds the
// re-compensation drift for the annulus [1, level).
struct SystemSpec {
  const CoefficientSet* coeffs = nullptr;
  const MeasureFlow* frozen_flow = nullptr;
  double truncation_level = kInf;
};

// Advances `state` over one step of length dt: Euler advance with the given
// frozen measure view, then applies `node_events` (already filtered) at the
// end node.  `increments` is the dim*count component-major noise block for
// the step; `comp_rate` (dim values) is the truncation drift, may be empty.
// Exposed mainly for tests; simulations go through the runners below.
void step_particle_system(EnsembleState& state, const CoefficientSet& coeffs,
                          const MeasureView& frozen, double dt,
                          std::span<const double> increments,
                          std::span<const EnsembleNoise::Event> node_events,
                          std::span<const double> comp_rate);

// Observer: called at node 0 after initialization and after every step with
// the current node index and one state per system (same order as specs).
using NodeObserver =
    std::function<void(std::size_t node, std::span<const EnsembleState> states)>;

// Steps all systems in lockstep over the shared noise.  Initial conditions
// come from lineage {master, kInitial, replication, i} and are shared across
// systems.  Throws BlowUpError on non-finite states.
void run_coupled_systems(const LevyModel& model, const EnsembleNoise& noise,
                         std::span<const SystemSpec> systems, const InitialSampler& initial,
                         std::uint64_t master, std::uint64_t replication,
                         const NodeObserver& observer);

// Interacting N-particle system; returns full trajectories on the union grid.
PathEnsemble simulate_particle_system(const LevyModel& model, const CoefficientSet& coeffs,
                                      const TimeGrid& base_grid, std::size_t count,
                                      std::uint64_t master, std::uint64_t replication,
                                      SmallJumpScheme scheme, const InitialSampler& initial);

// N independent copies of the limit SDE driven by the *same* noise and
// initial draws as simulate_particle_system with equal arguments, with the
// measure argument frozen to `flow`.
PathEnsemble simulate_coupled_limit_copies(const LevyModel& model,
                                           const CoefficientSet& coeffs,
                                           const MeasureFlow& flow, const TimeGrid& base_grid,
                                           std::size_t count, std::uint64_t master,
                                           std::uint64_t replication, SmallJumpScheme scheme,
                                           const InitialSampler& initial);

// Precomputed per-node views of a frozen flow: cloud objects, mean vectors,
// and coefficient summaries.  Many paths stepped against the same flow share
// one PreparedFlow so the per-step cost is a table lookup.  Summaries are
// evaluated once per flow node, at the node time (the piecewise-constant
// value the step would see anyway).
struct PreparedFlow {
  const MeasureFlow* flow = nullptr;
  const CoefficientSet* coeffs = nullptr;
  std::vector<std::vector<double>> node_means;
  std::vector<EmpiricalMeasure> node_clouds;       // Cloud rep only
  std::vector<std::vector<double>> node_summaries; // only when coeffs summarize

  static PreparedFlow make(const MeasureFlow& flow, const CoefficientSet& coeffs);
};

// One independent frozen-measure path on its own jump-adapted grid (no
// ensemble, no interaction).  Returns the positions at the base grid nodes.
// Used for Picard iterates and reference clouds.  `prepared`, when given,
// must be PreparedFlow::make(flow, coeffs); pass it when simulating many
// paths against one flow.
struct FrozenPath {
  std::vector<double> base_states;  // num_base_nodes * dim, node-major
  double sup_norm = 0.0;
};
FrozenPath simulate_frozen_path(const LevyModel& model, const CoefficientSet& coeffs,
                                const MeasureFlow& flow, const TimeGrid& base_grid,
                                const SeedLineage& lineage, SmallJumpScheme scheme,
                                const InitialSampler& initial,
                                const PreparedFlow* prepared = nullptr);

// Mean flow of the linear model: m(t) = exp((A + A') t) m0 on the grid
// nodes.  MeanOnly representation.
MeasureFlow stable_ou_mean_flow(int dim, std::span<const double> a_mat,
                                std::span<const double> a_prime_mat,
                                std::span<const double> m0,
                                std::shared_ptr<const TimeGrid> grid);

}  // namespace mckv
