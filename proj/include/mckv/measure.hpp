#pragma once
// Empirical measures, marginal flows, and exact Wasserstein distances at
// Monte Carlo scale.
//
// Conventions: W_beta uses Euclidean ground distance raised to beta, with the
// outer exponent 1/beta applied for beta >= 1 and omitted for beta < 1 (the
// beta < 1 object is itself a metric).  Likewise M_beta takes the outer root
// only for beta >= 1.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mckv/grid.hpp"

namespace mckv {

struct EmpiricalMeasure {
  int dim = 1;
  std::vector<double> pts;  // n * dim, point-major

  EmpiricalMeasure() = default;
  EmpiricalMeasure(int d, std::vector<double> p);

  std::size_t size() const { return pts.size() / static_cast<std::size_t>(dim); }
  std::span<const double> point(std::size_t i) const {
    return {pts.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

// Exact W_1 on the line for arbitrary sample counts, via the quantile
// coupling.  Both measures must have dim == 1.
double w1_exact_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Exact W_beta on the line for beta >= 1 (monotone coupling is optimal for
// convex costs).  Arbitrary sample counts.
double w_beta_exact_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double beta);

// Exact W_beta between equal-size clouds in any dimension by optimal
// assignment on the |x-y|^beta cost matrix.  O(n^3); refuses n above `cap`.
double w_beta_exact_matching(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                             double beta, std::size_t cap = 512);

// Dispatcher: quantile coupling when dim == 1 and beta >= 1, assignment
// otherwise.
double w_beta(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double beta,
              std::size_t cap = 512);

// M_beta(mu): mean of |x|^beta, with outer exponent 1/beta for beta >= 1.
double moment_m_beta(const EmpiricalMeasure& mu, double beta);

// Time-indexed marginal flow.  Either a mean vector per node (enough for
// coefficients that read only the measure mean) or a full particle cloud per
// node.  Evaluation between nodes is piecewise constant, left-continuous:
// the value on [t_k, t_{k+1}) is the node-k value, matching the frozen-
// coefficient Euler step.
struct MeasureFlow {
  enum class Rep { MeanOnly, Cloud };

  Rep rep = Rep::MeanOnly;
  std::shared_ptr<const TimeGrid> grid;
  int dim = 1;
  std::vector<double> means;   // MeanOnly: num_nodes * dim
  std::size_t cloud_size = 0;  // Cloud: points per node
  std::vector<double> clouds;  // Cloud: node-major, num_nodes * cloud_size * dim

  static MeasureFlow constant_mean(std::shared_ptr<const TimeGrid> grid,
                                   std::span<const double> mean);
  static MeasureFlow constant_cloud(std::shared_ptr<const TimeGrid> grid,
                                    const EmpiricalMeasure& cloud);

  std::span<const double> mean_at_node(std::size_t k) const;
  EmpiricalMeasure cloud_at_node(std::size_t k) const;
  std::size_t node_for_time(double t) const { return grid->floor_index(t); }

  void validate() const;
};

// sup over shared grid nodes of W_beta between the node measures.  Flows must
// share grid, dim, and representation.  MeanOnly flows compare means as point
// masses.  Also fills `profile` (per-node distances) when non-null.
double flow_distance(const MeasureFlow& f, const MeasureFlow& g, double beta,
                     std::vector<double>* profile = nullptr);

namespace detail {
// Minimal-cost perfect matching on an n x n dense cost matrix (row-major),
// by shortest augmenting paths with potentials.  Returns column assigned to
// each row and the total cost.
std::pair<std::vector<int>, double> solve_assignment(std::span<const double> cost,
                                                     std::size_t n);

// W_1 between two 1-d samples that are ALREADY sorted ascending.  Hot path
// for per-node distances where the caller keeps clouds sorted incrementally.
double w1_sorted_1d(std::span<const double> x, std::span<const double> y);
}  // namespace detail

}  // namespace mckv
